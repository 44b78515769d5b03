"""Reference calculations for testing quantum annealers as thermal samplers."""
__version__ = "0.1.0"
