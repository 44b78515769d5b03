"""Command-line experiment runner.

    annealtherm <command> --config FILE [--out DIR] [--seed INT]

Exit codes: 0 success, 1 invalid config or input, 2 runtime failure,
3 sweep finished with some failed cells.  ``ANNEALTHERM_THREADS`` sets the
worker count for independent cells; per-cell seeds are derived from the
run seed and the cell index, so results do not depend on it.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .model import ChainSpec, ModelError, build_ferromagnetic_chain, build_frustrated_chain, load_chain
from .schedule import (MAX_RATE_PER_US, ProtocolParams, ScheduleError, check_hardware_limits,
                       default_schedule, forward_protocol, load_schedule, reverse_protocol, save_protocol)

log = logging.getLogger("annealtherm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

EXACT_HEADER = ("n", "s", "A_GHz", "B_GHz", "T_mK", "e_ising", "m2", "source")
QMC_HEADER = ("n", "s", "A_GHz", "B_GHz", "T_mK", "M", "e_ising", "e_err", "m2", "m2_err", "tau_int", "seed")
NORM_HEADER = ("n", "s_p", "epsilon", "rate_min_us_inv")
NORM_FIT_HEADER = ("s_p", "slope", "n_points")

COMMANDS = ("exact", "qmc", "ame-evolve", "quench-sweep", "norm-scaling", "temp-sweep", "protocol-check")


class RuntimeFailure(RuntimeError):
    pass


def thread_count() -> int:
    raw = os.environ.get("ANNEALTHERM_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"ANNEALTHERM_THREADS must be an integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError("ANNEALTHERM_THREADS must be >= 1")
    return k


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint32)[0])


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# -- building blocks from config --------------------------------------------

def _schedule(cfg: ExperimentConfig):
    src = cfg.get("schedule", "source")
    if src == "default":
        return default_schedule()
    with open(src) as fh:
        return load_schedule(fh)


def _chains(cfg: ExperimentConfig, min_n: int = 3) -> list[ChainSpec]:
    m = cfg["model"]
    if m["chain_file"]:
        with open(m["chain_file"]) as fh:
            return [load_chain(fh)]
    out = []
    for n in m["n"]:
        if n < min_n:
            raise ConfigError(f"[model] n = {n} is below the minimum of {min_n}")
        small = n < 3
        if m["kind"] == "frustrated":
            out.append(build_frustrated_chain(n, m["flipped_edge"], allow_small=small))
        else:
            out.append(build_ferromagnetic_chain(n, allow_small=small))
    return out


def _bath(cfg: ExperimentConfig):
    from .ame import BathParams

    b = cfg["bath"]
    return BathParams(b["temperature"], b["coupling"], b["cutoff"])


def _protocol(cfg: ExperimentConfig, s_p: float, rate_f: float):
    p = cfg["protocol"]
    params = ProtocolParams(s_p, p["t_p"], p["rate_i"], rate_f, rate_cap=math.inf)
    return (forward_protocol if p["direction"] == "forward" else reverse_protocol)(params)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_meta(out: Path, command: str, cfg: ExperimentConfig, extra: dict):
    import numba
    import scipy

    from ._accel import backend

    meta = {
        "command": command,
        "config": cfg.source,
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": {
            "annealtherm": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "backend": backend(),
        "threads": thread_count(),
    }
    meta.update(extra)
    (out / f"{command}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# -- validation ---------------------------------------------------------------

def validate(command: str, cfg: ExperimentConfig):
    """Checks that depend on the command; raises ConfigError before any work."""
    from .exact import ED_MAX_SITES

    errors = []
    p, s = cfg["protocol"], cfg["solver"]
    method = s["method"]
    try:
        chains = _chains(cfg, min_n=2 if command == "norm-scaling" else 3)
    except (ConfigError, ModelError, OSError) as exc:
        raise ConfigError(f"[model] {exc}") from None
    try:
        _schedule(cfg)
    except (ScheduleError, OSError) as exc:
        errors.append(f"[schedule] {exc}")
    ns = [c.n for c in chains]
    if command in ("exact", "temp-sweep"):
        if method == "ame":
            errors.append(f"[solver] method = ame is not valid for {command}")
        if method == "ed" and max(ns) > ED_MAX_SITES:
            errors.append(f"[solver] method = ed supports n <= {ED_MAX_SITES}, got n = {max(ns)}")
        if method == "fermion" and not all(c.is_uniform_ferromagnet for c in chains):
            errors.append("[solver] method = fermion needs a uniform ferromagnetic chain")
        if command == "exact" and method == "qmc":
            errors.append("[solver] use the qmc command for method = qmc")
    if command == "qmc" and method != "qmc":
        errors.append("[solver] qmc command needs method = qmc")
    if command in ("ame-evolve", "quench-sweep"):
        if max(ns) > 5:
            errors.append(f"[model] master-equation commands support n <= 5, got n = {max(ns)}")
        if not p["rates"]:
            errors.append("[protocol] rates list is empty")
        if not p["s_p"]:
            errors.append("[protocol] s_p list is empty")
        if command == "ame-evolve" and any(not 0.0 < x < 1.0 for x in p["s_p"]):
            errors.append("[protocol] s_p must lie strictly inside (0, 1) for ame-evolve")
        if command == "quench-sweep" and any(x <= 0.0 for x in p["s_p"]):
            errors.append("[protocol] s_p must be positive for quench-sweep")
    if command == "norm-scaling":
        if max(ns) > 8:
            errors.append(f"[model] norm-scaling supports n <= 8, got n = {max(ns)}")
    if command == "protocol-check":
        if any(not 0.0 < x < 1.0 for x in p["s_p"]):
            errors.append("[protocol] s_p must lie strictly inside (0, 1)")
    if errors:
        raise ConfigError(errors)
    return chains


# -- commands -----------------------------------------------------------------

def _exact_row(args):
    from .exact import ThermalPoint, free_fermion_e_ising, gibbs_expectations

    spec, sched, s, T, method = args
    pt = ThermalPoint.on_schedule(sched, s, T)
    if method == "fermion":
        e, m2 = free_fermion_e_ising(spec, pt), math.nan
    else:
        g = gibbs_expectations(spec, pt)
        e, m2 = g.e_ising, g.m2
    return (spec.n, float(s), pt.A, pt.B, float(T), float(e), float(m2), method)


def _qmc_row(args):
    from .exact import ThermalPoint
    from .qmc import QmcConfig, run_qmc

    spec, sched, s, T, solver, seed = args
    pt = ThermalPoint.on_schedule(sched, s, T)
    qc = QmcConfig(solver["slices"] or None, solver["therm_sweeps"], solver["measure_sweeps"], seed,
                   solver["bins"], solver["trotter_step"])
    r = run_qmc(spec, pt, qc)
    return (spec.n, float(s), pt.A, pt.B, float(T), r.slices, r.e_ising.mean, r.e_ising.stderr,
            r.m2.mean, r.m2.stderr, max(r.e_ising.tau_int, r.m2.tau_int), seed)


def _grid(cfg, chains, sched):
    s = cfg["solver"]
    return [(spec, sched, x, T) for spec in chains for x in s["s_grid"] for T in s["temperatures"]]


def cmd_exact(cfg, chains, out):
    sched = _schedule(cfg)
    method = cfg.get("solver", "method")
    rows = _map(_exact_row, [g + (method,) for g in _grid(cfg, chains, sched)], thread_count())
    _write_csv(out / "exact.csv", EXACT_HEADER, rows)
    return EXIT_OK, {"rows": len(rows)}


def cmd_qmc(cfg, chains, out):
    sched = _schedule(cfg)
    tasks = [g + (cfg["solver"], cell_seed(cfg.seed, k)) for k, g in enumerate(_grid(cfg, chains, sched))]
    rows = _map(_qmc_row, tasks, thread_count())
    _write_csv(out / "qmc.csv", QMC_HEADER, rows)
    return EXIT_OK, {"rows": len(rows)}


def cmd_temp_sweep(cfg, chains, out):
    sched = _schedule(cfg)
    method = cfg.get("solver", "method")
    grid = _grid(cfg, chains, sched)
    if method == "qmc":
        tasks = [g + (cfg["solver"], cell_seed(cfg.seed, k)) for k, g in enumerate(grid)]
        rows = _map(_qmc_row, tasks, thread_count())
        _write_csv(out / "temp_sweep.csv", QMC_HEADER, rows)
        e_col = 6
    else:
        rows = _map(_exact_row, [g + (method,) for g in grid], thread_count())
        _write_csv(out / "temp_sweep.csv", EXACT_HEADER, rows)
        e_col = 5
    # relative spread over temperature at each (n, s)
    spread = {}
    for r in rows:
        spread.setdefault((r[0], r[1]), []).append(r[e_col])
    changes = {f"n={k[0]},s={k[1]!r}": (max(v) - min(v)) / abs(v[0]) if v[0] else math.nan
               for k, v in spread.items()}
    return EXIT_OK, {"relative_change": changes}


def _evolve_cell(args):
    from .ame import AmeRun, evolve

    spec, sched, proto, bath, solver, seed = args
    grid = np.linspace(0.0, proto.duration, solver["record_points"])
    run = AmeRun(spec, sched, proto, bath, solver["rtol"], solver["atol"], grid, seed=seed,
                 pause_tol=solver["pause_tol"])
    return evolve(run)


def cmd_ame_evolve(cfg, chains, out):
    from .ame import write_trajectory_csv
    from .stats import ensemble_from_populations, summarize, write_stats_csv

    sched = _schedule(cfg)
    bath = _bath(cfg)
    p, st = cfg["protocol"], cfg["stats"]
    spec = chains[0]
    keys = [(s_p, r) for s_p in p["s_p"] for r in p["rates"]]
    tasks = [(spec, sched, _protocol(cfg, s_p, r), bath, cfg["solver"], cell_seed(cfg.seed, k))
             for k, (s_p, r) in enumerate(keys)]
    trajs = _map(_evolve_cell, tasks, thread_count())
    stats_rows = []
    files = []
    for k, ((s_p, r), traj) in enumerate(zip(keys, trajs)):
        name = f"trajectory_n{spec.n}_sp{s_p:g}_rate{r:g}.csv"
        with open(out / name, "w", newline="") as fh:
            write_trajectory_csv(traj, fh)
        files.append(name)
        ens = ensemble_from_populations(spec, traj.populations_final, st["gauges"], st["shots"],
                                        cell_seed(cfg.seed, 10_000 + k))
        for obs in ("e_ising", "m2"):
            stats_rows.append(summarize(ens, s_p, obs, st["level"], st["resamples"], cell_seed(cfg.seed, 20_000 + k)))
    with open(out / "stats.csv", "w", newline="") as fh:
        write_stats_csv(stats_rows, fh)
    return EXIT_OK, {"trajectories": files}


def _sweep_cell(args):
    from .ame import quench_sweep

    spec, sched, bath, s_p, rates, p, solver = args
    return quench_sweep(spec, sched, bath, [s_p], rates, rate_i=p["rate_i"], t_p=p["t_p"],
                        closed=solver["closed"], rtol=solver["rtol"], atol=solver["atol"],
                        pause_tol=solver["pause_tol"])


def cmd_quench_sweep(cfg, chains, out):
    from .ame import write_sweep_csv
    from .exact import ThermalPoint, gibbs_expectations

    sched = _schedule(cfg)
    bath = _bath(cfg)
    p = cfg["protocol"]
    spec = chains[0]
    tasks = [(spec, sched, bath, s_p, p["rates"], p, cfg["solver"]) for s_p in p["s_p"]]
    cells = [c for block in _map(_sweep_cell, tasks, thread_count()) for c in block]
    with open(out / "sweep.csv", "w", newline="") as fh:
        write_sweep_csv(cells, fh)
    overlay = []
    for s_p in p["s_p"]:
        g = gibbs_expectations(spec, ThermalPoint.on_schedule(sched, s_p, bath.temperature))
        pt = ThermalPoint.on_schedule(sched, s_p, bath.temperature)
        overlay.append((spec.n, float(s_p), pt.A, pt.B, bath.temperature, g.e_ising, g.m2, "ed"))
    _write_csv(out / "exact.csv", EXACT_HEADER, overlay)
    failed = [c for c in cells if not c.ok]
    for c in failed:
        log.error("cell s_p=%g rate=%g failed: %s", c.s_p, c.rate, c.error)
    code = EXIT_OK if not failed else (EXIT_RUNTIME if len(failed) == len(cells) else EXIT_PARTIAL)
    return code, {"failed_cells": len(failed)}


def _norm_cell(args):
    from .ame import minimal_quench_rate

    spec, sched, s_p, solver = args
    return minimal_quench_rate(spec, sched, s_p, solver["epsilon"], solver["rate_lo"], solver["rate_hi"])


def cmd_norm_scaling(cfg, chains, out):
    from .ame import BracketError, fit_loglog_slope

    sched = _schedule(cfg)
    solver = cfg["solver"]
    s_ps = cfg.get("protocol", "s_p")
    tasks = [(spec, sched, s_p, solver) for s_p in s_ps for spec in chains]
    try:
        rates = _map(_norm_cell, tasks, thread_count())
    except BracketError as exc:
        raise RuntimeFailure(str(exc)) from None
    rows = [(spec.n, float(s_p), solver["epsilon"], float(r)) for (spec, _, s_p, _), r in zip(tasks, rates)]
    _write_csv(out / "norm_scaling.csv", NORM_HEADER, rows)
    fits = []
    for s_p in s_ps:
        pts = [(r[0], r[3]) for r in rows if r[1] == s_p]
        ns = sorted({n for n, _ in pts})
        slope = fit_loglog_slope(*zip(*pts)) if len(ns) >= 2 else math.nan
        fits.append((float(s_p), slope, len(pts)))
    _write_csv(out / "norm_fit.csv", NORM_FIT_HEADER, fits)
    return EXIT_OK, {"slopes": {repr(f[0]): f[1] for f in fits}}


def cmd_protocol_check(cfg, chains, out):
    p = cfg["protocol"]
    cap = MAX_RATE_PER_US if p["hardware_limits"] else None
    lines = []
    bad = 0
    for s_p in p["s_p"]:
        for r in p["rates"]:
            proto = _protocol(cfg, s_p, r)
            report = check_hardware_limits(proto, p["n_a"], rate_cap=cap)
            name = f"protocol_sp{s_p:g}_rate{r:g}.csv"
            with open(out / name, "w", newline="") as fh:
                save_protocol(proto, fh)
            status = "ok" if not report else "VIOLATION"
            lines.append(f"s_p={s_p:g} rate_f={r:g}: {status}")
            lines += [f"  {msg}" for msg in report]
            bad += bool(report)
    text = "\n".join(lines) + "\n"
    (out / "protocol_check.txt").write_text(text)
    sys.stdout.write(text)
    return (EXIT_OK if not bad else EXIT_CONFIG), {"violations": bad}


HANDLERS = {
    "exact": cmd_exact,
    "qmc": cmd_qmc,
    "ame-evolve": cmd_ame_evolve,
    "quench-sweep": cmd_quench_sweep,
    "norm-scaling": cmd_norm_scaling,
    "temp-sweep": cmd_temp_sweep,
    "protocol-check": cmd_protocol_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="annealtherm", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--seed", type=int, help="run seed (overrides [run] seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["run"]["seed"] = args.seed
        if args.out:
            cfg.values["output"]["directory"] = args.out
        thread_count()
        chains = validate(args.command, cfg)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.get("output", "directory"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        code, extra = HANDLERS[args.command](cfg, chains, out)
        _write_meta(out, args.command, cfg, extra)
    except (ConfigError, ScheduleError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any solver failure is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return code


if __name__ == "__main__":
    sys.exit(main())
