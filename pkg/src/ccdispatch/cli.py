"""Command-line front end: ``ccdispatch generate | solve | validate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import primal_dual, report, scenario
from .errors import DispatchError
from .model import config_from_dict, load_yaml, preset_path

log = logging.getLogger("ccdispatch")

WORKERS_ENV = "CCDISPATCH_WORKERS"
FRESH_SEED_OFFSET = 1_000_000

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


@dataclass
class RunSpec:
    config: dict
    scenarios: list = field(default_factory=list)
    ps: list = field(default_factory=list)
    ns: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    eps: float = 1e-4
    out: Path = Path("out")
    fresh: int = 0
    workers: int = 1
    figures: bool = False

    def __post_init__(self):
        for p in self.ps:
            if not 0.0 < p < 1.0:
                raise InputError(f"p must lie in (0, 1), got {p}")
        for n in self.ns:
            if n < 1:
                raise InputError(f"N_s must be at least 1, got {n}")
        if self.eps <= 0:
            raise InputError(f"eps must be positive, got {self.eps}")


def _load_document(args) -> dict:
    if args.config and args.preset:
        raise InputError("give either --config or --preset, not both")
    path = args.config or preset_path(args.preset or "paper_case")
    doc = load_yaml(path)
    if "microgrid" not in doc:
        doc = {"microgrid": doc}
    return doc


def wind_model(doc: dict):
    w = doc.get("wind")
    if w is None:
        raise InputError("config has no 'wind' section; pass --scenarios instead")
    try:
        wecs = scenario.WecsParams(**w.get("wecs", {}))
        corr = scenario.CorrelationSpec(np.array(w["spatial"], dtype=float),
                                        np.array(w["temporal"], dtype=float))
    except KeyError as exc:
        raise InputError(f"wind section lacks {exc}") from None
    farms = int(w.get("farms", corr.n_farms))
    if farms != corr.n_farms:
        raise InputError(f"wind.farms = {farms} but the correlation matrix is {corr.n_farms}x{corr.n_farms}")
    return wecs, corr


def _grid(args, doc):
    exp = doc.get("experiment", {})
    ps = args.p or exp.get("p", [0.95])
    ns = args.ns or exp.get("ns", [100])
    seeds = args.seed or exp.get("seeds", [1])
    eps = args.eps if args.eps is not None else float(exp.get("eps", 1e-4))
    return [float(p) for p in ps], [int(n) for n in ns], [int(s) for s in seeds], eps


def _workers(flag) -> int:
    if flag is not None:
        n = flag
    else:
        env = os.environ.get(WORKERS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise InputError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    if n < 1:
        raise InputError("worker count must be at least 1")
    return n


def _scenario_name(ns: int, seed: int) -> str:
    return f"scenarios_ns{ns}_seed{seed}.csv"


# -- generate ---------------------------------------------------------------

def cmd_generate(args) -> int:
    doc = _load_document(args)
    wecs, corr = wind_model(doc)
    _, ns_list, seeds, _ = _grid(args, doc)
    T = int(doc["microgrid"]["horizon"])
    out = Path(args.out)
    for ns in ns_list:
        if ns < 1:
            raise InputError(f"N_s must be at least 1, got {ns}")
        for seed in seeds:
            sset = scenario.generate(wecs, corr, corr.n_farms, T, ns, seed)
            path = scenario.save_csv(sset, out / _scenario_name(ns, seed))
            print(f"wrote {path} ({ns} x {T})")
    return EXIT_OK


# -- solve ------------------------------------------------------------------

def _cell_dir(out: Path, p: float, ns: int, seed) -> Path:
    return out / "cells" / f"p{p:g}_ns{ns}_seed{seed}"


def run_cell(job: dict) -> dict:
    """Solve one (p, N_s, seed) cell; never raises, failures land in the record."""
    t0 = time.perf_counter()
    rec = {"p": job["p"], "n_samples": job["ns"], "seed": job["seed"], "status": "failed",
           "error": None, "risk_fresh": None}
    try:
        cfg = config_from_dict(job["doc"]["microgrid"])
        if job.get("path"):
            sset = scenario.load_csv(job["path"])
        else:
            wecs, corr = wind_model(job["doc"])
            sset = scenario.generate(wecs, corr, corr.n_farms, cfg.horizon, job["ns"], job["seed"])
        fresh = None
        if job["fresh"] > 0:
            wecs, corr = wind_model(job["doc"])
            fseed = (job["seed"] if isinstance(job["seed"], int) else 0) + FRESH_SEED_OFFSET
            fresh = scenario.generate(wecs, corr, corr.n_farms, cfg.horizon, job["fresh"], fseed)
        rep = primal_dual.run(cfg, sset, job["p"], eps=job["eps"], fresh=fresh)
        report.write_cell(cfg, rep, job["dir"], extra={"seed": job["seed"]})
        rec.update(status="ok", F_u=rep.F_u, F_rec=rep.F_rec, F_saa=rep.F_saa,
                   iterations=rep.iterations, final_gap=float(rep.final_gap),
                   risk_train=rep.risk_train, risk_fresh=rep.risk_fresh)
        if not rep.converged:
            rec["error"] = f"not converged after {rep.iterations} iterations"
    except (DispatchError, InputError, OSError, ValueError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    rec["seconds"] = round(time.perf_counter() - t0, 3)
    return rec


def cmd_solve(args) -> int:
    doc = _load_document(args)
    config_from_dict(doc["microgrid"])  # fail fast on a bad config
    ps, ns_list, seeds, eps = _grid(args, doc)
    spec = RunSpec(config=doc, scenarios=list(args.scenarios or []), ps=ps, ns=ns_list,
                   seeds=seeds, eps=eps, out=Path(args.out), fresh=args.fresh,
                   workers=_workers(args.workers), figures=args.figures)
    if not spec.scenarios:
        wind_model(doc)

    jobs = []
    if spec.scenarios:
        sources = []
        for path in spec.scenarios:
            sset = scenario.load_csv(path)
            sources.append((sset.n_samples, sset.seed if sset.seed is not None else Path(path).stem, path))
        spec.ns = sorted({s[0] for s in sources})
    else:
        sources = [(n, s, None) for n in spec.ns for s in spec.seeds]
    for ns, seed, path in sources:
        for p in spec.ps:
            jobs.append({"doc": doc, "p": p, "ns": ns, "seed": seed, "path": path, "eps": spec.eps,
                         "fresh": spec.fresh, "dir": _cell_dir(spec.out, p, ns, seed)})

    spec.out.mkdir(parents=True, exist_ok=True)
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            cells = list(pool.map(run_cell, jobs))
    else:
        cells = [run_cell(j) for j in jobs]

    for c in cells:
        line = f"p={c['p']:g} N_s={c['n_samples']} seed={c['seed']}: {c['status']}"
        if c["status"] == "ok":
            line += f" F_u={c['F_u']:.4f} F_rec={c['F_rec']:.4f} F_saa={c['F_saa']:.4f} it={c['iterations']}"
        if c["error"]:
            line += f" ({c['error']})"
        print(line)

    rows = report.summary_table(cells, spec.ps, spec.ns)
    report.write_summary(rows, spec.out / "summary.csv")
    report.write_cells(cells, spec.out / "cells.csv")
    print(f"wrote {spec.out / 'summary.csv'}")

    if spec.figures:
        from . import plots
        for j, c in zip(jobs, cells):
            if c["status"] == "ok":
                sched = report.read_schedule(Path(j["dir"]) / "schedule.csv")
                plots.schedule_figure(sched, Path(j["dir"]) / "schedule.png",
                                      f"p={c['p']:g}, N_s={c['n_samples']}, seed {c['seed']}")
        if any(c["status"] == "ok" for c in cells):
            plots.cost_figure(rows, spec.ps, spec.out / "cost_vs_p.png")

    n_failed = sum(c["status"] != "ok" for c in cells)
    if n_failed:
        log.warning("%d of %d cells failed", n_failed, len(cells))
        return EXIT_PARTIAL
    return EXIT_OK


# -- validate ---------------------------------------------------------------

def cmd_validate(args) -> int:
    cell = Path(args.report)
    kv = report.read_keyvalue(cell / "report.txt")
    p = float(args.p) if args.p is not None else float(kv["p"])
    name = "saa_schedule.csv" if args.schedule == "saa" else "schedule.csv"
    sched = report.read_schedule(cell / name)
    sset = scenario.load_csv(args.scenarios)
    g = sched["net_load"]
    if g.shape[0] != sset.horizon:
        raise InputError(f"schedule has {g.shape[0]} slots but {args.scenarios} has {sset.horizon}")
    shifted = g - primal_dual.RISK_ATOL
    joint = scenario.survival_joint(sset, shifted)
    marg = [scenario.survival_marginal(sset, t + 1, shifted[t]) for t in range(sset.horizon)]
    ok = joint >= p - args.slack
    print(f"schedule = {name}")
    print(f"samples = {sset.n_samples}")
    print(f"p = {p!r}")
    print(f"slack = {args.slack!r}")
    print(f"joint_survival = {joint!r}")
    print("marginal_survival = " + " ".join(repr(m) for m in marg))
    print(f"result = {'pass' if ok else 'fail'}")
    return EXIT_OK if ok else EXIT_PARTIAL


# -- entry point ------------------------------------------------------------

def _common(sp):
    sp.add_argument("--config", help="YAML file with microgrid/wind/experiment sections")
    sp.add_argument("--preset", help="bundled configuration name (default paper_case)")
    sp.add_argument("--ns", type=int, nargs="+", help="sample sizes")
    sp.add_argument("--seed", type=int, nargs="+", help="random seeds")
    sp.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccdispatch", description="Chance-constrained microgrid dispatch.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write wind power scenario CSVs")
    _common(g)
    g.set_defaults(func=cmd_generate, p=None, eps=None)

    s = sub.add_parser("solve", help="run the primal-dual method and SAA baseline over a grid")
    _common(s)
    s.add_argument("--p", type=float, nargs="+", help="probability levels")
    s.add_argument("--eps", type=float, help="column generation gap tolerance")
    s.add_argument("--scenarios", nargs="+", help="scenario CSV files to use instead of generating")
    s.add_argument("--fresh", type=int, default=0, metavar="N",
                   help="also score the schedule on N fresh samples")
    s.add_argument("--workers", type=int, help=f"parallel cells (env {WORKERS_ENV})")
    s.add_argument("--figures", action="store_true", help="also render PNG figures")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="out-of-sample risk of a solved cell")
    v.add_argument("--report", required=True, help="cell directory written by solve")
    v.add_argument("--scenarios", required=True, help="scenario CSV to score against")
    v.add_argument("--p", type=float, help="target level (default: the cell's p)")
    v.add_argument("--slack", type=float, default=0.0)
    v.add_argument("--schedule", choices=("recovered", "saa"), default="recovered")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DispatchError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
