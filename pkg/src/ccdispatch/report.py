"""Plain-text and CSV output for solve results."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .model import MicrogridConfig, Schedule, net_load

SCHEDULE_HEADER = ["t", "P_G", "P_D", "P_B", "L", "net_load"]


def _f(x) -> str:
    return repr(float(x))


def write_schedule(cfg: MicrogridConfig, sched: Schedule, path) -> Path:
    """Per-slot aggregates: total generation, utility load, storage power."""
    path = Path(path)
    g = net_load(cfg, sched)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEDULE_HEADER)
        for t in range(cfg.horizon):
            w.writerow([t + 1, _f(sched.p_g[:, t].sum()), _f(sched.p_d[:, t].sum()),
                        _f(sched.p_b[:, t].sum()), _f(cfg.base_load[t]), _f(g[t])])
    return path


def read_schedule(path) -> dict:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SCHEDULE_HEADER:
        raise ValueError(f"{path}:1: expected header {','.join(SCHEDULE_HEADER)}")
    out = {k: [] for k in SCHEDULE_HEADER}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(SCHEDULE_HEADER):
            raise ValueError(f"{path}:{lineno}: expected {len(SCHEDULE_HEADER)} fields")
        for k, v in zip(SCHEDULE_HEADER, row):
            out[k].append(float(v))
    return {k: np.array(v) for k, v in out.items()}


def write_keyvalue(items: dict, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, float):
                v = _f(v)
            elif isinstance(v, (list, tuple, np.ndarray)):
                v = " ".join(_f(x) if isinstance(x, (float, np.floating)) else str(x) for x in v)
            fh.write(f"{k} = {v}\n")
    return path


def read_keyvalue(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_history(history: list, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        T = len(history[0]["lam"]) if history else 0
        w.writerow(["k", "F_u", "gap", "phi_bar", "phi_k", "columns"] + [f"lam{t + 1}" for t in range(T)])
        for h in history:
            w.writerow([h["k"], _f(h["F_u"]), _f(h["gap"]), _f(h["phi_bar"]), _f(h["phi_k"]),
                        h["columns"]] + [_f(x) for x in h["lam"]])
    return path


def write_columns(columns, alphas: dict, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        T = len(columns[0]) if columns else 0
        w.writerow(["k", "alpha"] + [f"v{t + 1}" for t in range(T)])
        for k, v in enumerate(columns):
            w.writerow([k, _f(alphas.get(k, 0.0))] + [_f(x) for x in v])
    return path


def write_cell(cfg: MicrogridConfig, rep, outdir, extra: dict | None = None) -> Path:
    """Dump one solved grid cell into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    kv = dict(extra or {})
    kv.update({
        "p": float(rep.p),
        "n_samples": rep.n_samples,
        "F_u": rep.F_u,
        "F_rec": rep.F_rec,
        "F_saa": rep.F_saa,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "stop_reason": rep.stop_reason,
        "final_gap": float(rep.final_gap),
        "recovered_from": rep.recovered.k,
        "eps_optimal": rep.recovered.eps_optimal,
        "active": [f"{k}:{a!r}" for k, a in rep.active.items()],
        "risk_train": rep.risk_train,
        "saa_risk_train": rep.saa_risk_train,
    })
    if rep.risk_fresh is not None:
        kv["risk_fresh"] = rep.risk_fresh
    write_keyvalue(kv, outdir / "report.txt")
    write_history(rep.history, outdir / "history.csv")
    write_columns(rep.columns, rep.active, outdir / "columns.csv")
    write_schedule(cfg, rep.recovered.schedule, outdir / "schedule.csv")
    write_schedule(cfg, rep.saa_schedule, outdir / "saa_schedule.csv")
    return outdir


CELL_FIELDS = ["p", "n_samples", "seed", "status", "F_u", "F_rec", "F_saa", "iterations",
               "final_gap", "risk_train", "risk_fresh", "seconds", "error"]


def write_cells(cells: list, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, CELL_FIELDS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for c in cells:
            w.writerow({k: (_f(v) if isinstance(v, float) else ("" if v is None else v))
                        for k, v in c.items()})
    return path


def summary_table(cells: list, ps, ns_list) -> list:
    """Rows of N_s x p holding the seed-averaged recovered cost, plus an SAA column."""
    rows = []
    for ns in ns_list:
        row = {"N_s": ns}
        saa = None
        for p in ps:
            ok = [c for c in cells if c["n_samples"] == ns and c["p"] == p and c["status"] == "ok"]
            row[f"p={p:g}"] = float(np.mean([c["F_rec"] for c in ok])) if ok else float("nan")
            if ok and saa is None:
                saa = float(np.mean([c["F_saa"] for c in ok]))
        row["SAA"] = float("nan") if saa is None else saa
        rows.append(row)
    return rows


def write_summary(rows: list, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0].keys()) if rows else ["N_s"]
        w.writerow(keys)
        for r in rows:
            w.writerow([r[k] if k == "N_s" else f"{r[k]:.6f}" for k in keys])
    return path
