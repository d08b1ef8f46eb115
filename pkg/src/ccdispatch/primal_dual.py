"""Primal-dual column generation over p-efficient points.

The master problem dispatches against a convex combination of generated
points; its coupling multipliers price the next point.  Once no point prices
out, the active points are used one at a time to recover schedules that are
feasible for the sampled chance constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import pep
from . import qp as qpmod
from .errors import DispatchError, InfeasibleError
from .model import MicrogridConfig, Schedule, build_qp, evaluate_cost, net_load, validate_schedule
from .qp import Qp
from .scenario import ScenarioSet, quantile_bound, survival_joint, worst_case

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-9
DUP_TOL = 1e-10
MASTER_TOL = 1e-10
FALLBACK_TOL = 1e-8
RISK_ATOL = 1e-6


@dataclass
class MasterState:
    columns: list
    alphas: np.ndarray
    lam: np.ndarray
    F_u: float
    k: int
    x: np.ndarray = None

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > ACTIVE_TOL)


@dataclass
class Recovery:
    schedule: Schedule
    cost: float
    k: int
    eps_optimal: bool
    per_k: dict = field(default_factory=dict)


@dataclass
class SolveReport:
    p: float
    n_samples: int
    F_u: float
    active: dict
    recovered: Recovery
    F_saa: float
    saa_schedule: Schedule
    iterations: int
    converged: bool
    stop_reason: str
    history: list
    columns: list
    risk_train: float
    risk_fresh: float | None = None
    saa_risk_train: float | None = None
    final_gap: float = float("nan")

    @property
    def F_rec(self) -> float:
        return self.recovered.cost


def master_qp(cfg: MicrogridConfig, columns) -> Qp:
    """Dispatch QP with the coupling right-hand side replaced by sum_k alpha_k v_k."""
    base = build_qp(cfg, np.zeros(cfg.horizon))
    K = len(columns)
    n = base.n_vars
    V = np.array([np.asarray(getattr(c, "v", c), dtype=float) for c in columns])  # K x T

    A_in = np.hstack([base.A_in, np.zeros((base.A_in.shape[0], K))])
    A_in[base.coupling_rows, n:] = -V.T
    A_in = np.vstack([A_in, np.hstack([np.zeros((K, n)), -np.eye(K)])])
    b_in = np.concatenate([base.b_in, np.zeros(K)])
    A_eq = np.hstack([base.A_eq, np.zeros((base.A_eq.shape[0], K))])
    A_eq = np.vstack([A_eq, np.concatenate([np.zeros(n), np.ones(K)])])
    b_eq = np.concatenate([base.b_eq, [1.0]])
    labels = base.row_labels + tuple(f"alpha_nonneg[{k}]" for k in range(K))
    return Qp(q=np.concatenate([base.q, np.zeros(K)]), c=np.concatenate([base.c, np.zeros(K)]),
              A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
              coupling_rows=base.coupling_rows, row_labels=labels,
              constant=cfg.storage_constant())


def _solve(q: Qp):
    """Solve tightly, settling for the default tolerance when roundoff stalls the last digits."""
    sol = qpmod.solve(q, tol=MASTER_TOL)
    if sol.status == qpmod.MAX_ITER and max(sol.kkt) <= FALLBACK_TOL:
        log.debug("accepting QP solution at kkt=%s", sol.kkt)
        sol.status = qpmod.OPTIMAL
    return sol


def solve_master(cfg: MicrogridConfig, columns, k: int = 1) -> MasterState:
    mq = master_qp(cfg, columns)
    sol = _solve(mq)
    if not sol.optimal:
        raise InfeasibleError(f"master problem {sol.status} with {len(columns)} column(s)",
                              {"status": sol.status, "certificate": sol.certificate})
    n = cfg.n_vars
    alphas = np.clip(sol.x[n:], 0.0, None)
    return MasterState(columns=list(columns), alphas=alphas, lam=qpmod.coupling_duals(sol, mq),
                       F_u=sol.value, k=k, x=sol.x[:n])


def _solve_fixed(cfg: MicrogridConfig, rhs):
    q = build_qp(cfg, rhs)
    q = replace(q, constant=cfg.storage_constant())
    return q, _solve(q)


def recover(cfg: MicrogridConfig, state: MasterState) -> Recovery:
    """Re-solve against each active point alone and keep the cheapest schedule."""
    active = state.active()
    if active.size == 0:
        raise DispatchError("master state has no active columns")
    per_k = {}
    best = None
    for k in active:
        v = np.asarray(state.columns[k].v)
        q, sol = _solve_fixed(cfg, v)
        if not sol.optimal:
            sched = Schedule.from_vector(cfg, sol.x)
            per_k[int(k)] = {"status": sol.status,
                             "violations": [str(x) for x in validate_schedule(cfg, sched, v)[:10]]}
            continue
        sched = Schedule.from_vector(cfg, sol.x)
        cost = evaluate_cost(cfg, sched)
        per_k[int(k)] = {"status": sol.status, "cost": cost}
        if best is None or cost < best[1]:
            best = (sched, cost, int(k))
    if best is None:
        raise InfeasibleError("every recovery problem is infeasible", per_k)
    return Recovery(schedule=best[0], cost=best[1], k=best[2],
                    eps_optimal=active.size == 1, per_k=per_k)


def saa_baseline(cfg: MicrogridConfig, sset: ScenarioSet):
    """Dispatch against the component-wise minimum of the sample."""
    wbar = worst_case(sset)
    _, sol = _solve_fixed(cfg, wbar)
    if not sol.optimal:
        raise InfeasibleError("demand exceeds worst-case wind plus generation capacity",
                              {"status": sol.status, "rhs": wbar.tolist()})
    sched = Schedule.from_vector(cfg, sol.x)
    return sched, evaluate_cost(cfg, sched)


def dual_value(cfg: MicrogridConfig, sset: ScenarioSet, p: float, lam) -> float:
    """phi(lam) = min_x [F(x) + lam'g(x)] - max_{v in Z_p} lam'v, a lower bound."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DispatchError("multipliers must be nonnegative")
    full = build_qp(cfg, np.zeros(cfg.horizon))
    rows = full.coupling_rows
    keep = np.setdiff1d(np.arange(full.A_in.shape[0]), rows)
    # g(x) = L + A_c x where A_c are the coupling rows
    c = full.c + full.A_in[rows].T @ lam
    inner = Qp(q=full.q, c=c, A_eq=full.A_eq, b_eq=full.b_eq, A_in=full.A_in[keep],
               b_in=full.b_in[keep],
               constant=cfg.storage_constant() + float(lam @ cfg.base_load))
    sol = _solve(inner)
    if not sol.optimal:
        raise InfeasibleError(f"inner dual problem {sol.status}")
    point = pep.solve_mip(sset, p, lam, quantile_bound(sset, p))
    return sol.value - point.objective


def empirical_risk(sset: ScenarioSet, g, atol: float = RISK_ATOL) -> float:
    """Fraction of samples whose wind covers the net load in every slot."""
    return survival_joint(sset, np.asarray(g, dtype=float) - atol)


def run(cfg: MicrogridConfig, sset: ScenarioSet, p: float, eps: float = 1e-4, lam_init=None,
        max_outer: int = 100, fresh: ScenarioSet | None = None) -> SolveReport:
    if eps <= 0:
        raise DispatchError("eps must be positive")
    if sset.horizon != cfg.horizon:
        raise DispatchError(f"scenario horizon {sset.horizon} does not match config {cfg.horizon}")
    lam = np.ones(cfg.horizon) if lam_init is None else np.asarray(lam_init, dtype=float)
    if np.any(lam < 0):
        raise DispatchError("initial multipliers must be nonnegative")

    ell = quantile_bound(sset, p)
    columns = [pep.solve_mip(sset, p, lam, ell)]
    history = []
    converged = False
    stop = "max_outer"
    gap = float("nan")
    state = None
    for k in range(1, max_outer + 1):
        try:
            state = solve_master(cfg, columns, k=k)
        except InfeasibleError as exc:
            if k == 1:
                diag = {"v1": columns[0].v.tolist(), "ell_p": ell.tolist()}
                try:
                    solve_master(cfg, [ell])
                    diag["ell_p_feasible"] = True
                except InfeasibleError:
                    diag["ell_p_feasible"] = False
                raise InfeasibleError("model infeasible at the first p-efficient point", diag) from exc
            raise
        lam = state.lam
        new = pep.solve_mip(sset, p, lam, ell)
        phi_bar = new.objective
        phi_k = max(float(lam @ c.v) for c in columns)
        gap = abs(phi_bar - phi_k)
        history.append({"k": k, "F_u": state.F_u, "gap": gap, "phi_bar": phi_bar,
                        "phi_k": phi_k, "columns": len(columns), "lam": lam.tolist()})
        log.info("iteration %d: F_u=%.6f gap=%.3g columns=%d", k, state.F_u, gap, len(columns))
        if gap < eps:
            converged, stop = True, "gap"
            break
        if any(np.max(np.abs(new.v - c.v)) <= DUP_TOL for c in columns):
            converged, stop = True, "duplicate"
            break
        columns.append(new)
    else:
        log.warning("primal-dual loop stopped at max_outer=%d with gap %.3g", max_outer, gap)

    rec = recover(cfg, state)
    saa_sched, F_saa = saa_baseline(cfg, sset)
    g_rec = net_load(cfg, rec.schedule)
    active = state.active()
    return SolveReport(
        p=p, n_samples=sset.n_samples, F_u=state.F_u,
        active={int(k): float(state.alphas[k]) for k in active},
        recovered=rec, F_saa=F_saa, saa_schedule=saa_sched,
        iterations=len(history), converged=converged, stop_reason=stop,
        history=history, columns=[c.v for c in state.columns],
        risk_train=empirical_risk(sset, g_rec),
        risk_fresh=None if fresh is None else empirical_risk(fresh, g_rec),
        saa_risk_train=empirical_risk(sset, net_load(cfg, saa_sched)),
        final_gap=gap,
    )
