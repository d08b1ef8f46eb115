"""Dense convex QP with a separable quadratic term, solved by a primal-dual
interior-point method (Mehrotra predictor-corrector).

Problem form::

    minimize    0.5 * x' diag(q) x + c' x + constant
    subject to  A_eq x == b_eq
                A_in x <= b_in

Multipliers follow the convention ``q*x + c + A_eq' y + A_in' lam == 0`` with
``lam >= 0``, so ``lam[i]`` is the marginal decrease of the optimal value per
unit increase of ``b_in[i]``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConvexityError, StructureError

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"


@dataclass(frozen=True)
class Qp:
    q: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    coupling_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    row_labels: tuple = ()
    constant: float = 0.0

    def __post_init__(self):
        n = self.q.shape[0]
        if self.c.shape != (n,):
            raise StructureError(f"linear cost has shape {self.c.shape}, expected ({n},)")
        for A, b, name in ((self.A_eq, self.b_eq, "equality"), (self.A_in, self.b_in, "inequality")):
            if A.ndim != 2 or A.shape[1] != n or b.shape != (A.shape[0],):
                raise StructureError(f"{name} block has shapes {A.shape} and {b.shape} for {n} variables")
        rows = np.asarray(self.coupling_rows, dtype=int)
        if rows.size and (rows.min() < 0 or rows.max() >= self.A_in.shape[0]
                          or len(set(rows.tolist())) != rows.size):
            raise StructureError("coupling rows must be distinct inequality row indices")

    @property
    def n_vars(self) -> int:
        return self.q.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.q * x) + self.c @ x + self.constant)

    def with_rhs(self, rows, values) -> "Qp":
        b = self.b_in.copy()
        b[np.asarray(rows, dtype=int)] = values
        return replace(self, b_in=b)

    def scaled(self, gamma: float) -> "Qp":
        return replace(self, q=gamma * self.q, c=gamma * self.c, constant=gamma * self.constant)

    def data_norm(self) -> float:
        parts = [self.q, self.c, self.b_eq, self.b_in, self.A_eq.ravel(), self.A_in.ravel()]
        return max((float(np.abs(p).max()) for p in parts if p.size), default=0.0)

    def dump(self, path) -> None:
        """Write the problem data as plain-text matrix blocks."""
        with open(path, "w") as fh:
            for name in ("q", "c", "A_eq", "b_eq", "A_in", "b_in", "coupling_rows"):
                arr = np.atleast_2d(np.asarray(getattr(self, name)))
                fh.write(f"# {name} {arr.shape[0]} {arr.shape[1]}\n")
                np.savetxt(fh, arr, fmt="%.17g")


@dataclass
class QpSolution:
    x: np.ndarray
    value: float
    duals_in: np.ndarray
    duals_eq: np.ndarray
    status: str
    kkt: tuple
    iterations: int = 0
    certificate: dict | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def kkt_residuals(qp: Qp, x, y, lam) -> tuple:
    """Scaled (stationarity, primal feasibility, complementarity) residuals."""
    scale = 1.0 + qp.data_norm()
    grad = qp.q * x + qp.c + qp.A_eq.T @ y + qp.A_in.T @ lam
    slack = qp.b_in - qp.A_in @ x
    feas = max(_inf(qp.A_eq @ x - qp.b_eq), _inf(np.maximum(-slack, 0.0)), _inf(np.maximum(-lam, 0.0)))
    comp = _inf(lam * slack)
    return _inf(grad) / scale, feas / scale, comp / scale


def _inf(v) -> float:
    return float(np.abs(v).max()) if np.size(v) else 0.0


def lagrangian_dual(qp: Qp, y, lam, tol: float = 1e-8) -> float:
    """Dual function value at ``(y, lam)``; -inf when unbounded below in x."""
    d = qp.c + qp.A_eq.T @ y + qp.A_in.T @ lam
    flat = qp.q <= 0
    if flat.any() and _inf(d[flat]) > tol * (1.0 + qp.data_norm()):
        return -np.inf
    curved = ~flat
    val = -0.5 * float(np.sum(d[curved] ** 2 / qp.q[curved]))
    return val - float(qp.b_eq @ y) - float(qp.b_in @ lam) + qp.constant


def solve(qp: Qp, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    if np.any(qp.q < 0) or not np.all(np.isfinite(qp.q)):
        raise ConvexityError(f"quadratic diagonal has negative entries (min {qp.q.min():.3g})")
    for name in ("c", "b_eq", "b_in"):
        if not np.all(np.isfinite(getattr(qp, name))):
            raise ConvexityError(f"non-finite entries in {name}")

    n = qp.n_vars
    me, mi = qp.A_eq.shape[0], qp.A_in.shape[0]
    Ae, be, Ai, bi, q, c = qp.A_eq, qp.b_eq, qp.A_in, qp.b_in, qp.q, qp.c
    scale = 1.0 + qp.data_norm()
    reg = 1e-11 * scale

    x = np.zeros(n)
    y = np.zeros(me)
    s = np.maximum(bi - Ai @ x, 1.0)
    lam = np.ones(mi)

    best = None
    pres_hist = []
    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        rd = q * x + c + Ae.T @ y + Ai.T @ lam
        req = Ae @ x - be
        rin = Ai @ x + s - bi
        mu = float(s @ lam) / mi if mi else 0.0

        kkt = kkt_residuals(qp, x, y, lam)
        if best is None or max(kkt) < max(best[3]):
            best = (x.copy(), y.copy(), lam.copy(), kkt)
        if max(kkt) <= tol:
            status = OPTIMAL
            break

        pres = max(_inf(req), _inf(rin)) / scale
        pres_hist.append(pres)
        if len(pres_hist) > 30 and pres > 1e-6 and pres > 0.9 * pres_hist[-31]:
            status = INFEASIBLE
            break
        if _inf(x) > 1e12:
            status = UNBOUNDED
            break

        D = lam / s
        lu = _factor(q, Ai, Ae, D, reg)
        if lu is None:
            break

        def direction(rc):
            w = (-rc + lam * rin) / s
            rhs = np.concatenate([-rd - Ai.T @ w, -req])
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            dx, dy = sol[:n], sol[n:]
            dlam = w + D * (Ai @ dx)
            ds = -rin - Ai @ dx
            return dx, dy, dlam, ds

        # predictor
        dx, dy, dlam, ds = direction(s * lam)
        a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / mi if mi else 0.0
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector
        dx, dy, dlam, ds = direction(s * lam + ds * dlam - sigma * mu)
        alpha = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(lam, dlam)))
        x += alpha * dx
        y += alpha * dy
        lam += alpha * dlam
        s += alpha * ds
        log.debug("qp it %d: pres=%.3g mu=%.3g alpha=%.3g", it, pres, mu, alpha)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam)) and np.all(np.isfinite(s))):
            status = INFEASIBLE if pres > 1e-6 else MAX_ITER
            break
        if pres > 1e-6 and _inf(lam) > 1e10 * scale:
            # multipliers diverging while the primal residual persists
            status = INFEASIBLE
            best = (x.copy(), y.copy(), lam.copy(), kkt_residuals(qp, x, y, lam))
            break

    x, y, lam, kkt = best
    cert = None
    if status == INFEASIBLE:
        nrm = _inf(lam) or 1.0
        ray_in, ray_eq = lam / nrm, y / nrm
        cert = {
            "ray_in": ray_in,
            "ray_eq": ray_eq,
            "b_dot_ray": float(bi @ ray_in + be @ ray_eq),
            "A_dot_ray": _inf(Ai.T @ ray_in + Ae.T @ ray_eq),
            "violated_rows": np.flatnonzero(Ai @ x - bi > 1e-6 * scale).tolist(),
        }
    elif status == MAX_ITER and max(kkt) <= tol:
        status = OPTIMAL
    log.debug("qp: %s after %d iterations, kkt=%s", status, it, kkt)
    return QpSolution(x=x, value=qp.objective(x), duals_in=lam, duals_eq=y,
                      status=status, kkt=kkt, iterations=it, certificate=cert)


def _factor(q, Ai, Ae, D, reg):
    """LU of the reduced KKT matrix; regularization grows if a pivot vanishes."""
    me = Ae.shape[0]
    HA = np.diag(q) + (Ai.T * D) @ Ai
    for _ in range(4):
        H = HA + reg * np.eye(q.shape[0])
        K = np.block([[H, Ae.T], [Ae, -reg * np.eye(me)]]) if me else H
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            try:
                lu = scipy.linalg.lu_factor(K, check_finite=False)
            except (ValueError, np.linalg.LinAlgError):
                return None
        if np.all(np.isfinite(lu[0])) and np.all(np.diag(lu[0]) != 0):
            return lu
        reg *= 1e3
    return None


def _max_step(v, dv) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def coupling_duals(sol: QpSolution, qp: Qp) -> np.ndarray:
    """Multipliers of the tagged coupling rows, in tag order."""
    if qp.coupling_rows.size == 0:
        raise StructureError("problem has no tagged coupling rows")
    if sol.duals_in.shape[0] != qp.A_in.shape[0]:
        raise StructureError("solution does not belong to this problem")
    return np.maximum(sol.duals_in[qp.coupling_rows], 0.0)
