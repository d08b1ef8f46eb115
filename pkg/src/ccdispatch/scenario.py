"""Correlated wind-energy scenarios and empirical survival statistics.

Wind speeds are drawn farm by farm from a latent Gaussian field with AR(1)
dynamics in time and a prescribed cross-farm correlation, pushed through a
Weibull marginal and a piecewise-linear turbine power curve.  The aggregate
energy over farms forms one scenario row.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ScenarioError


@dataclass(frozen=True)
class WecsParams:
    c: float = 10.0
    k: float = 2.2
    v_in: float = 3.0
    v_rated: float = 14.0
    v_out: float = 26.0
    w_rated: float = 10.0

    def __post_init__(self):
        if not (self.c > 0 and self.k > 0):
            raise ScenarioError(f"Weibull parameters must be positive, got c={self.c}, k={self.k}")
        if not (0 <= self.v_in < self.v_rated < self.v_out):
            raise ScenarioError(
                f"need 0 <= v_in < v_rated < v_out, got {self.v_in}, {self.v_rated}, {self.v_out}")
        if not self.w_rated > 0:
            raise ScenarioError("w_rated must be positive")


@dataclass(frozen=True)
class CorrelationSpec:
    """Cross-farm correlation ``spatial`` (I x I) and lag-one coefficients ``temporal``."""

    spatial: np.ndarray
    temporal: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.spatial, dtype=float)
        phi = np.asarray(self.temporal, dtype=float)
        object.__setattr__(self, "spatial", C)
        object.__setattr__(self, "temporal", phi)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ScenarioError(f"spatial correlation must be square, got shape {C.shape}")
        if phi.shape != (C.shape[0],):
            raise ScenarioError(
                f"temporal vector has length {phi.size}, expected {C.shape[0]}")
        if not np.allclose(C, C.T, atol=1e-12):
            raise ScenarioError("spatial correlation matrix is not symmetric")
        if not np.allclose(np.diag(C), 1.0, atol=1e-12):
            raise ScenarioError("spatial correlation matrix must have unit diagonal")
        eig_min = float(np.linalg.eigvalsh(C).min())
        if eig_min < -1e-10:
            raise ScenarioError(
                f"spatial correlation matrix is not positive semidefinite "
                f"(smallest eigenvalue {eig_min:.6g})")
        if np.any(np.abs(phi) >= 1):
            raise ScenarioError("lag-one coefficients must lie strictly inside (-1, 1)")

    @property
    def n_farms(self) -> int:
        return self.spatial.shape[0]

    def innovation_correlation(self) -> np.ndarray:
        """Correlation of the AR(1) innovations that keeps ``spatial`` stationary.

        With x_t = phi*x_{t-1} + sqrt(1-phi^2)*e_t, the per-slot cross
        correlation is preserved iff corr(e_i, e_j) = C_ij (1 - phi_i phi_j)
        / sqrt((1 - phi_i^2)(1 - phi_j^2)).
        """
        phi = self.temporal
        s = np.sqrt(1.0 - phi ** 2)
        E = self.spatial * (1.0 - np.outer(phi, phi)) / np.outer(s, s)
        eig_min = float(np.linalg.eigvalsh(E).min())
        if eig_min < -1e-10:
            raise ScenarioError(
                f"innovation correlation implied by (C, phi) is not positive semidefinite "
                f"(smallest eigenvalue {eig_min:.6g})")
        return E


def _sym_sqrt(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass
class ScenarioSet:
    samples: np.ndarray
    per_farm: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.ascontiguousarray(np.atleast_2d(np.asarray(self.samples, dtype=float)))
        if self.samples.shape[0] < 1:
            raise ScenarioError("a scenario set needs at least one sample")
        if np.any(self.samples < 0) or not np.all(np.isfinite(self.samples)):
            raise ScenarioError("scenario samples must be finite and nonnegative")
        cap = self.meta.get("capacity")
        if cap is not None and np.any(self.samples > cap + 1e-9):
            raise ScenarioError(f"scenario samples exceed the installed capacity {cap}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def head(self, n: int) -> "ScenarioSet":
        """First ``n`` samples; with per-sample RNG streams this equals a smaller draw."""
        meta = dict(self.meta, n_samples=n)
        farms = None if self.per_farm is None else self.per_farm[:n]
        return ScenarioSet(self.samples[:n], farms, self.seed, meta)


def speed_to_power(wecs: WecsParams, v):
    """Turbine output (kWh per slot) for wind speed ``v`` (m/s); works on arrays."""
    v = np.asarray(v, dtype=float)
    ramp = wecs.w_rated * (v - wecs.v_in) / (wecs.v_rated - wecs.v_in)
    out = np.where(v < wecs.v_in, 0.0, np.where(v < wecs.v_rated, ramp, wecs.w_rated))
    out = np.where(v > wecs.v_out, 0.0, out)
    return out if out.ndim else float(out)


def weibull_speed(wecs: WecsParams, z):
    """Map standard-Gaussian values to Weibull(c, k) speeds through the copula."""
    tail = ndtr(-np.asarray(z, dtype=float))
    return wecs.c * (-np.log(tail)) ** (1.0 / wecs.k)


def latent_field(corr: CorrelationSpec, T: int, n_samples: int, seed: int) -> np.ndarray:
    """Latent standard-Gaussian field of shape (n_samples, I, T).

    Sample ``s`` uses its own generator seeded by ``(seed, s)`` so a larger set
    extends a smaller one with the same seed.
    """
    if T < 1 or n_samples < 1:
        raise ScenarioError("T and n_samples must be at least 1")
    I = corr.n_farms
    L0 = _sym_sqrt(corr.spatial)
    Le = _sym_sqrt(corr.innovation_correlation())
    phi = corr.temporal
    keep = np.sqrt(1.0 - phi ** 2)

    z = np.empty((n_samples, T, I))
    root = np.random.SeedSequence(seed)
    for s in range(n_samples):
        ss = np.random.SeedSequence(root.entropy, spawn_key=(s,))
        z[s] = np.random.default_rng(ss).standard_normal((T, I))

    x = np.empty((n_samples, I, T))
    x[:, :, 0] = z[:, 0, :] @ L0.T
    for t in range(1, T):
        x[:, :, t] = phi * x[:, :, t - 1] + keep * (z[:, t, :] @ Le.T)
    return x


def generate(wecs: WecsParams, corr: CorrelationSpec, I: int, T: int, n_samples: int,
             seed: int, keep_farms: bool = False) -> ScenarioSet:
    if I != corr.n_farms:
        raise ScenarioError(f"I={I} farms but correlation spec covers {corr.n_farms}")
    x = latent_field(corr, T, n_samples, seed)
    farms = speed_to_power(wecs, weibull_speed(wecs, x))
    meta = {
        "seed": int(seed),
        "n_samples": int(n_samples),
        "horizon": int(T),
        "n_farms": int(I),
        "capacity": I * wecs.w_rated,
        "wecs": {k: getattr(wecs, k) for k in ("c", "k", "v_in", "v_rated", "v_out", "w_rated")},
        "spatial": corr.spatial.tolist(),
        "temporal": corr.temporal.tolist(),
    }
    return ScenarioSet(farms.sum(axis=1), farms if keep_farms else None, seed, meta)


# -- empirical survival -----------------------------------------------------

def quota(p: float, n_samples: int) -> int:
    """Number of samples that must be kept: ceil(p * N) robust to float noise."""
    q = math.ceil(p * n_samples - 1e-9)
    return max(q, 1)


def survival_joint(sset: ScenarioSet, v) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != (sset.horizon,):
        raise ScenarioError(f"query vector has shape {v.shape}, expected ({sset.horizon},)")
    return float(np.all(sset.samples >= v, axis=1).mean())


def survival_marginal(sset: ScenarioSet, t: int, w: float) -> float:
    """Marginal survival at slot ``t`` (1-based)."""
    if not 1 <= t <= sset.horizon:
        raise ScenarioError(f"slot index {t} outside 1..{sset.horizon}")
    return float((sset.samples[:, t - 1] >= w).mean())


def quantile_bound(sset: ScenarioSet, p: float) -> np.ndarray:
    """Largest per-slot value whose marginal survival is at least ``p``."""
    if not 0 < p < 1:
        raise ScenarioError(f"p must lie in (0, 1), got {p}")
    q = quota(p, sset.n_samples)
    # q-th largest of each column
    return np.sort(sset.samples, axis=0)[sset.n_samples - q].copy()


def worst_case(sset: ScenarioSet) -> np.ndarray:
    return sset.samples.min(axis=0)


# -- persistence ------------------------------------------------------------

def save_csv(sset: ScenarioSet, path) -> Path:
    """Write samples as CSV plus a ``.meta.json`` sidecar; returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"t{t + 1}" for t in range(sset.horizon)])
        for row in sset.samples:
            w.writerow([repr(float(x)) for x in row])
    meta = dict(sset.meta, seed=sset.seed)
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_csv(path) -> ScenarioSet:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ScenarioError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if header != [f"t{t + 1}" for t in range(len(header))]:
        raise ScenarioError(f"{path}:1: header must be t1..tT, got {header}")
    data = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ScenarioError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(x) for x in row])
        except ValueError as exc:
            raise ScenarioError(f"{path}:{lineno}: {exc}") from None
    if not data:
        raise ScenarioError(f"{path}: no samples")
    meta = {}
    mp = _meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
    return ScenarioSet(np.array(data), None, meta.get("seed"), meta)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")
