"""Microgrid dispatch model: parameters, schedules and the QP encoding.

Decision vector layout (all per slot, slot index fastest)::

    [ p_g (M*T) | p_d (N*T) | p_b (J*T) | soc (J*T) ]

The supply-demand coupling rows ``g(x) <= rhs`` come last in the inequality
block and are tagged in slot order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ConvexityError
from .qp import Qp

FEAS_TOL = 1e-8


@dataclass(frozen=True)
class GeneratorParams:
    p_min: float
    p_max: float
    ramp_up: float
    ramp_dn: float
    a: float
    b: float
    p_init: float | None = None

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"generator needs 0 <= p_min <= p_max, got {self.p_min}, {self.p_max}")
        if self.ramp_up < 0 or self.ramp_dn < 0:
            raise ConfigError("ramp limits must be nonnegative")
        if self.p_init is None:
            object.__setattr__(self, "p_init", 0.5 * (self.p_min + self.p_max))


@dataclass(frozen=True)
class LoadParams:
    d_min: float
    d_max: float
    c: float
    d: float

    def __post_init__(self):
        if not 0 <= self.d_min <= self.d_max:
            raise ConfigError(f"load needs 0 <= d_min <= d_max, got {self.d_min}, {self.d_max}")


@dataclass(frozen=True)
class StorageParams:
    b_max: float
    b_final_min: float
    beta: np.ndarray
    p_b_min: float = -10.0
    p_b_max: float = 10.0
    eta: float = 0.9
    b_init: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.b_init is None:
            object.__setattr__(self, "b_init", self.b_final_min)
        if not 0 <= self.b_final_min <= self.b_max:
            raise ConfigError("storage needs 0 <= b_final_min <= b_max")
        if not self.p_b_min <= 0 <= self.p_b_max:
            raise ConfigError("storage needs p_b_min <= 0 <= p_b_max")
        if not 0 <= self.eta <= 1:
            raise ConfigError(f"storage efficiency must lie in [0, 1], got {self.eta}")
        if not 0 <= self.b_init <= self.b_max:
            raise ConfigError("initial state of charge must lie in [0, b_max]")
        if np.any(self.beta < 0):
            raise ConfigError("storage usage weights must be nonnegative")


@dataclass(frozen=True)
class MicrogridConfig:
    horizon: int
    generators: tuple
    loads: tuple
    storages: tuple
    base_load: np.ndarray
    spin_reserve: np.ndarray = None

    def __post_init__(self):
        T = self.horizon
        if T < 1:
            raise ConfigError("horizon must be at least one slot")
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "storages", tuple(self.storages))
        object.__setattr__(self, "base_load", _vector(self.base_load, T, "base_load"))
        sr = 0.0 if self.spin_reserve is None else self.spin_reserve
        object.__setattr__(self, "spin_reserve", _vector(sr, T, "spin_reserve"))
        if np.any(self.spin_reserve < 0):
            raise ConfigError("spinning reserve must be nonnegative")
        cap = sum(g.p_max for g in self.generators)
        if np.any(self.spin_reserve > cap):
            raise ConfigError(f"spinning reserve exceeds total generation capacity {cap}")
        for j, st in enumerate(self.storages):
            if st.beta.size == 1:
                object.__setattr__(st, "beta", np.full(T, st.beta[0]))
            elif st.beta.size != T:
                raise ConfigError(f"storage {j}: beta has length {st.beta.size}, expected {T}")

    @property
    def sizes(self) -> tuple:
        return len(self.generators), len(self.loads), len(self.storages)

    @property
    def n_vars(self) -> int:
        M, N, J = self.sizes
        return (M + N + 2 * J) * self.horizon

    def storage_constant(self) -> float:
        """Sum of beta * b_max, the part of the usage cost that does not depend on x."""
        return float(sum(st.beta.sum() * st.b_max for st in self.storages))


def _vector(v, T, name) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.size == 1:
        arr = np.full(T, arr[0])
    if arr.shape != (T,):
        raise ConfigError(f"{name} has length {arr.size}, expected {T}")
    return arr


@dataclass
class Schedule:
    p_g: np.ndarray
    p_d: np.ndarray
    p_b: np.ndarray
    soc: np.ndarray

    @classmethod
    def from_vector(cls, cfg: MicrogridConfig, x) -> "Schedule":
        M, N, J = cfg.sizes
        T = cfg.horizon
        x = np.asarray(x, dtype=float)
        parts = np.split(x[: cfg.n_vars], np.cumsum([M * T, N * T, J * T]))
        return cls(*(p.reshape(-1, T) for p in parts))

    @classmethod
    def zeros(cls, cfg: MicrogridConfig) -> "Schedule":
        return cls.from_vector(cfg, np.zeros(cfg.n_vars))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p_g.ravel(), self.p_d.ravel(), self.p_b.ravel(), self.soc.ravel()])

    def check_shape(self, cfg: MicrogridConfig) -> None:
        M, N, J = cfg.sizes
        T = cfg.horizon
        want = {"p_g": (M, T), "p_d": (N, T), "p_b": (J, T), "soc": (J, T)}
        for name, shape in want.items():
            got = np.shape(getattr(self, name))
            if got != shape:
                raise ConfigError(f"schedule {name} has shape {got}, expected {shape}")


@dataclass
class Violation:
    family: str
    index: tuple
    magnitude: float

    def __str__(self):
        return f"{self.family}{list(self.index)}: {self.magnitude:.6g}"


class _Rows:
    """Accumulates sparse-ish rows before densifying."""

    def __init__(self, n):
        self.n = n
        self.rows, self.rhs, self.labels = [], [], []

    def add(self, coefs: dict, rhs: float, label: str):
        row = np.zeros(self.n)
        for k, v in coefs.items():
            row[k] += v
        self.rows.append(row)
        self.rhs.append(rhs)
        self.labels.append(label)

    def arrays(self):
        if not self.rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array(self.rows), np.array(self.rhs, dtype=float)


def _index(cfg: MicrogridConfig):
    M, N, J = cfg.sizes
    T = cfg.horizon
    off_d = M * T
    off_b = off_d + N * T
    off_s = off_b + J * T
    return (lambda m, t: m * T + t,
            lambda n, t: off_d + n * T + t,
            lambda j, t: off_b + j * T + t,
            lambda j, t: off_s + j * T + t)


def build_qp(cfg: MicrogridConfig, rhs) -> Qp:
    """Dispatch QP with coupling rows ``g^t(x) <= rhs^t``."""
    T = cfg.horizon
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (T,):
        raise ConfigError(f"right-hand side has length {rhs.size}, expected {T}")
    if not np.all(np.isfinite(rhs)):
        raise ConfigError("right-hand side must be finite")
    for m, g in enumerate(cfg.generators):
        if g.a < 0:
            raise ConvexityError(f"generator {m}: cost curvature a={g.a} is negative")
    for n_, ld in enumerate(cfg.loads):
        if ld.c > 0:
            raise ConvexityError(f"load {n_}: utility curvature c={ld.c} is positive")

    ig, id_, ib, isoc = _index(cfg)
    nv = cfg.n_vars
    q = np.zeros(nv)
    c = np.zeros(nv)
    ineq = _Rows(nv)
    eq = _Rows(nv)

    for m, g in enumerate(cfg.generators):
        for t in range(T):
            k = ig(m, t)
            q[k] = 2.0 * g.a
            c[k] = g.b
            ineq.add({k: 1.0}, g.p_max, f"gen_max[{m},{t}]")
            ineq.add({k: -1.0}, -g.p_min, f"gen_min[{m},{t}]")
            if t == 0:
                ineq.add({k: 1.0}, g.ramp_up + g.p_init, f"ramp_up[{m},{t}]")
                ineq.add({k: -1.0}, g.ramp_dn - g.p_init, f"ramp_dn[{m},{t}]")
            else:
                prev = ig(m, t - 1)
                ineq.add({k: 1.0, prev: -1.0}, g.ramp_up, f"ramp_up[{m},{t}]")
                ineq.add({k: -1.0, prev: 1.0}, g.ramp_dn, f"ramp_dn[{m},{t}]")
    if cfg.generators:
        cap = sum(g.p_max for g in cfg.generators)
        for t in range(T):
            ineq.add({ig(m, t): 1.0 for m in range(len(cfg.generators))},
                     cap - cfg.spin_reserve[t], f"reserve[{t}]")

    for n_, ld in enumerate(cfg.loads):
        for t in range(T):
            k = id_(n_, t)
            q[k] = -2.0 * ld.c
            c[k] = -ld.d
            ineq.add({k: 1.0}, ld.d_max, f"load_max[{n_},{t}]")
            ineq.add({k: -1.0}, -ld.d_min, f"load_min[{n_},{t}]")

    for j, st in enumerate(cfg.storages):
        for t in range(T):
            kb, ks = ib(j, t), isoc(j, t)
            c[ks] = -st.beta[t]
            ineq.add({ks: 1.0}, st.b_max, f"soc_max[{j},{t}]")
            ineq.add({ks: -1.0}, 0.0, f"soc_min[{j},{t}]")
            ineq.add({kb: 1.0}, st.p_b_max, f"charge_max[{j},{t}]")
            ineq.add({kb: -1.0}, -st.p_b_min, f"charge_min[{j},{t}]")
            if t == 0:
                eq.add({ks: 1.0, kb: -1.0}, st.b_init, f"soc_dynamics[{j},{t}]")
                ineq.add({kb: -1.0}, st.eta * st.b_init, f"efficiency[{j},{t}]")
            else:
                eq.add({ks: 1.0, isoc(j, t - 1): -1.0, kb: -1.0}, 0.0, f"soc_dynamics[{j},{t}]")
                ineq.add({kb: -1.0, isoc(j, t - 1): -st.eta}, 0.0, f"efficiency[{j},{t}]")
        ineq.add({isoc(j, T - 1): -1.0}, -st.b_final_min, f"soc_final[{j}]")

    first = len(ineq.rows)
    M, N, J = cfg.sizes
    for t in range(T):
        coefs = {}
        for n_ in range(N):
            coefs[id_(n_, t)] = 1.0
        for j in range(J):
            coefs[ib(j, t)] = 1.0
        for m in range(M):
            coefs[ig(m, t)] = -1.0
        ineq.add(coefs, rhs[t] - cfg.base_load[t], f"coupling[{t}]")

    A_in, b_in = ineq.arrays()
    A_eq, b_eq = eq.arrays()
    return Qp(q=q, c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
              coupling_rows=np.arange(first, first + T), row_labels=tuple(ineq.labels))


def coupling_rhs(cfg: MicrogridConfig, qp: Qp) -> np.ndarray:
    """Recover the ``rhs`` vector a QP was built with."""
    return qp.b_in[qp.coupling_rows] + cfg.base_load


def net_load(cfg: MicrogridConfig, schedule: Schedule) -> np.ndarray:
    """g^t = base load + dispatchable load + charging - conventional output."""
    schedule.check_shape(cfg)
    return (cfg.base_load + schedule.p_d.sum(axis=0) + schedule.p_b.sum(axis=0)
            - schedule.p_g.sum(axis=0))


def evaluate_cost(cfg: MicrogridConfig, schedule: Schedule) -> float:
    schedule.check_shape(cfg)
    gen = sum(float(np.sum(g.a * schedule.p_g[m] ** 2 + g.b * schedule.p_g[m]))
              for m, g in enumerate(cfg.generators))
    util = sum(float(np.sum(ld.c * schedule.p_d[n] ** 2 + ld.d * schedule.p_d[n]))
               for n, ld in enumerate(cfg.loads))
    usage = sum(float(np.sum(st.beta * (st.b_max - schedule.soc[j])))
                for j, st in enumerate(cfg.storages))
    return gen - util + usage


def validate_schedule(cfg: MicrogridConfig, schedule: Schedule, rhs=None,
                      tol: float = FEAS_TOL) -> list:
    """All constraint violations larger than ``tol``; empty when feasible.

    The SoC recursion is checked as an equality; coupling rows only when
    ``rhs`` is given.
    """
    schedule.check_shape(cfg)
    out = []
    T = cfg.horizon

    def check(family, index, excess):
        if excess > tol:
            out.append(Violation(family, index, float(excess)))

    for m, g in enumerate(cfg.generators):
        p = schedule.p_g[m]
        prev = np.concatenate([[g.p_init], p[:-1]])
        for t in range(T):
            check("gen_max", (m, t), p[t] - g.p_max)
            check("gen_min", (m, t), g.p_min - p[t])
            check("ramp_up", (m, t), p[t] - prev[t] - g.ramp_up)
            check("ramp_dn", (m, t), prev[t] - p[t] - g.ramp_dn)
    if cfg.generators:
        cap = sum(g.p_max for g in cfg.generators)
        for t in range(T):
            check("reserve", (t,), cfg.spin_reserve[t] - (cap - schedule.p_g[:, t].sum()))
    for n, ld in enumerate(cfg.loads):
        for t in range(T):
            check("load_max", (n, t), schedule.p_d[n, t] - ld.d_max)
            check("load_min", (n, t), ld.d_min - schedule.p_d[n, t])
    for j, st in enumerate(cfg.storages):
        b = schedule.soc[j]
        pb = schedule.p_b[j]
        prev = np.concatenate([[st.b_init], b[:-1]])
        for t in range(T):
            check("soc_max", (j, t), b[t] - st.b_max)
            check("soc_min", (j, t), -b[t])
            check("charge_max", (j, t), pb[t] - st.p_b_max)
            check("charge_min", (j, t), st.p_b_min - pb[t])
            check("soc_dynamics", (j, t), abs(b[t] - prev[t] - pb[t]))
            check("efficiency", (j, t), -st.eta * prev[t] - pb[t])
        check("soc_final", (j,), st.b_final_min - b[-1])
    if rhs is not None:
        g = net_load(cfg, schedule)
        for t in range(T):
            check("coupling", (t,), g[t] - rhs[t])
    return out


def replay_soc(cfg: MicrogridConfig, p_b) -> np.ndarray:
    """State of charge implied by charging decisions and initial SoC."""
    p_b = np.asarray(p_b, dtype=float)
    b0 = np.array([st.b_init for st in cfg.storages])
    return b0[:, None] + np.cumsum(p_b, axis=1)


# -- config files -----------------------------------------------------------

def config_from_dict(d: dict) -> MicrogridConfig:
    try:
        T = int(d["horizon"])
        gens = [GeneratorParams(**g) for g in d.get("generators", [])]
        loads = [LoadParams(**ld) for ld in d.get("loads", [])]
        stores = []
        for st in d.get("storages", []):
            st = dict(st)
            stores.append(StorageParams(**st))
        return MicrogridConfig(T, gens, loads, stores, d["base_load"], d.get("spin_reserve"))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"bad config entry: {exc}") from None


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path) -> MicrogridConfig:
    data = load_yaml(path)
    return config_from_dict(data.get("microgrid", data))


PRESET_DIR = Path(__file__).parent / "data"


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        known = sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(known)}")
    return path
