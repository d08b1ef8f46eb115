"""Random convex QPs with a planted KKT point."""

import numpy as np

from ccdispatch.qp import Qp


def planted_qp(rng, n=None):
    n = n or int(rng.integers(2, 16))
    me = int(rng.integers(0, max(1, n // 3)))
    mi = int(rng.integers(1, 2 * n))
    n_act = int(rng.integers(0, max(1, n - me)))
    n_act = min(n_act, mi)

    q = rng.uniform(0.1, 3.0, n)
    q[rng.random(n) < 0.3] = 0.0  # some linear coordinates
    x = rng.normal(size=n) * 2
    A_eq = rng.normal(size=(me, n))
    A_in = rng.normal(size=(mi, n))
    y = rng.normal(size=me)
    lam = np.zeros(mi)
    lam[:n_act] = rng.uniform(0.5, 2.0, n_act)
    slack = np.zeros(mi)
    slack[n_act:] = rng.uniform(0.5, 3.0, mi - n_act)
    c = -(q * x + A_eq.T @ y + A_in.T @ lam)
    prob = Qp(q=q, c=c, A_eq=A_eq, b_eq=A_eq @ x, A_in=A_in, b_in=A_in @ x + slack,
              coupling_rows=np.arange(n_act))
    # the linear coordinates need bounding to keep the problem bounded
    box = np.vstack([np.eye(n), -np.eye(n)])
    r = np.abs(x) + rng.uniform(1.0, 3.0, n)
    prob = Qp(q=q, c=c, A_eq=A_eq, b_eq=prob.b_eq, A_in=np.vstack([A_in, box]),
              b_in=np.concatenate([prob.b_in, r, r]), coupling_rows=np.arange(n_act))
    return prob, x, y, np.concatenate([lam, np.zeros(2 * n)])
