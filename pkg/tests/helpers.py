"""Shared test utilities: random instances, independent oracles, data generators."""

import numpy as np

from metrack import BasisSet, MetricMatrix, Triplet


def random_spd(rng, d):
    """Well-conditioned symmetric positive definite matrix."""
    a = rng.normal(size=(d, d))
    return a.T @ a / d + np.eye(d)


def random_instance(rng, d_max=50, n_max=30):
    """Random (P, M) with N < d and bounded conditioning.

    P gets log-uniform singular values in [0.5, 2] so the Gram matrix stays
    far from singular; an unconstrained Gaussian P with N close to d can be
    arbitrarily ill conditioned, where neither the incremental updates nor
    the dense-inversion oracle retains nine digits.
    """
    d = int(rng.integers(3, d_max + 1))
    n = int(rng.integers(2, min(d - 1, n_max) + 1))
    u, _ = np.linalg.qr(rng.normal(size=(d, n)))
    v, _ = np.linalg.qr(rng.normal(size=(n, n)))
    s = np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=n))
    p = u @ np.diag(s) @ v.T
    m = random_spd(rng, d)
    return p, m


def direct_inverse(p, m):
    """Oracle: form the Gram matrix densely and invert with the general solver."""
    return np.linalg.inv(p.T @ m @ p)


def rel_fro(a, b):
    denom = max(np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / denom


def make_basis(p, m_entries, **kw):
    metric = MetricMatrix(m_entries)
    return BasisSet(p, metric, **kw), metric


def correlated_two_cluster(rng, d, n_per_class, offset=4.0, delta=1.2,
                           clutter_scale=1.2, spread=0.1, scale=0.5):
    """Two Gaussian clusters separated by a mean offset, plus correlated clutter.

    Both classes share a large common component (so class spans are not
    antipodal rays through the origin) and differ by +-delta along a second
    direction. A shared random clutter subspace carries most of the variance;
    a learned metric can suppress it while the identity metric cannot. The
    global scale keeps squared distances near the unit triplet margin so the
    margin actually binds.
    """
    clutter_dim = max(2, (d - 2) // 3)
    q, _ = np.linalg.qr(rng.normal(size=(d, 2 + clutter_dim)))
    u_off, u_delta, clutter = q[:, 0], q[:, 1], q[:, 2:]
    xs, ys = [], []
    for cls, sign in ((0, 1.0), (1, -1.0)):
        w = rng.normal(size=(n_per_class, clutter_dim)) * clutter_scale
        eps = rng.normal(size=(n_per_class, d)) * spread
        base = offset * u_off + sign * delta * u_delta
        xs.append((base + w @ clutter.T + eps) * scale)
        ys.append(np.full(n_per_class, cls))
    return np.vstack(xs), np.concatenate(ys)


def triplets_from_labels(x, y, n, rng):
    """Random proximity triplets: (anchor, same-class, other-class)."""
    out = []
    classes = np.unique(y)
    by_class = {c: np.flatnonzero(y == c) for c in classes}
    for _ in range(n):
        c = classes[int(rng.integers(0, len(classes)))]
        other = classes[classes != c][int(rng.integers(0, len(classes) - 1))]
        i, j = rng.choice(by_class[c], size=2, replace=False)
        k = rng.choice(by_class[other])
        out.append(Triplet(x[i], x[j], x[k]))
    return out


def reservoir_oracle_inclusion(rng, n_stream, capacity, q):
    """Independent model of time-weighted reservoir retention.

    Draws one uniform per stream item in arrival order and keeps the
    ``capacity`` largest static keys ln(u_t) * q^(-t), which is the
    order-isomorphic form of the u^(1/q^t) competition. Returns the boolean
    inclusion mask over stream positions.
    """
    u = rng.random(n_stream)
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    if n_stream <= capacity:
        return np.ones(n_stream, dtype=bool)
    keys = np.log(u) * np.power(float(q), -np.arange(n_stream, dtype=np.float64))
    mask = np.zeros(n_stream, dtype=bool)
    mask[np.argpartition(keys, -capacity)[-capacity:]] = True
    return mask
