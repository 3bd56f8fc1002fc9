"""Shared fixtures and independent oracle helpers for the test suite."""

import numpy as np
import pytest

from pairsgd.data import Dataset, SparseVector
from pairsgd.optimizer import _predraw_pairs
from pairsgd.pairloss import PairLossKind, pair_delta
from pairsgd.prox import prox_elastic_net
from pairsgd.sampling import PairDistribution, importance_weight


def random_sparse_dataset(rng, n, d, density=0.6, ensure_both=True):
    """Random sparse rows with +/-1 labels; re-rolls until both classes appear."""
    while True:
        rows, labels = [], []
        for _ in range(n):
            mask = rng.random(d) < density
            x = np.where(mask, rng.normal(size=d), 0.0)
            rows.append(SparseVector.from_pairs(np.flatnonzero(x), x[x != 0.0], d))
            labels.append(1 if rng.random() < 0.5 else -1)
        if not ensure_both or abs(sum(labels)) != n:
            return Dataset(rows, labels, d)


def golden_section(f, lo, hi, tol=1e-10):
    """Scalar golden-section minimizer, independent of any closed form."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def dense_reference_dsgd(w0, ds, T, gamma, config, gen):
    """Per-iteration dense prox-gradient replay of the inner loop (reference path)."""
    w = np.array(w0, dtype=float)
    dist = PairDistribution.for_dataset(config.dist, ds)
    ii, jj = _predraw_pairs(config.dist, gen, ds, T)
    for t in range(T):
        i, j = int(ii[t]), int(jj[t])
        yi, yj = int(ds.labels[i]), int(ds.labels[j])
        g = np.zeros(ds.dim)
        if yi != yj:
            weight = importance_weight(dist, yi, yj, config.normalization)
            xp, xn = (ds.rows[i], ds.rows[j]) if yi == 1 else (ds.rows[j], ds.rows[i])
            idx, dvals = pair_delta(xp, xn)
            m = float(np.dot(w[idx], dvals))
            if config.loss is PairLossKind.SQUARED:
                coef = -2.0 * (1.0 - m) * weight
            else:
                coef = -weight if m < 1.0 else 0.0
            g[idx] = coef * dvals
        w = prox_elastic_net(w - gamma * g, gamma, config.reg)
    return w


def fd_gradient(f, w, h=1e-6):
    """Central finite differences of a scalar function of a dense vector."""
    g = np.zeros_like(w, dtype=float)
    for c in range(w.size):
        e = np.zeros_like(w, dtype=float)
        e[c] = h
        g[c] = (f(w + e) - f(w - e)) / (2.0 * h)
    return g


def stable_gamma(ds, safety=0.25):
    """A step size safely below 1/L for the squared pair loss on ds."""
    l_max = 2.0 * (2.0 * ds.max_row_norm()) ** 2
    return safety / max(l_max, 1e-12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
