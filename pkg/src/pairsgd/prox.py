"""Elastic-net regularization: values, proximal operator, and a lazy sparse state.

The regularizer is Omega(w) = lambda2 ||w||^2 + lambda1 ||w||_1, so the
quadratic term contributes 2*lambda2*w to subgradients and the prox closed
form divides by (1 + 2*gamma*lambda2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Regularizer:
    lambda2: float = 0.0
    lambda1: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lambda2) and np.isfinite(self.lambda1)):
            raise ValueError("regularization weights must be finite")
        if self.lambda2 < 0 or self.lambda1 < 0:
            raise ValueError("regularization weights must be nonnegative")


def reg_value(reg: Regularizer | None, w: np.ndarray) -> float:
    if reg is None:
        return 0.0
    val = 0.0
    if reg.lambda2:
        val += reg.lambda2 * float(np.dot(w, w))
    if reg.lambda1:
        val += reg.lambda1 * float(np.abs(w).sum())
    return val


def soft_threshold(u, tau: float):
    return np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)


def prox_elastic_net(z, gamma: float, reg: Regularizer):
    """argmin_w (1/(2 gamma)) (w - z)^2 + lambda2 w^2 + lambda1 |w|, coordinatewise.

    Closed form: soft_threshold(z, gamma*lambda1) / (1 + 2*gamma*lambda2).
    Preserves sparsity: zero coordinates stay zero.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    z = np.asarray(z, dtype=np.float64)
    scale = 1.0 + 2.0 * gamma * reg.lambda2
    u = z / scale
    tau = gamma * reg.lambda1 / scale
    if tau == 0.0:
        return u
    return soft_threshold(u, tau)


class LazyShrinkState:
    """Per-coordinate just-in-time elastic-net prox with O(touched) cost per step.

    Between touches a coordinate evolves as m <- max(m/c - tau, 0) per step,
    with c = 1 + 2*gamma*lambda2 and tau = gamma*lambda1/c fixed within a
    stage.  The closed form max(A_t (|z| - B_t), 0) with running scalars
    A_t = prod 1/c and B_t = sum tau/A_u absorbs the timestamp, so the state
    stores a single encoded float per coordinate.  Stage changes and near
    underflow of A trigger a dense flush.
    """

    def __init__(self, w0: np.ndarray):
        self.z = np.array(w0, dtype=np.float64, copy=True)
        self.a = 1.0
        self.b = 0.0
        self.c = 1.0
        self.tau = 0.0

    def begin_stage(self, gamma: float, reg: Regularizer) -> None:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        self.flush()
        self.c = 1.0 + 2.0 * gamma * reg.lambda2
        self.tau = gamma * reg.lambda1 / self.c

    def read(self, idx: np.ndarray) -> np.ndarray:
        z = self.z[idx]
        if self.a == 1.0 and self.b == 0.0:
            return z.copy()
        return np.sign(z) * np.maximum(self.a * (np.abs(z) - self.b), 0.0)

    def step(self, idx: np.ndarray, grad: np.ndarray, gamma: float) -> np.ndarray:
        """One prox-gradient step touching only `idx`; returns the new values there."""
        w_prev = self.read(idx)
        u = (w_prev - gamma * grad) / self.c
        w_new = soft_threshold(u, self.tau) if self.tau else u
        self.a /= self.c
        self.b += self.tau / self.a
        if self.a < 1e-120 or self.b > 1e120:
            self._materialize()  # stale values at idx are overwritten below
            self.z[idx] = w_new
        else:
            self.z[idx] = np.sign(w_new) * (np.abs(w_new) / self.a + self.b)
        return w_new

    def _materialize(self) -> None:
        if self.a == 1.0 and self.b == 0.0:
            return
        self.z = np.sign(self.z) * np.maximum(self.a * (np.abs(self.z) - self.b), 0.0)
        self.a = 1.0
        self.b = 0.0

    def flush(self) -> np.ndarray:
        """Apply all pending shrinkage densely and return the dense weights."""
        self._materialize()
        return self.z

    def dense(self) -> np.ndarray:
        return self.flush().copy()
