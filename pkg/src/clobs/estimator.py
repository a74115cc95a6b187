"""Concurrent-learning parameter estimator with least-squares gain.

Update laws (continuous time, Euler-integrated by `step`):

    theta_hat' = k_theta * Gamma * sum_i Gcal_i^T (Fcal_i - Gcal_i theta_hat)
    Gamma'     = beta1 * Gamma - k_theta * Gamma * (sum_i Gcal_i^T Gcal_i) * Gamma

Before excitation is recorded the Gamma dynamics reduce to pure exponential
growth, so after each Euler step Gamma is symmetrized and its eigenvalues
are clamped into [gamma_floor, gamma_cap]; once the stack is rich the
quadratic damping term dominates and the clamp is inert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .history import HistoryStack


class NumericalError(RuntimeError):
    """A state update produced NaN or Inf; the run cannot continue."""


@dataclass
class EstimatorConfig:
    k_theta: float
    beta1: float
    gamma0: np.ndarray
    gamma_cap: float = 1e3
    gamma_floor: float = 1e-6

    def __post_init__(self):
        if self.k_theta <= 0 or self.beta1 <= 0:
            raise ValueError("k_theta and beta1 must be positive")
        if not 0 < self.gamma_floor < self.gamma_cap:
            raise ValueError("need 0 < gamma_floor < gamma_cap")
        self.gamma0 = np.asarray(self.gamma0, dtype=float)
        if self.gamma0.ndim != 2 or self.gamma0.shape[0] != self.gamma0.shape[1]:
            raise ValueError("gamma0 must be square")
        if np.abs(self.gamma0 - self.gamma0.T).max() > 1e-10:
            raise ValueError("gamma0 must be symmetric")
        if np.linalg.eigvalsh(self.gamma0)[0] <= 0:
            raise ValueError("gamma0 must be positive definite")


class Estimator:
    """Integrates the parameter estimate and the least-squares gain."""

    def __init__(self, cfg: EstimatorConfig, dim: int, theta0: Optional[np.ndarray] = None):
        if cfg.gamma0.shape != (dim, dim):
            raise ValueError(f"gamma0 shape {cfg.gamma0.shape} does not match dim {dim}")
        self.cfg = cfg
        self.dim = dim
        self.theta_hat = np.zeros(dim) if theta0 is None else np.asarray(theta0, dtype=float).copy()
        self.gamma = cfg.gamma0.copy()
        self.theta_hat_dot = np.zeros(dim)
        w = np.linalg.eigvalsh(self.gamma)
        self._gamma_lo = float(w[0])
        self._gamma_hi = float(w[-1])

    def theta_update_rate(self, stack: HistoryStack) -> np.ndarray:
        """k_theta * Gamma * (cross - gram @ theta_hat); cached as theta_hat_dot.

        The observer consumes the cached value, so the derivative it
        integrates over a tick is identical to the one applied to theta_hat.
        """
        gram, cross = stack.gram_and_cross()
        rate = self.cfg.k_theta * (self.gamma @ (cross - gram @ self.theta_hat))
        self.theta_hat_dot = rate
        return rate

    def gamma_update_rate(self, stack: HistoryStack) -> np.ndarray:
        """beta1 * Gamma - k_theta * Gamma @ gram @ Gamma."""
        gram, _ = stack.gram_and_cross()
        return self.cfg.beta1 * self.gamma - self.cfg.k_theta * (self.gamma @ gram @ self.gamma)

    def step(self, stack: HistoryStack, ts: float, theta_rate: Optional[np.ndarray] = None) -> None:
        """One forward-Euler step of both update laws, then the Gamma projection.

        `theta_rate` may pass in the value already computed this tick by
        `theta_update_rate`; it must come from the same stack and state.
        """
        if ts <= 0:
            raise ValueError("Ts must be positive")
        if theta_rate is None:
            theta_rate = self.theta_update_rate(stack)
        gamma_rate = self.gamma_update_rate(stack)
        self.theta_hat = self.theta_hat + ts * theta_rate
        gamma = self.gamma + ts * gamma_rate
        gamma = (gamma + gamma.T) / 2.0

        # Weyl: the Euler increment moves every eigenvalue by at most its
        # spectral norm (<= Frobenius), so most ticks the eigenvalue interval
        # is certified inside [floor, cap] without a decomposition
        shift = ts * float(np.sqrt((gamma_rate * gamma_rate).sum())) + 1e-12
        lo = self._gamma_lo - shift
        hi = self._gamma_hi + shift
        floor, cap = self.cfg.gamma_floor, self.cfg.gamma_cap
        if lo >= floor and hi <= cap:
            self.gamma = gamma
            self._gamma_lo, self._gamma_hi = lo, hi
        else:
            w, v = np.linalg.eigh(gamma)
            if w[0] >= floor and w[-1] <= cap:
                self.gamma = gamma
            else:
                w = np.clip(w, floor, cap)
                gamma = (v * w) @ v.T
                self.gamma = (gamma + gamma.T) / 2.0
            self._gamma_lo, self._gamma_hi = float(w[0]), float(w[-1])

        # NaN/Inf both poison these sums, so one finite check covers the state
        probe = float(self.theta_hat.sum()) + float(self.gamma.sum())
        if not math.isfinite(probe):
            raise NumericalError(
                "estimator state became non-finite "
                f"(|theta_hat|max={np.abs(self.theta_hat).max():.3e})"
            )

    @property
    def gamma_bounds(self):
        """Certified (lower, upper) bounds on the eigenvalues of the current Gamma."""
        return self._gamma_lo, self._gamma_hi
