"""Ground-truth simulation of the second-order LTI plant.

The plant is

    p' = q
    q' = A1 p + A2 q + B u
    y  = p (+ optional zero-mean Gaussian measurement noise)

Only the harness touches the true state; everything downstream of the
measurement sees y. Two steppers are provided: a plain forward-Euler step
(zero-order-hold input) and an RK4 step of the closed loop, which samples
the controller continuously and keeps the stored trajectory accurate to
well below the window-quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import require_finite, theta_dim, vectorize

PINV_CONDITION_LIMIT = 1e12


@dataclass
class PlantParams:
    """Constant system matrices; n = state half-dimension, m = input dimension."""

    a1: np.ndarray
    a2: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a1 = require_finite(np.atleast_2d(np.asarray(self.a1, dtype=float)), "A1")
        self.a2 = require_finite(np.atleast_2d(np.asarray(self.a2, dtype=float)), "A2")
        self.b = require_finite(np.atleast_2d(np.asarray(self.b, dtype=float)), "B")
        n = self.a1.shape[0]
        if self.a1.shape != (n, n) or self.a2.shape != (n, n):
            raise ValueError("A1 and A2 must be square with matching size")
        if self.b.shape[0] != n:
            raise ValueError("B must have n rows")
        self._b_pinv: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.a1.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def b_pinv(self) -> np.ndarray:
        """Moore-Penrose pseudoinverse of B; rejects near-singular B."""
        if self._b_pinv is None:
            if np.linalg.cond(self.b) > PINV_CONDITION_LIMIT:
                raise ValueError(
                    f"B is ill-conditioned (cond > {PINV_CONDITION_LIMIT:.0e}); "
                    "cannot build the tracking controller"
                )
            self._b_pinv = np.linalg.pinv(self.b)
        return self._b_pinv


@dataclass
class PlantState:
    """True generalized position p and velocity q at time t."""

    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.p.shape != self.q.shape:
            raise ValueError("p and q must have the same dimension")


@dataclass
class NoiseModel:
    """Seeded Gaussian measurement noise on the position output.

    variance == 0 means the measurement is the exact position and the
    random stream is never consumed, so noise-free runs are seed-independent.
    """

    variance: float = 0.0
    seed: int = 0
    _rng: Optional[np.random.Generator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be >= 0")

    def reset(self) -> None:
        """Restart the random stream from the seed."""
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n: int) -> np.ndarray:
        if self._rng is None:
            self.reset()
        return self._rng.normal(0.0, math.sqrt(self.variance), n)


def reference_plant() -> PlantParams:
    """The 2-DOF benchmark system used by the bundled presets."""
    return PlantParams(
        a1=np.array([[2.0, 3.0], [1.0, 2.0]]),
        a2=np.array([[1.0, 5.0], [1.0, 8.0]]),
        b=np.array([[1.0, 3.0], [0.0, 1.0]]),
    )


def true_theta(params: PlantParams) -> np.ndarray:
    """Stacked parameter vector [vec(A1), vec(A2), vec(B)], length 2n^2+mn."""
    theta = np.concatenate(
        [vectorize(params.a1), vectorize(params.a2), vectorize(params.b)]
    )
    assert theta.size == theta_dim(params.n, params.m)
    return theta


def euler_step(state: PlantState, u: np.ndarray, ts: float, params: PlantParams) -> PlantState:
    """One forward-Euler step with zero-order-hold input.

    p+ = p + Ts q;  q+ = q + Ts (A1 p + A2 q + B u);  both from old values.
    """
    if ts <= 0:
        raise ValueError("Ts must be positive")
    u = np.asarray(u, dtype=float)
    if u.shape != (params.m,):
        raise ValueError(f"input has shape {u.shape}, expected ({params.m},)")
    if state.p.shape != (params.n,):
        raise ValueError(f"state has dimension {state.p.shape}, expected ({params.n},)")
    p_next = state.p + ts * state.q
    q_next = state.q + ts * (params.a1 @ state.p + params.a2 @ state.q + params.b @ u)
    return PlantState(p=p_next, q=q_next, t=state.t + ts)


def rk4_closed_loop_step(
    state: PlantState,
    control: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
    ts: float,
    params: PlantParams,
    u0: Optional[np.ndarray] = None,
) -> PlantState:
    """One classical RK4 step of the closed loop p' = q, q' = A x + B u(p, q, t).

    The controller is re-evaluated at the RK4 stage points, so the stored
    samples lie on a trajectory of the continuous closed loop to O(Ts^4);
    the window integrals then see only their own quadrature error. Pass `u0`
    to reuse an already-computed control value for the first stage.
    """
    if ts <= 0:
        raise ValueError("Ts must be positive")
    a1, a2, b = params.a1, params.a2, params.b

    def f(p, q, t):
        return q, a1 @ p + a2 @ q + b @ control(p, q, t)

    p, q, t = state.p, state.q, state.t
    if u0 is None:
        k1p, k1q = f(p, q, t)
    else:
        k1p, k1q = q, a1 @ p + a2 @ q + b @ u0
    k2p, k2q = f(p + 0.5 * ts * k1p, q + 0.5 * ts * k1q, t + 0.5 * ts)
    k3p, k3q = f(p + 0.5 * ts * k2p, q + 0.5 * ts * k2q, t + 0.5 * ts)
    k4p, k4q = f(p + ts * k3p, q + ts * k3q, t + ts)
    p_next = p + (ts / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    q_next = q + (ts / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    return PlantState(p=p_next, q=q_next, t=t + ts)


def trajectory_scalars(t: float):
    """(s, s', s'') of the scalar reference s(t) = sin t + sin 2t + sin 3t + sin 5t."""
    s = math.sin(t) + math.sin(2 * t) + math.sin(3 * t) + math.sin(5 * t)
    sd = math.cos(t) + 2 * math.cos(2 * t) + 3 * math.cos(3 * t) + 5 * math.cos(5 * t)
    sdd = -math.sin(t) - 4 * math.sin(2 * t) - 9 * math.sin(3 * t) - 25 * math.sin(5 * t)
    return s, sd, sdd


def desired_trajectory(t: float, n: int = 2):
    """Reference trajectory: every position component follows

        s(t) = sin(t) + sin(2t) + sin(3t) + sin(5t)

    Returns (pd, qd, qdd) with qd, qdd the analytic first and second
    derivatives of s.
    """
    s, sd, sdd = trajectory_scalars(t)
    return np.full(n, s), np.full(n, sd), np.full(n, sdd)


def tracking_control(
    state: PlantState,
    t: float,
    params: PlantParams,
    gains=(10.0, 10.0),
    cancel_model: bool = True,
) -> np.ndarray:
    """Bounded tracking controller for the reference trajectory.

    With cancel_model=True this is the exact-model feedback-linearizing law

        u = B^+ (qdd_d - A1 p - A2 q - kd (q - qd) - kp (p - pd)),

    with cancel_model=False the model terms are dropped (plain PD plus
    feedforward), which leaves the closed loop coupled through A. Gains may
    be scalars or per-component vectors.
    """
    kp = np.asarray(gains[0], dtype=float)
    kd = np.asarray(gains[1], dtype=float)
    s, sd, sdd = trajectory_scalars(t)
    v = sdd - kd * (state.q - sd) - kp * (state.p - s)
    if cancel_model:
        v = v - params.a1 @ state.p - params.a2 @ state.q
    return params.b_pinv @ v


def measure(state: PlantState, noise: NoiseModel) -> np.ndarray:
    """Position measurement y = p + w, w ~ N(0, variance I) from the seeded stream."""
    if noise.variance == 0.0:
        return state.p.copy()
    return state.p + noise.draw(state.p.size)
