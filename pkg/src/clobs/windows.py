"""Sliding sample buffer and derivative-free window regressor.

The identification equations come from integrating the dynamics twice over
a sliding window: with windows T1 (inner) and T2 (outer),

    F(t) = double integral of measured position,
    G(t) = single integral of p(sigma) - p(sigma - T1),
    U(t) = double integral of the input,

and the position stencil

    Fcal(t) = p(t-T2-T1) - p(t-T1) + p(t) - p(t-T2)

satisfies Fcal = A1 F + A2 G + B U, i.e. Fcal = Gcal @ theta with
Gcal = [(F kron I)^T (G kron I)^T (U kron I)^T]. No velocity or
acceleration measurements enter. Both quantities are defined as zero until
the first full window [t0 + T1 + T2].

All integrals are composite trapezoids on the uniform sample grid; the
inner integrals are obtained from one cumulative prefix pass so a regressor
evaluation costs O(window), not O(window^2). T1 and T2 are required to be
integer multiples of Ts so every stencil endpoint is an exact grid lookup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import kron_row_block, theta_dim

GRID_REL_TOL = 1e-9  # |round(T/Ts)*Ts - T| <= GRID_REL_TOL * Ts


class WindowNotFull(Exception):
    """Raised when an integral is requested before the buffer spans a full window."""


@dataclass
class WindowConfig:
    """Window lengths and sample time; T1, T2 must be multiples of Ts."""

    t1: float
    t2: float
    ts: float

    def __post_init__(self):
        if self.t1 <= 0 or self.t2 <= 0 or self.ts <= 0:
            raise ValueError("T1, T2 and Ts must all be positive")
        for name, value in (("T1", self.t1), ("T2", self.t2)):
            steps = round(value / self.ts)
            if steps < 1 or abs(steps * self.ts - value) > GRID_REL_TOL * self.ts:
                raise ValueError(f"{name}={value} is not an integer multiple of Ts={self.ts}")

    @property
    def n1(self) -> int:
        return round(self.t1 / self.ts)

    @property
    def n2(self) -> int:
        return round(self.t2 / self.ts)

    @property
    def capacity(self) -> int:
        """Samples needed to span [t - T1 - T2, t] inclusive."""
        return self.n1 + self.n2 + 1


class SampleBuffer:
    """Fixed-capacity ring of uniformly spaced (t, p_measured, u) samples.

    Timestamps must advance by exactly Ts per push (the fixed-step loop may
    never skip or repeat a tick); the oldest sample is evicted once the
    buffer is full.
    """

    def __init__(self, cfg: WindowConfig, n: int, m: int):
        self.cfg = cfg
        cap = cfg.capacity
        self._t = np.zeros(cap)
        self._p = np.zeros((cap, n))
        self._u = np.zeros((cap, m))
        self._start = 0
        self._count = 0
        self._last_t = 0.0

    def __len__(self) -> int:
        return self._count

    @property
    def state_dim(self) -> int:
        return self._p.shape[1]

    @property
    def input_dim(self) -> int:
        return self._u.shape[1]

    @property
    def full(self) -> bool:
        return self._count == self.cfg.capacity

    @property
    def newest_time(self) -> float:
        if self._count == 0:
            raise ValueError("buffer is empty")
        return self._last_t

    def push(self, t: float, p_meas: np.ndarray, u: np.ndarray) -> None:
        if np.shape(p_meas) != self._p.shape[1:] or np.shape(u) != self._u.shape[1:]:
            raise ValueError("sample dimensions do not match the buffer")
        if self._count > 0:
            last = self._last_t
            # uniform-grid tolerance: absolute floor plus a few ulps at |t|
            tol = 1e-12 + 1.8e-15 * abs(t)
            if abs(t - last - self.cfg.ts) > tol:
                raise ValueError(
                    f"non-uniform timestamp: got {t!r} after {last!r}, expected step {self.cfg.ts!r}"
                )
        cap = self.cfg.capacity
        if self._count < cap:
            idx = (self._start + self._count) % cap
            self._count += 1
        else:
            idx = self._start  # overwrite the oldest sample
            self._start = (self._start + 1) % cap
        self._t[idx] = t
        self._p[idx] = p_meas
        self._u[idx] = u
        self._last_t = t

    def _ordered(self, ring: np.ndarray) -> np.ndarray:
        cap = self.cfg.capacity
        if self._count < cap or self._start == 0:
            return ring[: self._count].copy()
        return np.concatenate([ring[self._start:], ring[: self._start]], axis=0)

    def times(self) -> np.ndarray:
        return self._ordered(self._t)

    def positions(self) -> np.ndarray:
        return self._ordered(self._p)

    def inputs(self) -> np.ndarray:
        return self._ordered(self._u)


@dataclass
class Regressor:
    """One window evaluation: fcal (n,) and gcal (n, 2n^2+mn) with fcal = gcal @ theta."""

    fcal: np.ndarray
    gcal: np.ndarray
    t: float

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.fcal) or np.any(self.gcal))

    @classmethod
    def zero(cls, n: int, m: int, t: float) -> "Regressor":
        return cls(fcal=np.zeros(n), gcal=np.zeros((n, theta_dim(n, m))), t=t)


def _check_span(buf: SampleBuffer, t: float) -> None:
    if not buf.full:
        raise WindowNotFull(
            f"buffer holds {len(buf)} of {buf.cfg.capacity} samples; window not spanned"
        )
    newest = buf.newest_time
    if abs(newest - t) > buf.cfg.ts / 2:
        raise ValueError(f"buffer ends at t={newest}, cannot evaluate the window at t={t}")


def _double_trapezoid(samples: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Trapezoid-in-trapezoid double integral over the full window.

    The inner integrals over [sigma - T1, sigma] are differences of one
    cumulative-trapezoid prefix array, evaluated on the outer grid (the last
    N2+1 samples), then integrated once more by trapezoid.
    """
    ts, n1 = cfg.ts, cfg.n1
    prefix = np.zeros_like(samples)
    np.cumsum((samples[1:] + samples[:-1]) * (ts / 2.0), axis=0, out=prefix[1:])
    inner = prefix[n1:] - prefix[:-n1]  # one value per outer grid point
    return ts * (inner.sum(axis=0) - (inner[0] + inner[-1]) / 2.0)


def _difference_trapezoid(samples: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Single trapezoid of the T1-shifted sample difference over the outer window."""
    ts, n1 = cfg.ts, cfg.n1
    diff = samples[n1:] - samples[:-n1]
    return ts * (diff.sum(axis=0) - (diff[0] + diff[-1]) / 2.0)


def double_integral(buf: SampleBuffer, selector: str, t: float, cfg: WindowConfig) -> np.ndarray:
    """F(t) or U(t): the double window integral of position or input samples."""
    if selector == "position":
        samples = buf.positions()
    elif selector == "input":
        samples = buf.inputs()
    else:
        raise ValueError(f"unknown selector {selector!r}; use 'position' or 'input'")
    _check_span(buf, t)
    return _double_trapezoid(samples, cfg)


def g_difference_integral(buf: SampleBuffer, t: float, cfg: WindowConfig) -> np.ndarray:
    """G(t): single integral of p(sigma) - p(sigma - T1) over the outer window."""
    _check_span(buf, t)
    return _difference_trapezoid(buf.positions(), cfg)


def build_regressor(buf: SampleBuffer, t: float, t0: float, cfg: WindowConfig) -> Regressor:
    """Assemble the window regressor at time t, zero before the first full window."""
    n = buf.state_dim
    m = buf.input_dim
    if t - t0 < cfg.t1 + cfg.t2 - cfg.ts / 2.0:
        return Regressor.zero(n, m, t)
    _check_span(buf, t)
    pos = buf.positions()
    f_vec = _double_trapezoid(pos, cfg)
    g_vec = _difference_trapezoid(pos, cfg)
    u_vec = _double_trapezoid(buf.inputs(), cfg)
    # position stencil at exact grid indices: oldest, t-T1, t-T2, newest
    n1, n2 = cfg.n1, cfg.n2
    fcal = pos[0] - pos[n2] + pos[-1] - pos[n1]
    gcal = np.hstack(
        [kron_row_block(f_vec, n), kron_row_block(g_vec, n), kron_row_block(u_vec, n)]
    )
    return Regressor(fcal=fcal, gcal=gcal, t=t)
