"""History stack with minimum-eigenvalue-maximizing recording.

The stack holds M window regressor pairs (Fcal_i, Gcal_i). A new candidate
fills empty (all-zero initialized) slots first; once full, it replaces the
stored pair whose substitution maximizes the minimum eigenvalue of the Gram
matrix sum(Gcal_i^T Gcal_i), and only if that strictly improves on the
current value. The minimum eigenvalue of the Gram is therefore
nondecreasing over the life of the stack, and once it exceeds a positive
threshold it stays above it.
"""

from __future__ import annotations

import struct
from typing import Optional

import numpy as np

from .linalg import min_eigenvalue_symmetric
from .windows import Regressor

# minimum lambda_min gain to accept a replacement; keeps eigensolver noise
# from churning the stack
IMPROVEMENT_TOL = 1e-12

_MAGIC = b"CLHS"
_VERSION = 1


class HistoryStack:
    """M regressor pairs plus the cached Gram matrix and its minimum eigenvalue."""

    def __init__(self, size: int, n: int, dim: int, rank_threshold: Optional[float] = None):
        if size < 1:
            raise ValueError("stack size must be >= 1")
        self.size = size
        self.n = n
        self.dim = dim
        self.rank_threshold = rank_threshold
        self.f_entries = np.zeros((size, n))
        self.g_entries = np.zeros((size, n, dim))
        self.times = np.full(size, np.nan)
        self.filled = 0
        self.gram = np.zeros((dim, dim))
        self.cross = np.zeros(dim)
        self.lambda_min = 0.0
        self.rank_time: Optional[float] = None
        self._outer = np.zeros((size, dim, dim))  # cached Gcal_i^T Gcal_i per slot

    def try_record(self, candidate: Regressor) -> bool:
        """Offer a candidate pair; returns True if the stack changed.

        All-zero candidates (window not yet full) are rejected outright: they
        cannot increase the minimum eigenvalue.
        """
        fcal = np.asarray(candidate.fcal, dtype=float)
        gcal = np.asarray(candidate.gcal, dtype=float)
        if fcal.shape != (self.n,) or gcal.shape != (self.n, self.dim):
            raise ValueError(
                f"candidate dimensions {fcal.shape}/{gcal.shape} do not match "
                f"stack configuration ({self.n},)/({self.n}, {self.dim})"
            )
        if candidate.is_zero:
            return False

        outer = gcal.T @ gcal
        if self.filled < self.size:
            slot = self.filled
            self.filled += 1
        else:
            # best single-slot replacement by exhaustive search, ties to the
            # lowest index; accept only on strict lambda_min improvement
            best_slot = -1
            best_lam = self.lambda_min + IMPROVEMENT_TOL
            for j in range(self.size):
                lam = min_eigenvalue_symmetric(self.gram - self._outer[j] + outer)
                if lam > best_lam:
                    best_slot = j
                    best_lam = lam
            if best_slot < 0:
                return False
            slot = best_slot

        self.f_entries[slot] = fcal
        self.g_entries[slot] = gcal
        self._outer[slot] = outer
        self.times[slot] = candidate.t
        # rebuild the caches from the stored pairs: accepts are rare, and an
        # exact rebuild removes incremental-update drift entirely
        self.gram, self.cross = self.recompute()
        # an accepted record can never decrease lambda_min (filling adds a PSD
        # term; replacement requires strict improvement), so clamp away the
        # ~1e-13 eigensolver jitter and keep the cached sequence monotone
        self.lambda_min = max(min_eigenvalue_symmetric(self.gram), self.lambda_min)
        if (
            self.rank_time is None
            and self.rank_threshold is not None
            and self.lambda_min > self.rank_threshold
        ):
            self.rank_time = candidate.t
        return True

    def is_full_rank(self, c_lower: float) -> bool:
        """Rank condition: lambda_min of the Gram strictly exceeds c_lower > 0."""
        if c_lower <= 0:
            raise ValueError("c_lower must be positive")
        return self.lambda_min > c_lower

    def gram_and_cross(self):
        """Cached (sum G_i^T G_i, sum G_i^T F_i) for the estimator update."""
        return self.gram, self.cross

    def recompute(self):
        """Gram and cross re-summed directly from the stored pairs."""
        k = self.filled
        if k == 0:
            return np.zeros((self.dim, self.dim)), np.zeros(self.dim)
        g = self.g_entries[:k]
        gram = np.einsum("kij,kil->jl", g, g)
        cross = np.einsum("kij,ki->j", g, self.f_entries[:k])
        return gram, cross

    def save(self, path) -> None:
        """Write the filled records (timestamp, Fcal, row-major Gcal) to a binary file."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIII", _VERSION, self.size, self.n, self.dim))
            fh.write(struct.pack("<I", self.filled))
            for i in range(self.filled):
                fh.write(struct.pack("<d", float(self.times[i])))
                fh.write(self.f_entries[i].astype("<f8").tobytes())
                fh.write(self.g_entries[i].astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path, rank_threshold: Optional[float] = None) -> "HistoryStack":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError(f"{path} is not a history-stack record file")
            version, size, n, dim = struct.unpack("<IIII", fh.read(16))
            if version != _VERSION:
                raise ValueError(f"unsupported record version {version}")
            (filled,) = struct.unpack("<I", fh.read(4))
            stack = cls(size=size, n=n, dim=dim, rank_threshold=rank_threshold)
            for i in range(filled):
                (t,) = struct.unpack("<d", fh.read(8))
                fcal = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
                gcal = np.frombuffer(fh.read(8 * n * dim), dtype="<f8").reshape(n, dim).copy()
                stack.try_record(Regressor(fcal=fcal, gcal=gcal, t=t))
        return stack
