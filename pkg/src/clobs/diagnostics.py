"""Truth-based diagnostics, kept out of the estimation path.

Everything here may read the true state (q in particular). The observer and
estimator never import this module; it exists so the harness can grade a run:
Lyapunov-style energy traces, exponential-decay fits, and the gain-condition
report.
"""

from __future__ import annotations

import numpy as np


def r_signal(q_tilde: np.ndarray, p_tilde: np.ndarray, eta: np.ndarray, alpha: float) -> np.ndarray:
    """Filtered error r = q_tilde + alpha p_tilde + eta (needs true velocity)."""
    return q_tilde + alpha * p_tilde + eta


def observer_energy(p_tilde: np.ndarray, eta: np.ndarray, r: np.ndarray) -> np.ndarray:
    """V_r = (|p_tilde|^2 + |eta|^2 + |r|^2) / 2, vectorized over leading axis."""
    p_tilde = np.asarray(p_tilde)
    square = lambda a: np.sum(np.asarray(a) ** 2, axis=-1)
    return 0.5 * (square(p_tilde) + square(eta) + square(r))


def parameter_energy(theta_tilde: np.ndarray, gamma: np.ndarray) -> float:
    """V_theta = theta_tilde^T Gamma^{-1} theta_tilde / 2 for one tick."""
    return 0.5 * float(theta_tilde @ np.linalg.solve(gamma, theta_tilde))


def lyapunov_trace(
    p_tilde: np.ndarray,
    q_tilde: np.ndarray,
    eta: np.ndarray,
    v_theta: np.ndarray,
    alpha: float,
):
    """Per-tick energy traces (V_r, V_theta, V) from aligned signal arrays.

    The parameter part is passed in precomputed (it needs the gain matrix at
    each tick, which the harness evaluates online); the observer part is
    assembled here from the truth-based errors.
    """
    r = r_signal(q_tilde, p_tilde, eta, alpha)
    v_r = observer_energy(p_tilde, eta, r)
    v_theta = np.asarray(v_theta, dtype=float)
    return v_r, v_theta, v_r + v_theta


def regressor_row_bound(p: np.ndarray, q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Spectral norm of Y(x, u) = [(p kron I)^T (q kron I)^T (u kron I)^T].

    The blocks satisfy (v kron I)^T (w kron I) = (v . w) I, so
    Y Y^T = (|p|^2 + |q|^2 + |u|^2) I and the norm is just the stacked
    Euclidean norm. Vectorized over the leading axis.
    """
    square = lambda a: np.sum(np.asarray(a) ** 2, axis=-1)
    return np.sqrt(square(p) + square(q) + square(u))


def decay_slope(times: np.ndarray, values: np.ndarray, t_start: float, t_end: float) -> float:
    """Least-squares slope of log(values) over [t_start, t_end].

    Returns NaN when fewer than two samples fall in the interval or the
    values are not strictly positive there.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= t_start) & (times <= t_end)
    if sel.sum() < 2 or np.any(values[sel] <= 0):
        return float("nan")
    return float(np.polyfit(times[sel], np.log(values[sel]), 1)[0])


def gain_condition_report(
    alpha: float,
    beta: float,
    k: float,
    k_theta: float,
    lambda_min_final: float,
    y_bar: float,
) -> str:
    """Evaluate the two sufficient gain conditions against run measurements.

    The observer condition beta > (1+alpha^2)^2/(4 alpha) and the learning
    condition k * k_theta * c > Y_bar^2 / 4 (using the achieved Gram minimum
    eigenvalue for c and the measured regressor-row bound for Y_bar) are
    sufficient, not necessary; runs regularly converge with them violated,
    so this is informational only.
    """
    beta_bound = (1.0 + alpha**2) ** 2 / (4.0 * alpha)
    beta_ok = beta > beta_bound
    learn_lhs = k * k_theta * lambda_min_final
    learn_rhs = y_bar**2 / 4.0
    learn_ok = learn_lhs > learn_rhs
    lines = [
        "observer gain condition beta > (1+alpha^2)^2/(4 alpha): "
        f"{'SATISFIED' if beta_ok else 'VIOLATED'} "
        f"(beta={beta:.6g} vs bound={beta_bound:.6g})",
        "learning gain condition k*k_theta*c > Y_bar^2/4: "
        f"{'SATISFIED' if learn_ok else 'VIOLATED'} "
        f"(lhs={learn_lhs:.6g} vs rhs={learn_rhs:.6g}, "
        f"c=lambda_min={lambda_min_final:.6g}, Y_bar={y_bar:.6g})",
    ]
    return "\n".join(lines)
