import numpy as np
import pytest

from clobs import diagnostics
from clobs.linalg import kron_row_block


def test_r_signal_combination():
    q_t = np.array([1.0, 0.0])
    p_t = np.array([0.0, 2.0])
    eta = np.array([0.5, -0.5])
    assert np.array_equal(diagnostics.r_signal(q_t, p_t, eta, alpha=2.0), [1.5, 3.5])


def test_lyapunov_trace_zero_errors():
    z = np.zeros((10, 2))
    v_r, v_theta, v = diagnostics.lyapunov_trace(z, z, z, np.zeros(10), alpha=2.0)
    assert not np.any(v_r) and not np.any(v)


def test_lyapunov_trace_matches_run(nf_run):
    trace = nf_run.trace
    p_t = trace.p - trace.p_hat
    q_t = trace.q - trace.q_hat
    v_r, v_theta, v = diagnostics.lyapunov_trace(
        p_t, q_t, trace.eta, trace.v_theta, nf_run.config.observer.alpha
    )
    assert np.allclose(v_r, trace.v_r, rtol=1e-10, atol=1e-12)
    assert np.allclose(v, trace.v, rtol=1e-10, atol=1e-12)


def test_parameter_energy_identity_gain():
    theta_tilde = np.array([3.0, 4.0])
    assert diagnostics.parameter_energy(theta_tilde, np.eye(2)) == pytest.approx(12.5)


def test_regressor_row_bound_is_spectral_norm():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q, u = rng.normal(size=(3, 2))
        y = np.hstack([kron_row_block(p, 2), kron_row_block(q, 2), kron_row_block(u, 2)])
        expected = np.linalg.norm(y, 2)
        assert diagnostics.regressor_row_bound(p, q, u) == pytest.approx(expected, rel=1e-12)


def test_decay_slope_recovers_exponent():
    t = np.linspace(0, 10, 500)
    values = 7.0 * np.exp(-0.73 * t)
    slope = diagnostics.decay_slope(t, values, 1.0, 9.0)
    assert slope == pytest.approx(-0.73, rel=1e-10)


def test_decay_slope_nan_on_empty_interval():
    t = np.linspace(0, 1, 10)
    assert np.isnan(diagnostics.decay_slope(t, np.ones(10), 5.0, 6.0))


def test_gain_condition_report_flags_violations():
    report = diagnostics.gain_condition_report(
        alpha=2.0, beta=2.0, k=10.0, k_theta=0.01, lambda_min_final=0.1, y_bar=800.0
    )
    lines = report.splitlines()
    assert "VIOLATED" in lines[0] and "3.125" in lines[0]
    assert "VIOLATED" in lines[1]
    satisfied = diagnostics.gain_condition_report(
        alpha=2.0, beta=4.0, k=10.0, k_theta=10.0, lambda_min_final=5.0, y_bar=1.0
    )
    assert satisfied.count("SATISFIED") == 2
