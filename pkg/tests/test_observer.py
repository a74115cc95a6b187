import inspect
import warnings

import numpy as np
import pytest

from clobs.linalg import theta_dim
from clobs.observer import Observer, ObserverConfig, nu

TS = 5e-4


def quiet_config(alpha=2.0, beta=2.0, k=10.0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ObserverConfig(alpha=alpha, beta=beta, k=k)


def make_observer(y0=None, theta0=None, cfg=None):
    y0 = np.zeros(2) if y0 is None else y0
    theta0 = np.zeros(theta_dim(2, 2)) if theta0 is None else theta0
    return Observer(cfg or quiet_config(), y0, theta0, n=2, m=2)


def test_nu_zero_inputs():
    assert np.array_equal(nu(np.zeros(2), np.zeros(2), quiet_config()), np.zeros(2))


def test_nu_table_gains_arithmetic():
    # k + alpha + beta = 14: nu = [1 - 1.4, 0] = [-0.4, 0]
    val = nu(np.array([1.0, 0.0]), np.array([0.1, 0.0]), quiet_config())
    assert np.allclose(val, [-0.4, 0.0], rtol=1e-12)


def test_nu_reduces_to_p_tilde_without_eta():
    p_tilde = np.array([0.3, -0.7])
    assert np.array_equal(nu(p_tilde, np.zeros(2), quiet_config()), p_tilde)


def test_gain_condition_warning_raised():
    with pytest.warns(UserWarning, match="boundedness"):
        ObserverConfig(alpha=2.0, beta=2.0, k=10.0)


def test_gain_condition_satisfied_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ObserverConfig(alpha=2.0, beta=4.0, k=10.0)  # 4 > 3.125


def test_config_rejects_nonpositive_gains():
    with pytest.raises(ValueError):
        quiet_config(alpha=-1.0)


def test_initialization_matches_first_measurement():
    y0 = np.array([0.5, -0.25])
    obs = make_observer(y0=y0)
    assert np.array_equal(obs.p_hat, y0)
    assert np.array_equal(obs.eta_integral_acc, np.zeros(2))


def test_zero_error_zero_parameters_is_quiescent():
    # y tracking p_hat exactly and theta = 0 leaves every signal at zero
    obs = make_observer()
    theta0 = np.zeros(12)
    for _ in range(200):
        out = obs.update(obs.p_hat.copy(), np.zeros(2), theta0, theta0, TS)
        assert np.array_equal(out.eta, np.zeros(2))
        assert np.array_equal(out.q_hat, np.zeros(2))
        assert np.array_equal(out.nu, np.zeros(2))
    assert np.array_equal(obs.p_hat, np.zeros(2))


def test_q_hat_is_integral_of_nu_when_theta_zero():
    rng = np.random.default_rng(0)
    obs = make_observer(y0=np.zeros(2))
    theta0 = np.zeros(12)
    nu_sum = np.zeros(2)
    for k in range(500):
        y = np.array([np.sin(0.01 * k), 0.5 * np.cos(0.02 * k) - 0.5]) + 0.01 * rng.normal(size=2)
        out = obs.update(y, rng.normal(size=2), theta0, theta0, TS)
        assert np.allclose(out.q_hat, nu_sum, rtol=0, atol=1e-12)
        nu_sum = nu_sum + TS * out.nu


def test_initial_q_hat_zero_even_with_nonzero_theta0():
    # the constant boundary term cancels A2_hat(t0) p(t0) exactly at start-up
    rng = np.random.default_rng(1)
    theta0 = rng.normal(size=12)
    y0 = rng.normal(size=2)
    obs = make_observer(y0=y0, theta0=theta0)
    out = obs.update(y0, np.zeros(2), theta0, np.zeros(12), TS)
    assert np.allclose(out.q_hat, np.zeros(2), atol=1e-14)


def test_p_hat_constant_while_q_hat_zero():
    obs = make_observer(y0=np.array([1.0, 2.0]))
    theta0 = np.zeros(12)
    for _ in range(50):
        obs.update(np.array([1.0, 2.0]), np.zeros(2), theta0, theta0, TS)
    assert np.allclose(obs.p_hat, [1.0, 2.0], atol=1e-14)


def test_update_signature_takes_no_velocity():
    params = list(inspect.signature(Observer.update).parameters)
    assert params == ["self", "y", "u", "theta_hat", "theta_hat_dot", "ts"]


def test_observer_module_never_touches_the_plant():
    # structural audit: the observer may see measurements, inputs, parameter
    # estimates and gains; it must have no code path into the simulator
    import clobs.observer as module

    source = inspect.getsource(module)
    assert "from .plant" not in source and "clobs.plant" not in source
    assert "import plant" not in source
    assert "PlantState" not in source and "true_theta" not in source
    for value in vars(module).values():
        mod_name = getattr(value, "__module__", "") or ""
        assert not mod_name.endswith(".plant")


def test_dual_form_equivalence_on_euler_run(euler_run):
    from clobs.acceptance import (
        eta_differential_oracle,
        q_hat_differential_oracle,
        relative_agreement,
    )

    assert relative_agreement(euler_run.trace.q_hat, q_hat_differential_oracle(euler_run)) <= 1e-6
    assert relative_agreement(euler_run.trace.eta, eta_differential_oracle(euler_run)) <= 1e-6
