import math

import numpy as np
import pytest

from clobs.plant import (
    NoiseModel,
    PlantParams,
    PlantState,
    desired_trajectory,
    euler_step,
    measure,
    reference_plant,
    tracking_control,
    true_theta,
)

TS = 5e-4


def test_true_theta_reference_plant():
    theta = true_theta(reference_plant())
    assert theta.size == 12
    assert np.array_equal(theta, [2, 1, 3, 2, 1, 1, 5, 8, 1, 0, 3, 1])


def test_true_theta_zero_plant():
    params = PlantParams(a1=np.zeros((2, 2)), a2=np.zeros((2, 2)), b=np.zeros((2, 2)))
    assert np.array_equal(true_theta(params), np.zeros(12))


def test_true_theta_scalar_plant():
    params = PlantParams(a1=[[2.0]], a2=[[3.0]], b=[[4.0]])
    assert np.array_equal(true_theta(params), [2.0, 3.0, 4.0])


def test_euler_step_equilibrium():
    params = reference_plant()
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    nxt = euler_step(state, np.zeros(2), TS, params)
    assert np.array_equal(nxt.p, np.zeros(2))
    assert np.array_equal(nxt.q, np.zeros(2))
    assert nxt.t == TS


def test_euler_step_hand_computed_free_response():
    params = reference_plant()
    state = PlantState(p=np.array([1.0, 0.0]), q=np.zeros(2))
    nxt = euler_step(state, np.zeros(2), TS, params)
    assert np.array_equal(nxt.p, [1.0, 0.0])
    assert np.allclose(nxt.q, [0.0010, 0.0005], rtol=0, atol=1e-15)


def test_euler_step_hand_computed_forced_response():
    params = reference_plant()
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    nxt = euler_step(state, np.array([1.0, 0.0]), TS, params)
    assert np.allclose(nxt.q, [0.0005, 0.0], rtol=0, atol=1e-15)


def test_euler_step_is_linear():
    params = reference_plant()
    rng = np.random.default_rng(0)
    for _ in range(20):
        p1, q1, p2, q2 = rng.normal(size=(4, 2))
        u1, u2 = rng.normal(size=(2, 2))
        a = euler_step(PlantState(p=p1, q=q1), u1, TS, params)
        b = euler_step(PlantState(p=p2, q=q2), u2, TS, params)
        c = euler_step(PlantState(p=p1 + p2, q=q1 + q2), u1 + u2, TS, params)
        assert np.allclose(c.p, a.p + b.p, rtol=1e-12, atol=1e-14)
        assert np.allclose(c.q, a.q + b.q, rtol=1e-12, atol=1e-14)


def test_euler_step_rejects_bad_dimensions():
    params = reference_plant()
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    with pytest.raises(ValueError):
        euler_step(state, np.zeros(3), TS, params)


def test_desired_trajectory_at_zero():
    pd, qd, qdd = desired_trajectory(0.0)
    assert np.allclose(pd, [0.0, 0.0], atol=1e-15)
    assert np.allclose(qd, [11.0, 11.0], atol=1e-12)
    assert np.allclose(qdd, [0.0, 0.0], atol=1e-12)


def test_desired_trajectory_sine_zeros():
    pd, _, _ = desired_trajectory(math.pi)
    assert np.allclose(pd, 0.0, atol=1e-12)


def test_desired_trajectory_quarter_period():
    pd, _, _ = desired_trajectory(math.pi / 2)
    assert np.allclose(pd, 1.0, atol=1e-12)


def test_tracking_control_feedforward_on_trajectory():
    # with zero tracking error the cancelling controller is pure feedforward
    params = reference_plant()
    t = 0.7
    pd, qd, qdd = desired_trajectory(t)
    state = PlantState(p=pd, q=qd, t=t)
    u = tracking_control(state, t, params, gains=(10.0, 10.0), cancel_model=True)
    x = np.concatenate([pd, qd])
    expected = np.linalg.inv(params.b) @ (qdd - np.hstack([params.a1, params.a2]) @ x)
    assert np.allclose(u, expected, rtol=1e-12, atol=1e-12)


def test_tracking_control_hand_computed_at_origin():
    # x = 0 at t = 0: u = B^+ (qdd + kd qd + kp pd) = B^+ [110, 110] = [-220, 110]
    params = reference_plant()
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    u = tracking_control(state, 0.0, params, gains=(10.0, 10.0), cancel_model=True)
    assert np.allclose(u, [-220.0, 110.0], rtol=1e-12)


def test_tracking_control_reduces_to_pd():
    params = PlantParams(a1=np.zeros((2, 2)), a2=np.zeros((2, 2)), b=np.eye(2))
    p = np.array([0.3, -0.4])
    q = np.array([1.0, 2.0])
    state = PlantState(p=p, q=q)
    u = tracking_control(state, 0.0, params, gains=(3.0, 7.0), cancel_model=True)
    pd, qd, qdd = desired_trajectory(0.0)
    assert np.allclose(u, qdd - 7.0 * (q - qd) - 3.0 * (p - pd), rtol=1e-12)


def test_tracking_control_rejects_singular_b():
    params = PlantParams(a1=np.zeros((2, 2)), a2=np.zeros((2, 2)),
                         b=np.array([[1.0, 1.0], [1.0, 1.0]]))
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    with pytest.raises(ValueError, match="ill-conditioned"):
        tracking_control(state, 0.0, params)


def test_measure_noise_free_is_exact():
    state = PlantState(p=np.array([0.25, -1.5]), q=np.zeros(2))
    y = measure(state, NoiseModel(variance=0.0, seed=5))
    assert np.array_equal(y, state.p)


def test_measure_seeded_stream_reproducible():
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    seq = []
    for _ in range(2):
        noise = NoiseModel(variance=0.001, seed=42)
        seq.append(np.array([measure(state, noise) for _ in range(100)]))
    assert np.array_equal(seq[0], seq[1])


def test_measure_sample_variance():
    state = PlantState(p=np.zeros(2), q=np.zeros(2))
    noise = NoiseModel(variance=0.01, seed=7)
    draws = np.array([measure(state, noise) for _ in range(50_000)]).ravel()
    assert 0.0095 <= draws.var() <= 0.0105


def test_noise_model_rejects_negative_variance():
    with pytest.raises(ValueError):
        NoiseModel(variance=-1.0, seed=0)


def test_closed_loop_stays_bounded(nf_run):
    peaks = nf_run.aggregates.peaks
    assert max(peaks["p"], peaks["q"]) < 1e3
