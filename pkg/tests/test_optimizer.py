"""The uncorrected-Adam step, the SGD baseline, and trajectory assembly."""

import math

import numpy as np
import pytest

from adamabc.core import ConstraintViolation, DimensionMismatch, HyperParams, eta_at
from adamabc.optimizer import (
    AdamState,
    NonFiniteGradient,
    SgdState,
    adam_init,
    adam_step,
    eta_v_of,
    run_trajectory,
    sgd_step,
)
from adamabc.problems import make_noisy_quadratic

H1 = HyperParams(beta1=0.0, alpha0=0.5, gamma=1.25, delta=0.25, mu=0.0, v=1.0, dim=1)


def test_init_state_values():
    s = adam_init(np.array([1.0, -2.0]), HyperParams(v=3.0, dim=2))
    assert s.t == 0
    assert np.array_equal(s.w, [1.0, -2.0])
    assert np.array_equal(s.m, [0.0, 0.0])
    assert np.array_equal(s.v_vec, [3.0, 3.0])
    with pytest.raises(DimensionMismatch):
        adam_init(np.zeros(3), HyperParams(dim=2))


def test_single_step_hand_computed():
    # t=1: beta2 = 1 - alpha0 = 0.5, eta = 1; g = 2 from w = 1:
    #   v1 = 0.5*1 + 0.5*4 = 2.5,  m1 = 2,  w2 = 1 - 2/sqrt(2.5)
    s0 = adam_init(np.array([1.0]), H1)
    s1 = adam_step(s0, np.array([2.0]), H1)
    assert s1.t == 1
    assert s1.v_vec[0] == 2.5
    assert s1.m[0] == 2.0
    assert s1.w[0] == 1.0 - 2.0 / math.sqrt(2.5)
    assert s1.w[0] == -0.26491106406735176  # frozen double


def test_second_step_uses_power_law_decay():
    # t=2: beta2 = 1 - 2^-1.25, eta = 2^-0.75; constant gradient 2
    s1 = adam_step(adam_init(np.array([1.0]), H1), np.array([2.0]), H1)
    s2 = adam_step(s1, np.array([2.0]), H1)
    b2 = 1.0 - 2.0**-1.25
    v2 = b2 * 2.5 + (1.0 - b2) * 4.0
    assert s2.v_vec[0] == v2
    assert s2.w[0] == s1.w[0] - (2.0**-0.75) * 2.0 / math.sqrt(v2)


def test_step_never_mutates_input_state():
    s0 = adam_init(np.array([1.0]), H1)
    adam_step(s0, np.array([2.0]), H1)
    assert s0.w[0] == 1.0 and s0.m[0] == 0.0 and s0.v_vec[0] == 1.0
    with pytest.raises(ValueError):
        s0.w[0] = 5.0  # readonly arrays


def test_momentum_geometric_accumulation():
    h = HyperParams(beta1=0.9, dim=1)
    s = adam_init(np.zeros(1), h)
    c = 3.0
    for t in range(1, 40):
        s = adam_step(s, np.array([c]), h)
        expected = (1.0 - 0.9**t) * c
        assert s.m[0] == pytest.approx(expected, rel=1e-12)


def test_beta1_zero_copies_gradient_into_momentum():
    h = HyperParams(beta1=0.0, dim=3)
    s = adam_init(np.zeros(3), h)
    g = np.array([0.3, -1.7, 2.2])
    s = adam_step(s, g, h)
    assert np.array_equal(s.m, g)


def test_step_rejects_bad_gradients():
    s0 = adam_init(np.zeros(2), HyperParams(dim=2))
    with pytest.raises(DimensionMismatch):
        adam_step(s0, np.zeros(3), HyperParams(dim=2))
    with pytest.raises(NonFiniteGradient):
        adam_step(s0, np.array([1.0, float("nan")]), HyperParams(dim=2))
    with pytest.raises(NonFiniteGradient):
        adam_step(s0, np.array([1.0, float("inf")]), HyperParams(dim=2))


def test_eta_v_of_matches_definition():
    h = HyperParams(mu=1e-8, dim=2)
    v = np.array([4.0, 9.0])
    out = eta_v_of(v, 5, h)
    np.testing.assert_allclose(out, eta_at(5, h) / (np.array([2.0, 3.0]) + 1e-8), rtol=0)


# ---------------------------------------------------------------- sgd baseline


def test_sgd_step_exact():
    s = SgdState(t=0, w=np.array([1.0, 1.0]))
    s = sgd_step(s, np.array([1.0, -1.0]), 0.5)
    assert s.t == 1
    assert np.array_equal(s.w, [0.5, 1.5])
    with pytest.raises(ValueError):
        sgd_step(s, np.array([1.0, 1.0]), 0.0)


def test_sgd_geometric_contraction_on_unit_quadratic():
    # gradient = w on a unit eigenvalue, eta = 1/2  =>  w_t = 2^-t exactly
    s = SgdState(t=0, w=np.array([1.0]))
    for t in range(1, 30):
        s = sgd_step(s, s.w.copy(), 0.5)
        assert s.w[0] == 0.5**t


# ---------------------------------------------------------------- trajectories


def test_trajectory_matches_manual_composition(quad10, h10):
    from adamabc.problems import oracle_sample, rng_stream

    T = 5
    tr = run_trajectory(quad10, h10, T=T, seed=42)
    rng = rng_stream("trajectory", 42, "oracle")
    s = adam_init(np.ones(10), h10)
    for k in range(T):
        g = oracle_sample(quad10, s.w, rng)
        s = adam_step(s, g, h10)
        assert np.array_equal(tr.G[k], g)
        assert np.array_equal(tr.W[k + 1], s.w)
        assert np.array_equal(tr.M[k], s.m)
        assert np.array_equal(tr.V[k], s.v_vec)


def test_trajectory_replay_is_bitwise(quad10, h10):
    a = run_trajectory(quad10, h10, T=300, seed=7)
    b = run_trajectory(quad10, h10, T=300, seed=7)
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.G, b.G)
    c = run_trajectory(quad10, h10, T=300, seed=8)
    assert not np.array_equal(a.G, c.G)


def test_trajectory_converges_noiseless(quad10_noiseless, h10):
    tr = run_trajectory(quad10_noiseless, h10, T=10_000, seed=0)
    gfinal = np.linalg.norm(quad10_noiseless.eigenvalues * tr.W[-1])
    assert gfinal < 1e-3


def test_zero_start_is_fixed_point_without_noise(quad10_noiseless, h10):
    tr = run_trajectory(quad10_noiseless, h10, T=50, seed=0, w1=np.zeros(10))
    assert np.array_equal(tr.W, np.zeros((51, 10)))


def test_beta1_zero_momentum_equals_gradients(quad10):
    h = HyperParams(beta1=0.0, dim=10)
    tr = run_trajectory(quad10, h, T=100, seed=3)
    assert np.array_equal(tr.M, tr.G)


def test_hooks_observe_every_step_in_order(quad10, h10):
    seen = []

    def hook(prev, g, new, sched):
        seen.append((prev.t, new.t, sched.t, sched.eta_t))
        with pytest.raises(ValueError):
            new.w[0] = 0.0  # hooks cannot perturb the run

    run_trajectory(quad10, h10, T=4, seed=0, hooks=[hook])
    assert [x[:3] for x in seen] == [(0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 4, 4)]
    assert seen[3][3] == eta_at(4, h10)


def test_trajectory_input_validation(quad10):
    with pytest.raises(ValueError, match="T must be >= 1"):
        run_trajectory(quad10, HyperParams(dim=10), T=0, seed=0)
    with pytest.raises(ConstraintViolation, match="mu"):
        run_trajectory(quad10, HyperParams(mu=0.0, dim=10), T=5, seed=0)
    with pytest.raises(ConstraintViolation, match="gamma"):
        run_trajectory(quad10, HyperParams(gamma=2.0, delta=0.0, dim=10), T=5, seed=0)


def test_nonfinite_oracle_reports_failing_step():
    p = make_noisy_quadratic([1.0, 2.0], sigma=float("inf"))
    with pytest.raises(NonFiniteGradient, match="step 1:"):
        run_trajectory(p, HyperParams(dim=2), T=3, seed=0)
