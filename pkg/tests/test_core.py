"""Chain primitives against brute-force path enumeration."""

import numpy as np
import pytest

from nphmm import (
    LOG_FLOOR,
    ObservationSequence,
    PosteriorSet,
    TransitionModel,
    apply_log_floor,
    forward_backward,
    log_likelihood,
    map_decode,
    pseudo_log_likelihood,
    stationary_distribution,
    viterbi,
)
from nphmm.errors import (
    DimensionMismatchError,
    InputError,
    NonUniqueStationaryError,
    SequenceTooShortError,
)

from helpers import (
    brute_log_likelihood,
    brute_posteriors,
    brute_pseudo_log_likelihood,
    brute_viterbi,
    random_log_b,
    random_model,
)


# ---------------------------------------------------------------- types

def test_transition_model_validates_shapes():
    with pytest.raises(DimensionMismatchError):
        TransitionModel(init=[0.5, 0.5], q=np.full((3, 3), 1 / 3))
    with pytest.raises(InputError):
        TransitionModel(init=[0.6, 0.6], q=np.full((2, 2), 0.5))
    with pytest.raises(InputError):
        TransitionModel(init=[1.5, -0.5], q=np.full((2, 2), 0.5))


def test_transition_model_stationarity_flag():
    q = np.array([[0.7, 0.3], [0.4, 0.6]])
    assert TransitionModel(init=[4 / 7, 3 / 7], q=q).init_is_stationary
    assert not TransitionModel(init=[0.5, 0.5], q=q).init_is_stationary


def test_observation_sequence_kinds():
    seq = ObservationSequence(np.array([0, 3, 1]))
    assert seq.kind == "count" and seq.n == 3 and seq.d == 1
    seq = ObservationSequence(np.array([[0.1, 0.2], [0.3, 0.4]]))
    assert seq.kind == "real" and seq.d == 2
    with pytest.raises(InputError):
        ObservationSequence(np.array([-1, 2]), kind="count")
    with pytest.raises(InputError):
        ObservationSequence(np.array([0.5, 1.0]), kind="count")
    with pytest.raises(SequenceTooShortError):
        ObservationSequence(np.empty(0))


def test_apply_log_floor_only_touches_exact_zeros():
    log_b = np.array([[-np.inf, -700.0], [-1e308, 0.0]])
    out = apply_log_floor(log_b)
    assert out[0, 0] == LOG_FLOOR
    assert out[0, 1] == -700.0
    assert out[1, 0] == -1e308
    with pytest.raises(InputError):
        apply_log_floor(np.array([[np.nan]]))


# ------------------------------------------------- stationary distribution

def test_stationary_uniform_rows():
    pi = stationary_distribution([[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-12)


def test_stationary_two_state():
    # independent oracle: direct linear solve of (pi Q = pi, sum = 1)
    q = np.array([[0.7, 0.3], [0.4, 0.6]])
    a = np.vstack([q.T - np.eye(2), np.ones(2)])
    ref, *_ = np.linalg.lstsq(a, np.array([0.0, 0.0, 1.0]), rcond=None)
    pi = stationary_distribution(q)
    np.testing.assert_allclose(pi, [4 / 7, 3 / 7], atol=1e-12)
    np.testing.assert_allclose(pi, ref, atol=1e-10)


def test_stationary_identity_is_not_unique():
    with pytest.raises(NonUniqueStationaryError):
        stationary_distribution(np.eye(3))


def test_stationary_fixed_point_random():
    rng = np.random.default_rng(7)
    for k in (2, 3, 5, 11):
        _, q = random_model(rng, k)
        pi = stationary_distribution(q)
        np.testing.assert_allclose(pi @ q, pi, atol=1e-10)
        assert abs(pi.sum() - 1.0) < 1e-12


# ------------------------------------------------------- forward-backward

def test_forward_backward_single_state():
    trans = TransitionModel(init=[1.0], q=[[1.0]])
    log_b = np.log(np.array([[0.3], [0.6], [0.1]]))
    post = forward_backward(trans, log_b)
    np.testing.assert_allclose(post.tau, 1.0)
    np.testing.assert_allclose(post.log_lik, log_b.sum(), rtol=1e-12)


def test_forward_backward_uninformative_obs():
    q = np.array([[0.7, 0.3], [0.4, 0.6]])
    pi = stationary_distribution(q)
    trans = TransitionModel(init=pi, q=q)
    log_b = np.tile(np.log(0.25), (6, 2))
    post = forward_backward(trans, log_b)
    np.testing.assert_allclose(post.tau, np.tile(pi, (6, 1)), atol=1e-12)


def test_forward_backward_matches_enumeration():
    rng = np.random.default_rng(42)
    for k, n in [(2, 4), (2, 8), (3, 6)]:
        init, q = random_model(rng, k)
        log_b = random_log_b(rng, n, k, scale=3.0)
        trans = TransitionModel(init=init, q=q)
        post = forward_backward(trans, log_b)
        tau_ref, pair_ref, ll_ref = brute_posteriors(init, q, log_b)
        np.testing.assert_allclose(post.log_lik, ll_ref, rtol=1e-10)
        np.testing.assert_allclose(post.tau, tau_ref, atol=1e-10)
        np.testing.assert_allclose(post.pair_joint, pair_ref, atol=1e-10)


def test_posterior_set_invariants_random():
    rng = np.random.default_rng(3)
    init, q = random_model(rng, 3)
    log_b = random_log_b(rng, 40, 3, scale=4.0)
    post = forward_backward(TransitionModel(init=init, q=q), log_b)
    np.testing.assert_allclose(post.tau.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(
        post.pair_joint.sum(axis=(1, 2)), 1.0, atol=1e-10
    )
    # marginalising pair_joint reproduces tau on both sides
    np.testing.assert_allclose(
        post.pair_joint.sum(axis=2), post.tau[:-1], atol=1e-8
    )
    np.testing.assert_allclose(
        post.pair_joint.sum(axis=1), post.tau[1:], atol=1e-8
    )


def test_forward_backward_dimension_mismatch():
    trans = TransitionModel(init=[0.5, 0.5], q=np.full((2, 2), 0.5))
    with pytest.raises(DimensionMismatchError):
        forward_backward(trans, np.zeros((4, 3)))


# --------------------------------------------------------- log-likelihood

def test_log_likelihood_fair_coin():
    trans = TransitionModel(init=[0.5, 0.5], q=np.full((2, 2), 0.5))
    log_b = np.tile(np.log(0.5), (3, 2))
    assert log_likelihood(trans, log_b) == pytest.approx(np.log(1 / 8), rel=1e-12)


def test_log_likelihood_two_step_enumeration():
    q = np.array([[0.7, 0.3], [0.4, 0.6]])
    pi = stationary_distribution(q)
    f = np.array([[0.9, 0.1], [0.2, 0.8]])  # f[state, symbol]
    obs = [0, 1]
    log_b = np.log(f.T[obs])
    ref = sum(
        pi[x1] * f[x1, 0] * q[x1, x2] * f[x2, 1]
        for x1 in range(2)
        for x2 in range(2)
    )
    ll = log_likelihood(TransitionModel(init=pi, q=q), log_b)
    assert ll == pytest.approx(np.log(ref), abs=1e-12)


def test_log_likelihood_permutation_invariant():
    rng = np.random.default_rng(11)
    init, q = random_model(rng, 3)
    log_b = random_log_b(rng, 9, 3)
    trans = TransitionModel(init=init, q=q)
    perm = rng.permutation(3)
    trans_p = TransitionModel(init=init[perm], q=q[np.ix_(perm, perm)])
    ll = log_likelihood(trans, log_b)
    ll_p = log_likelihood(trans_p, log_b[:, perm])
    assert ll == pytest.approx(ll_p, rel=1e-12)


# --------------------------------------------------- pseudo log-likelihood

def test_pseudo_equals_full_at_n3():
    rng = np.random.default_rng(5)
    init, q = random_model(rng, 2)
    log_b = random_log_b(rng, 3, 2)
    trans = TransitionModel(init=init, q=q)
    assert pseudo_log_likelihood(trans, log_b) == pytest.approx(
        log_likelihood(trans, log_b), rel=1e-12
    )


def test_pseudo_single_state_factorizes():
    trans = TransitionModel(init=[1.0], q=[[1.0]])
    log_b = np.log(np.array([[0.2], [0.5], [0.1], [0.7]]))
    lf = log_b[:, 0]
    expected = (lf[0] + lf[1] + lf[2]) + (lf[1] + lf[2] + lf[3])
    assert pseudo_log_likelihood(trans, log_b) == pytest.approx(expected, rel=1e-12)


def test_pseudo_matches_enumeration():
    rng = np.random.default_rng(17)
    init, q = random_model(rng, 2)
    log_b = random_log_b(rng, 5, 2, scale=2.0)
    trans = TransitionModel(init=init, q=q)
    ref = brute_pseudo_log_likelihood(init, q, log_b)
    assert pseudo_log_likelihood(trans, log_b) == pytest.approx(ref, rel=1e-10)


def test_pseudo_requires_three_obs():
    trans = TransitionModel(init=[0.5, 0.5], q=np.full((2, 2), 0.5))
    with pytest.raises(SequenceTooShortError):
        pseudo_log_likelihood(trans, np.zeros((2, 2)))


# ----------------------------------------------------------------- viterbi

def test_viterbi_disjoint_supports():
    # state 0 only ever emits symbol 0, state 1 only symbol 1
    trans = TransitionModel(init=[0.5, 0.5], q=np.full((2, 2), 0.5))
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    obs = np.array([0, 1, 1, 0, 1])
    with np.errstate(divide="ignore"):
        log_b = apply_log_floor(np.log(f.T[obs]))
    np.testing.assert_array_equal(viterbi(trans, log_b), obs)


def test_viterbi_matches_exhaustive_argmax():
    rng = np.random.default_rng(23)
    for trial in range(5):
        init, q = random_model(rng, 2)
        log_b = random_log_b(rng, 8, 2, scale=3.0)
        path = viterbi(TransitionModel(init=init, q=q), log_b)
        best_lp, best_path = brute_viterbi(init, q, log_b)
        np.testing.assert_array_equal(path, best_path)


def test_viterbi_single_state_constant():
    trans = TransitionModel(init=[1.0], q=[[1.0]])
    path = viterbi(trans, np.full((6, 1), -0.5))
    np.testing.assert_array_equal(path, 0)


def test_viterbi_tie_breaks_to_lowest_index():
    # fully symmetric model: every path ties, lowest-index rule gives all 0s
    trans = TransitionModel(init=[0.5, 0.5], q=np.full((2, 2), 0.5))
    log_b = np.tile(np.log(0.5), (4, 2))
    np.testing.assert_array_equal(viterbi(trans, log_b), 0)


def test_viterbi_permutation_equivariant():
    rng = np.random.default_rng(29)
    init, q = random_model(rng, 3)
    log_b = random_log_b(rng, 10, 3, scale=3.0)
    perm = np.array([2, 0, 1])
    path = viterbi(TransitionModel(init=init, q=q), log_b)
    path_p = viterbi(
        TransitionModel(init=init[perm], q=q[np.ix_(perm, perm)]),
        log_b[:, perm],
    )
    np.testing.assert_array_equal(path, perm[path_p])


# -------------------------------------------------------------- map decode

def test_map_decode_rows():
    post = PosteriorSet(
        tau=np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]]),
        pair_joint=np.zeros((2, 2, 2)),
        log_lik=0.0,
    )
    np.testing.assert_array_equal(map_decode(post), [1, 0, 0])


def test_map_decode_matches_linear_scan():
    rng = np.random.default_rng(31)
    tau = rng.dirichlet(np.ones(4), size=25)
    post = PosteriorSet(tau=tau, pair_joint=None, log_lik=0.0)
    ref = [max(range(4), key=lambda j: row[j]) for row in tau]
    np.testing.assert_array_equal(map_decode(post), ref)


# ------------------------------------------------------ long-run stability

def test_recursions_stay_finite_on_long_tiny_density_sequences():
    rng = np.random.default_rng(101)
    init, q = random_model(rng, 3)
    n = 1_000_000
    log_b = np.full((n, 3), LOG_FLOOR)
    log_b[np.arange(n), rng.integers(0, 3, size=n)] = -0.1
    trans = TransitionModel(init=init, q=q)
    post = forward_backward(trans, log_b)
    assert np.isfinite(post.log_lik)
    assert np.all(np.isfinite(post.tau))
    path = viterbi(trans, log_b)
    assert path.shape == (n,)
