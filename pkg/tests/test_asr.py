import itertools
import math

import numpy as np
import pytest

from phyrec.asr import (
    CalibrationResult,
    calibrate_dilution,
    diluted_estimates,
    diluted_root_estimator,
    diluted_state_sets,
    diluted_tree_event,
    estimate_error_channel,
    exact_root_posterior,
    majority_estimates,
    majority_root_estimator,
)
from phyrec.errors import CalibrationError
from phyrec.model import potts_rate_matrix, transition_matrix, validate_gtr
from phyrec.tree import Phylogeny, homogeneous_phylogeny, random_homogeneous_phylogeny


def oracle_candidates(leaves, q, l):
    """Reference diluted-subtree test by materialising the padded tree.

    A state qualifies when there is a subtree retaining the root and, per
    retained vertex, two descendants l levels down, whose bottom vertices
    all carry the state.  Real leaves are repeated 2^pad times to reach a
    multiple of l levels.
    """
    leaves = list(leaves)
    h = len(leaves).bit_length() - 1
    big = l * math.ceil(h / l) if h else 0
    virt = [s for s in leaves for _ in range(2 ** (big - h))]

    def exists(lo, hi, depth, state):
        if depth == big:
            return virt[lo] == state
        span = (hi - lo) // 2 ** l
        found = sum(exists(lo + j * span, lo + (j + 1) * span, depth + l, state)
                    for j in range(2 ** l))
        return found >= 2

    return [exists(0, len(virt), 0, i) for i in range(q)]


@pytest.mark.parametrize("q,h,l", [(2, 3, 2), (3, 2, 1), (2, 2, 2), (2, 1, 2)])
def test_diluted_state_sets_exhaustive(q, h, l):
    n = 2 ** h
    for pattern in itertools.product(range(q), repeat=n):
        leaves = np.array(pattern)
        got = diluted_state_sets(leaves, q, l)
        assert got.tolist() == oracle_candidates(pattern, q, l), pattern


@pytest.mark.parametrize("q,h,l,seed", [(2, 4, 3, 61), (4, 3, 2, 62), (3, 4, 4, 63)])
def test_diluted_state_sets_random_patterns(q, h, l, seed):
    rng = np.random.default_rng(seed)
    batch = rng.integers(q, size=(400, 2 ** h))
    got = diluted_state_sets(batch, q, l)
    assert got.shape == (400, q)
    for row, pattern in zip(got, batch):
        assert row.tolist() == oracle_candidates(pattern, q, l)


def test_diluted_tree_event_matches_sets():
    rng = np.random.default_rng(64)
    for _ in range(50):
        pattern = rng.integers(3, size=8)
        sets = diluted_state_sets(pattern, 3, 2)
        for state in range(3):
            assert diluted_tree_event(pattern, state, 2) == bool(sets[state])


def test_diluted_state_sets_rejects_bad_input():
    with pytest.raises(ValueError):
        diluted_state_sets(np.zeros(8, dtype=int), 2, 0)
    with pytest.raises(ValueError):
        diluted_state_sets(np.zeros(6, dtype=int), 2, 1)  # not a power of two


def test_diluted_estimator_law_on_monochromatic_leaves():
    # all leaves carry 3: candidate set is exactly {3}; the guess-and-keep
    # rule then answers 3 with probability 1/4 + (3/4)(1/3) = 1/2
    leaves = np.full(4, 3)
    rng = np.random.default_rng(65)
    draws = np.array([diluted_root_estimator(leaves, 4, 1, rng)
                      for _ in range(3000)])
    freq3 = np.mean(draws == 3)
    assert abs(freq3 - 0.5) < 0.05
    others = [np.mean(draws == s) for s in range(3)]
    assert all(abs(f - 1.0 / 6) < 0.05 for f in others)


def test_diluted_estimates_matches_scalar_law():
    # tile one fixed leaf vector: the batched estimator must reproduce the
    # guess-and-keep law of the scalar one (candidate set {3}, see above)
    batch = np.tile(np.full((1, 4), 3), (3000, 1))
    draws = diluted_estimates(batch, 4, 1, np.random.default_rng(66))
    assert draws.shape == (3000,)
    assert abs(np.mean(draws == 3) - 0.5) < 0.05
    for s in range(3):
        assert abs(np.mean(draws == s) - 1.0 / 6) < 0.05


def test_majority_estimator():
    rng = np.random.default_rng(67)
    assert majority_root_estimator(np.array([0, 0, 1, 2]), rng) == 0
    assert majority_root_estimator(np.array([2, 2, 2, 2]), rng) == 2
    # two-way tie breaks uniformly
    draws = majority_estimates(np.tile(np.array([[0, 1]]), (2000, 1)), 2, rng)
    ones = int(draws.sum())
    assert 800 < ones < 1200
    # vectorised and scalar paths agree on untied rows
    batch = rng.integers(3, size=(300, 9))
    vec = majority_estimates(batch, 3, rng)
    for i in range(300):
        counts = np.bincount(batch[i], minlength=3)
        if (counts == counts.max()).sum() == 1:
            assert vec[i] == counts.argmax()


def test_estimate_error_channel_shallow_signal():
    phy = homogeneous_phylogeny(2, 0.25)
    est = estimate_error_channel(phy, 4, 1, 6000, np.random.default_rng(68))
    assert est.sample_count == 6000
    assert est.counts.sum() == 6000
    assert np.allclose(est.matrix.sum(axis=1), 1.0, atol=1e-9)
    diag = float(np.mean(np.diag(est.matrix)))
    assert diag > 0.25  # clear signal this shallow
    assert not est.no_signal
    assert math.isfinite(est.b_hat) and est.b_hat > 0
    assert est.eps_hat > 0 and math.isfinite(est.b_bar)


def test_estimate_error_channel_no_signal_flag():
    # far above the percolation threshold nothing survives depth 6
    phy = homogeneous_phylogeny(6, 2.5)
    est = estimate_error_channel(phy, 2, 1, 4000, np.random.default_rng(69))
    diag = float(np.mean(np.diag(est.matrix)))
    assert est.no_signal == (diag <= 0.5)
    assert abs(diag - 0.5) < 0.05


def test_calibrate_dilution_subcritical():
    result = calibrate_dilution(2, 0.2, 3, np.random.default_rng(70),
                                l_max=4, trials=4000)
    assert isinstance(result, CalibrationResult)
    assert 1 <= result.l <= 4
    assert result.eps_hat > 0
    assert result.fp_hat <= result.eps_hat / 2
    assert result.table[-1][0] == result.l


def test_calibrate_dilution_failure_has_table():
    # tau close to ln 2 at this depth: candidate frequencies never separate
    with pytest.raises(CalibrationError) as exc:
        calibrate_dilution(2, 0.65, 6, np.random.default_rng(71),
                           l_max=3, trials=2000)
    table = exc.value.table
    assert [row[0] for row in table] == [1, 2, 3]
    assert all(len(row) == 3 for row in table)


def test_calibrate_dilution_rejects_trace_level_signal():
    # At q=64, g=0.5, the l=2 candidate sets are almost always empty by
    # depth 8: a handful of lucky hits must not count as a usable level.
    with pytest.raises(CalibrationError) as exc:
        calibrate_dilution(64, 0.5, 8, np.random.default_rng(73),
                           l_max=2, trials=4000)
    table = exc.value.table
    assert [row[0] for row in table] == [1, 2]
    assert all(eps < 0.01 for _, eps, _ in table)


def test_calibrate_dilution_rejects_bad_g():
    rng = np.random.default_rng(72)
    for g in (0.0, -0.1, math.log(2.0), 1.5):
        with pytest.raises(ValueError):
            calibrate_dilution(2, g, 3, rng)


def brute_posterior(phy, model, leaf_states):
    """Posterior by explicit summation over internal assignments."""
    q = model.q
    edge = [None] + [transition_matrix(model, phy.edge_tau[v])
                     for v in range(1, phy.n_nodes)]
    n_internal = phy.first_leaf
    post = np.zeros(q)
    for internal in itertools.product(range(q), repeat=n_internal):
        states = tuple(internal) + tuple(leaf_states)
        p = model.pi[states[0]]
        for v in range(1, phy.n_nodes):
            p *= edge[v][states[Phylogeny.parent(v)], states[v]]
        post[states[0]] += p
    return post / post.sum()


def test_exact_root_posterior_vs_enumeration():
    rng = np.random.default_rng(73)
    for _ in range(20):
        q = int(rng.integers(2, 4))
        h = int(rng.integers(1, 4))
        phy = random_homogeneous_phylogeny(h, 0.05, 1.2, rng)
        if rng.random() < 0.5:
            model = potts_rate_matrix(q)
        else:
            s = rng.uniform(0.5, 2.0, size=(q, q))
            s = 0.5 * (s + s.T)
            pi = rng.dirichlet(np.full(q, 5.0))
            rate = s * pi[None, :]
            np.fill_diagonal(rate, 0.0)
            np.fill_diagonal(rate, -rate.sum(axis=1))
            model, _ = validate_gtr(q, rate, pi)
        leaves = rng.integers(q, size=phy.n_leaves)
        got = exact_root_posterior(phy, model, leaves)
        assert got.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(got - brute_posterior(phy, model, leaves))) < 1e-12


def test_exact_root_posterior_symmetry():
    # two leaves in different states across equal edges: posterior uniform
    phy = homogeneous_phylogeny(1, 0.3)
    post = exact_root_posterior(phy, potts_rate_matrix(2), np.array([0, 1]))
    assert np.allclose(post, 0.5, atol=1e-14)


def test_exact_root_posterior_validates_shape():
    phy = homogeneous_phylogeny(2, 0.3)
    with pytest.raises(ValueError):
        exact_root_posterior(phy, potts_rate_matrix(2), np.array([0, 1]))
