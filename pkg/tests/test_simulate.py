import numpy as np
import pytest
from scipy import stats

from phyrec.errors import EnumerationTooLargeError, UnsupportedModelError
from phyrec.model import potts_rate_matrix, transition_matrix, validate_gtr
from phyrec.simulate import (
    Alignment,
    broadcast_sample,
    exact_leaf_distribution,
    potts_batch_sample,
    random_cluster_sample,
    read_alignment,
    sample_alignment,
    write_alignment,
)
from phyrec.tree import Phylogeny, homogeneous_phylogeny, random_homogeneous_phylogeny


def random_gtr_model(q, rng):
    s = rng.uniform(0.5, 2.0, size=(q, q))
    s = 0.5 * (s + s.T)
    pi = rng.dirichlet(np.full(q, 5.0))
    rate = s * pi[None, :]
    np.fill_diagonal(rate, 0.0)
    np.fill_diagonal(rate, -rate.sum(axis=1))
    model, _ = validate_gtr(q, rate, pi)
    return model


def brute_leaf_distribution(phy, model):
    """Joint leaf law by looping over every internal-state assignment."""
    q, n = model.q, phy.n_leaves
    edge = [None] + [transition_matrix(model, phy.edge_tau[v])
                     for v in range(1, phy.n_nodes)]
    n_internal = phy.first_leaf
    out = np.zeros((q,) * n)
    for internal in np.ndindex(*(q,) * n_internal):
        for leaves in np.ndindex(*(q,) * n):
            states = internal + leaves
            p = model.pi[states[0]]
            for v in range(1, phy.n_nodes):
                p *= edge[v][states[Phylogeny.parent(v)], states[v]]
            # grid axes follow labels, not positions
            out[tuple(leaves[phy.node_of_label(lab) - phy.first_leaf]
                      for lab in range(1, n + 1))] += p
    return out


def test_exact_leaf_distribution_is_a_law():
    phy = homogeneous_phylogeny(2, 0.4)
    law = exact_leaf_distribution(phy, potts_rate_matrix(3))
    assert law.shape == (3, 3, 3, 3)
    assert law.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(law >= 0)
    # symmetric model: uniform single-leaf marginals
    for axis in range(4):
        marg = law.sum(axis=tuple(a for a in range(4) if a != axis))
        assert np.allclose(marg, 1.0 / 3, atol=1e-12)


def test_exact_leaf_distribution_vs_brute_force():
    rng = np.random.default_rng(51)
    for q, h in [(2, 2), (3, 2), (2, 3)]:
        phy = random_homogeneous_phylogeny(h, 0.1, 0.8, rng)
        model = random_gtr_model(q, rng) if q == 3 else potts_rate_matrix(q)
        law = exact_leaf_distribution(phy, model)
        brute = brute_leaf_distribution(phy, model)
        assert np.max(np.abs(law - brute)) < 1e-12


def test_exact_leaf_distribution_axes_follow_labels():
    rng = np.random.default_rng(52)
    tau = np.array([0.0, 0.2, 0.5, 0.3, 0.7, 0.15, 0.4])
    plain = Phylogeny(h=2, edge_tau=tau, leaf_labels=np.array([1, 2, 3, 4]))
    shuffled = Phylogeny(h=2, edge_tau=tau, leaf_labels=np.array([3, 1, 4, 2]))
    model = potts_rate_matrix(2)
    law_p = exact_leaf_distribution(plain, model)
    law_s = exact_leaf_distribution(shuffled, model)
    # axis i always carries label i+1: moving label x to position j only
    # permutes which tree leaf the axis describes
    # position order of shuffled is labels (3,1,4,2) -> its label-ordered law
    # equals the plain law with axes mapped through the same permutation
    assert np.allclose(law_s, np.transpose(law_p, (1, 3, 0, 2)), atol=1e-15)


def test_enumeration_limit():
    with pytest.raises(EnumerationTooLargeError):
        exact_leaf_distribution(homogeneous_phylogeny(4, 0.3), potts_rate_matrix(64))


def chisq_pvalue(samples, law):
    """Goodness-of-fit p-value of leaf samples against an exact law."""
    q = law.shape[0]
    n = law.ndim
    radix = q ** np.arange(n - 1, -1, -1)
    codes = samples @ radix
    counts = np.bincount(codes, minlength=q ** n)
    expected = law.reshape(-1) * len(samples)
    keep = expected > 0
    _, p = stats.chisquare(counts[keep], expected[keep])
    return p


def test_samplers_match_exact_law():
    phy = homogeneous_phylogeny(2, 0.4)
    model = potts_rate_matrix(3)
    law = exact_leaf_distribution(phy, model)
    rng = np.random.default_rng(53)
    k = 20_000
    for sampler in ("broadcast", "cluster"):
        align = sample_alignment(phy, model, k, rng, sampler=sampler)
        assert chisq_pvalue(align.states, law) > 1e-3
    batch = potts_batch_sample(phy, 3, k, rng)
    assert chisq_pvalue(batch[:, phy.first_leaf:], law) > 1e-3


def test_broadcast_handles_gtr_models():
    rng = np.random.default_rng(54)
    model = random_gtr_model(3, rng)
    phy = homogeneous_phylogeny(2, 0.5)
    law = exact_leaf_distribution(phy, model)
    align = sample_alignment(phy, model, 20_000, rng, sampler="broadcast")
    assert chisq_pvalue(align.states, law) > 1e-3


def test_cluster_sampler_requires_symmetry():
    rng = np.random.default_rng(55)
    model = random_gtr_model(3, rng)
    with pytest.raises(UnsupportedModelError):
        sample_alignment(homogeneous_phylogeny(2, 0.3), model, 10, rng,
                         sampler="cluster")


def test_unknown_sampler_rejected():
    rng = np.random.default_rng(56)
    with pytest.raises(ValueError):
        sample_alignment(homogeneous_phylogeny(1, 0.3), potts_rate_matrix(2),
                         5, rng, sampler="exact")


def test_degenerate_edges_copy_states():
    # tau = 0 everywhere: every node inherits the root state
    phy = homogeneous_phylogeny(3, 0.0)
    rng = np.random.default_rng(57)
    for draw in (broadcast_sample(phy, potts_rate_matrix(4), rng),
                 random_cluster_sample(phy, 4, rng)):
        assert draw.shape == (phy.n_nodes,)
        assert len(set(draw.tolist())) == 1


def test_leaf_columns_follow_labels():
    rng = np.random.default_rng(58)
    phy = random_homogeneous_phylogeny(3, 0.2, 0.6, rng)
    align, full = sample_alignment(phy, potts_rate_matrix(4), 50, rng,
                                   keep_internal=True)
    assert align.node_ids == list(range(1, 9))
    assert full.shape == (50, phy.n_nodes)
    for lab in range(1, 9):
        assert np.array_equal(align.column(lab), full[:, phy.node_of_label(lab)])


def test_sampler_determinism():
    phy = homogeneous_phylogeny(2, 0.3)
    model = potts_rate_matrix(2)
    a = sample_alignment(phy, model, 40, np.random.default_rng(99))
    b = sample_alignment(phy, model, 40, np.random.default_rng(99))
    assert np.array_equal(a.states, b.states)


def test_alignment_validation():
    with pytest.raises(ValueError):
        Alignment([1, 2], np.zeros((5, 3), dtype=int), 2)
    with pytest.raises(ValueError):
        Alignment([1, 2], np.array([[0, 2]]), 2)
    empty = Alignment([1, 2], np.empty((0, 2), dtype=int), 2)
    assert empty.k == 0


def test_alignment_file_roundtrip(tmp_path):
    rng = np.random.default_rng(59)
    phy = homogeneous_phylogeny(2, 0.4)
    align = sample_alignment(phy, potts_rate_matrix(3), 25, rng)
    path = tmp_path / "sites.tsv"
    write_alignment(path, align, comments=("made for the roundtrip test",))
    text = path.read_text()
    assert "q=3" in text and "k=25" in text
    assert "# made for the roundtrip test" in text
    # disk encoding is 1-based
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    disk_min = min(int(x) for ln in body[1:] for x in ln.split()[1:])
    assert disk_min >= 1
    back = read_alignment(path)
    assert back.q == align.q and back.k == align.k
    assert back.node_ids == align.node_ids
    assert np.array_equal(back.states, align.states)


def test_read_alignment_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("no header here\n1 2\n")
    with pytest.raises(ValueError):
        read_alignment(path)
