"""Sampling site patterns on phylogenies, plus the exact leaf law.

Two independent mechanisms generate data for symmetric models and are
tested against each other: edge-by-edge broadcasting through transition
matrices, and the random-cluster picture (percolate edges, colour the
clusters uniformly).  ``potts_batch_sample`` is a vectorised
copy-or-refresh sampler for symmetric models used by the Monte Carlo
drivers; it is validated against the exact law like the other two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EnumerationTooLargeError, UnsupportedModelError
from .model import RateModel, transition_matrix
from .tree import Phylogeny

EXACT_ENUMERATION_LIMIT = 10 ** 6


@dataclass
class Alignment:
    """k i.i.d. site samples at a set of nodes.

    ``states`` has shape (k, len(node_ids)) with values in 0..q-1; column
    j belongs to ``node_ids[j]``.  On disk states are written 1-based.
    """

    node_ids: list
    states: np.ndarray
    q: int

    def __post_init__(self):
        self.states = np.asarray(self.states)
        if self.states.ndim != 2 or self.states.shape[1] != len(self.node_ids):
            raise ValueError("states must be a k x len(node_ids) array")
        if self.states.size and (self.states.min() < 0 or self.states.max() >= self.q):
            raise ValueError(f"states must lie in 0..{self.q - 1}")

    @property
    def k(self) -> int:
        return self.states.shape[0]

    def column(self, node_id) -> np.ndarray:
        return self.states[:, self.node_ids.index(node_id)]


class _DisjointSets:
    """Union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, v: int) -> int:
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:   # compress the walked path
            self.parent[v], v = root, self.parent[v]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def _categorical_rows(prob_rows: np.ndarray, rng) -> np.ndarray:
    """Draw one sample per row of a stack of probability vectors."""
    cum = np.cumsum(prob_rows, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(prob_rows.shape[0])
    return (cum < u[:, None]).sum(axis=1)


def broadcast_sample(phy: Phylogeny, model: RateModel, rng) -> np.ndarray:
    """States at every node: root from pi, then each child through the
    transition matrix of its edge.  Returns a length-n_nodes vector."""
    return _broadcast_sites(phy, model, 1, rng)[0]


def _broadcast_sites(phy: Phylogeny, model: RateModel, k: int, rng) -> np.ndarray:
    states = np.empty((k, phy.n_nodes), dtype=np.int32)
    cum_pi = np.cumsum(model.pi)
    cum_pi[-1] = 1.0
    states[:, 0] = np.searchsorted(cum_pi, rng.random(k), side="right")
    matrices = {}
    for v in range(1, phy.n_nodes):
        tau = float(phy.edge_tau[v])
        if tau not in matrices:
            matrices[tau] = transition_matrix(model, tau)
        parent_states = states[:, Phylogeny.parent(v)]
        states[:, v] = _categorical_rows(matrices[tau][parent_states], rng)
    return states


def random_cluster_sample(phy: Phylogeny, q: int, rng) -> np.ndarray:
    """States at every node via the random-cluster mechanism.

    Each edge of length tau is open with probability exp(-tau); the
    connected clusters of open edges get independent uniform colours.
    For the symmetric model this has exactly the broadcast law.
    """
    n = phy.n_nodes
    dsu = _DisjointSets(n)
    open_edge = rng.random(n) < np.exp(-phy.edge_tau)
    for v in range(1, n):
        if open_edge[v]:
            dsu.union(v, Phylogeny.parent(v))
    colours = rng.integers(q, size=n)
    return np.array([colours[dsu.find(v)] for v in range(n)], dtype=np.int32)


def potts_batch_sample(phy: Phylogeny, q: int, n_samples: int, rng) -> np.ndarray:
    """Vectorised symmetric-model sampler, (n_samples, n_nodes).

    Copy-or-refresh per edge: keep the parent state with probability
    exp(-tau), otherwise draw a fresh uniform state.
    """
    states = np.empty((n_samples, phy.n_nodes), dtype=np.int32)
    states[:, 0] = rng.integers(q, size=n_samples)
    keep_prob = np.exp(-phy.edge_tau)
    for v in range(1, phy.n_nodes):
        keep = rng.random(n_samples) < keep_prob[v]
        fresh = rng.integers(q, size=n_samples).astype(np.int32)
        states[:, v] = np.where(keep, states[:, Phylogeny.parent(v)], fresh)
    return states


def sample_alignment(phy: Phylogeny, model: RateModel, k: int, rng,
                     sampler: str = "broadcast", keep_internal: bool = False):
    """Sample k i.i.d. sites and return the leaf alignment.

    Leaf columns are ordered by label 1..n.  With ``keep_internal`` the
    full node-indexed state matrix (k, n_nodes) is returned alongside as
    hidden truth; it is never consumed by reconstruction code.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if sampler == "broadcast":
        full = _broadcast_sites(phy, model, k, rng)
    elif sampler == "cluster":
        if not model.is_symmetric:
            raise UnsupportedModelError(
                "the random-cluster sampler requires a symmetric model")
        full = np.stack([random_cluster_sample(phy, model.q, rng) for _ in range(k)]) \
            if k else np.empty((0, phy.n_nodes), dtype=np.int32)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    order = np.argsort(phy.leaf_labels)  # column j <-> label j+1
    leaf_states = full[:, phy.first_leaf:][:, order]
    align = Alignment(list(range(1, phy.n_leaves + 1)), leaf_states, model.q)
    if keep_internal:
        return align, full
    return align


def exact_leaf_distribution(phy: Phylogeny, model: RateModel) -> np.ndarray:
    """Exact joint law of the leaf states, shape (q,) * n.

    Axis i of the result is the leaf labelled i+1.  Computed by a
    sum-product sweep over the tree; refuses instances with q^n beyond
    EXACT_ENUMERATION_LIMIT cells.
    """
    q, n = model.q, phy.n_leaves
    if q ** n > EXACT_ENUMERATION_LIMIT:
        raise EnumerationTooLargeError(
            f"q^n = {q}^{n} exceeds the exact-enumeration limit")

    def table(v):
        """P(leaf pattern under v | state of v), shape (q, q^{leaves under v})."""
        if v >= phy.first_leaf:
            return np.eye(q)
        left, right = Phylogeny.children(v)
        u1 = transition_matrix(model, phy.edge_tau[left]) @ table(left)
        u2 = transition_matrix(model, phy.edge_tau[right]) @ table(right)
        return np.einsum("sa,sb->sab", u1, u2).reshape(q, -1)

    flat = model.pi @ table(0)              # position-ordered joint law
    grid = flat.reshape((q,) * n)
    axes = [int(np.nonzero(phy.leaf_labels == lab)[0][0]) for lab in range(1, n + 1)]
    return np.transpose(grid, axes)


# ---------------------------------------------------------------------------
# Alignment files


def write_alignment(path, align: Alignment, comments=()):
    """Write ``q=<q> k=<k>`` then one ``<node>\\t<states>`` line per node,
    states 1-based, preceded by '#' comment lines."""
    def dump(handle):
        for line in comments:
            handle.write(line if line.startswith("#") else "# " + line)
            handle.write("\n")
        handle.write(f"q={align.q} k={align.k}\n")
        for j, node in enumerate(align.node_ids):
            row = " ".join(str(int(s) + 1) for s in align.states[:, j])
            handle.write(f"{node}\t{row}\n")
    if hasattr(path, "write"):
        dump(path)
    else:
        with open(path, "w") as handle:
            dump(handle)


def read_alignment(path) -> Alignment:
    if hasattr(path, "read"):
        lines = path.read().splitlines()
    else:
        with open(path) as handle:
            lines = handle.read().splitlines()
    lines = [l for l in lines if l.strip() and not l.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty alignment file")
    header = dict(part.split("=", 1) for part in lines[0].split())
    try:
        q, k = int(header["q"]), int(header["k"])
    except (KeyError, ValueError):
        raise ValueError(f"malformed alignment header {lines[0]!r}")
    node_ids, rows = [], []
    for line in lines[1:]:
        name, _, data = line.partition("\t")
        node_ids.append(int(name))
        row = np.array(data.split(), dtype=np.int32) - 1
        if row.shape != (k,):
            raise ValueError(f"node {name}: expected {k} states, got {row.shape[0]}")
        rows.append(row)
    states = np.stack(rows, axis=1) if rows else np.empty((k, 0), dtype=np.int32)
    return Alignment(node_ids, states, q)
