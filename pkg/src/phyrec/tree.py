"""Homogeneous phylogenies and unrooted leaf-labelled topologies.

A Phylogeny is a rooted complete binary tree with h levels, positive
edge lengths and leaves labelled by a permutation of 1..n (n = 2^h).
Nodes are indexed in level order: the root is 0 and node v has children
2v+1 and 2v+2.  Leaf "position" p in 0..n-1 refers to node (2^h - 1) + p;
``leaf_labels[p]`` is the label displayed at that position.

A Topology is the unrooted shape only: leaf labels plus adjacency, no
edge lengths.  Internal topology nodes use negative ids so they can
never collide with leaf labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Phylogeny:
    h: int
    edge_tau: np.ndarray   # length 2^(h+1) - 1, indexed by child node; entry 0 unused
    leaf_labels: np.ndarray  # length 2^h, position -> label

    def __post_init__(self):
        if self.h < 0:
            raise ValueError(f"depth must be >= 0, got {self.h}")
        n_nodes = 2 ** (self.h + 1) - 1
        tau = np.asarray(self.edge_tau, dtype=float)
        if tau.shape != (n_nodes,):
            raise ValueError(
                f"edge_tau must have one entry per node ({n_nodes}), got {tau.shape}")
        # tau = 0 is tolerated (degenerate edges used by samplers and
        # dilution padding); negative lengths never are.
        if np.any(tau < 0):
            raise ValueError("edge lengths must be >= 0")
        labels = np.asarray(self.leaf_labels, dtype=int)
        n = 2 ** self.h
        if sorted(labels.tolist()) != list(range(1, n + 1)):
            raise ValueError(f"leaf labels must be a permutation of 1..{n}")
        object.__setattr__(self, "edge_tau", tau)
        object.__setattr__(self, "leaf_labels", labels)
        tau.setflags(write=False)
        labels.setflags(write=False)

    # -- node arithmetic -------------------------------------------------
    @property
    def n_leaves(self) -> int:
        return 2 ** self.h

    @property
    def n_nodes(self) -> int:
        return 2 ** (self.h + 1) - 1

    @property
    def first_leaf(self) -> int:
        return 2 ** self.h - 1

    @staticmethod
    def parent(v: int) -> int:
        return (v - 1) // 2

    @staticmethod
    def children(v: int) -> tuple[int, int]:
        return 2 * v + 1, 2 * v + 2

    @staticmethod
    def level_of(v: int) -> int:
        return int(v + 1).bit_length() - 1

    def node_of_label(self, label: int) -> int:
        pos = int(np.nonzero(self.leaf_labels == label)[0][0])
        return self.first_leaf + pos

    def label_of_node(self, v: int) -> int:
        return int(self.leaf_labels[v - self.first_leaf])


def homogeneous_phylogeny(h: int, tau) -> Phylogeny:
    """Phylogeny with identity leaf labelling and fixed (or per-edge) lengths."""
    n_nodes = 2 ** (h + 1) - 1
    edge_tau = np.zeros(n_nodes)
    edge_tau[1:] = tau
    return Phylogeny(h, edge_tau, np.arange(1, 2 ** h + 1))


def random_homogeneous_phylogeny(h: int, f: float, g: float, rng) -> Phylogeny:
    """Random instance: each edge length uniform on [f, g] (fixed g when
    f == g) and a uniformly random leaf labelling."""
    if f <= 0:
        raise ValueError(f"minimum edge length must be > 0, got {f}")
    if f > g:
        raise ValueError(f"need f <= g, got f={f}, g={g}")
    n_nodes = 2 ** (h + 1) - 1
    edge_tau = np.zeros(n_nodes)
    if f == g:
        edge_tau[1:] = g
    else:
        edge_tau[1:] = rng.uniform(f, g, size=n_nodes - 1)
    labels = rng.permutation(2 ** h) + 1
    return Phylogeny(h, edge_tau, labels)


class TreeMetric:
    """All-pairs path-length metric over every node of a phylogeny."""

    def __init__(self, phy: Phylogeny, matrix: np.ndarray):
        self.phy = phy
        self.matrix = matrix

    def distance(self, u: int, v: int) -> float:
        """Path length between node indices u and v."""
        return float(self.matrix[u, v])

    def leaf_distance(self, a: int, b: int) -> float:
        """Path length between the leaves labelled a and b."""
        return self.distance(self.phy.node_of_label(a), self.phy.node_of_label(b))


def tree_metric(phy: Phylogeny) -> TreeMetric:
    """Compute the additive tree metric of a phylogeny.

    Uses root depths and level-ancestor walks: d(u, v) =
    depth(u) + depth(v) - 2 depth(lca(u, v)).
    """
    n = phy.n_nodes
    depth = np.zeros(n)
    for v in range(1, n):
        depth[v] = depth[Phylogeny.parent(v)] + phy.edge_tau[v]
    # Ancestor at each level for every node, so the LCA is a vectorised
    # comparison of ancestor rows rather than a per-pair walk.
    levels = phy.h + 1
    anc = np.zeros((n, levels), dtype=int)
    for v in range(n):
        lv = Phylogeny.level_of(v)
        a = v
        for s in range(lv, -1, -1):
            anc[v, s] = a
            a = Phylogeny.parent(a) if a else 0
        anc[v, lv:] = v  # pad shallow rows with the node itself
    dist = np.zeros((n, n))
    for u in range(n):
        lu = Phylogeny.level_of(u)
        for v in range(u + 1, n):
            top = min(lu, Phylogeny.level_of(v))
            s = top
            while anc[u, s] != anc[v, s]:
                s -= 1
            d = depth[u] + depth[v] - 2.0 * depth[anc[u, s]]
            dist[u, v] = dist[v, u] = d
    return TreeMetric(phy, dist)


class Topology:
    """Unrooted leaf-labelled binary tree on labels 1..n.

    Internal nodes have degree three (there are none for n = 2) and carry
    negative ids.  Only the shape matters: no branch lengths.
    """

    def __init__(self, adjacency: dict, leaves):
        self.adj = {v: sorted(ns) for v, ns in adjacency.items()}
        self.leaves = frozenset(int(x) for x in leaves)
        self._check()

    def _check(self):
        n = len(self.leaves)
        if self.leaves != frozenset(range(1, n + 1)):
            raise ValueError(f"leaves must be exactly 1..{n}")
        for v, ns in self.adj.items():
            if v in self.leaves:
                if len(ns) != 1:
                    raise ValueError(f"leaf {v} must have degree 1, has {len(ns)}")
            elif len(ns) != 3:
                raise ValueError(f"internal node {v} must have degree 3, has {len(ns)}")
            for w in ns:
                if v not in self.adj[w]:
                    raise ValueError("adjacency is not symmetric")
        n_internal = len(self.adj) - n
        if n > 2 and n_internal != n - 2:
            raise ValueError(f"expected {n - 2} internal nodes, found {n_internal}")
        if n == 2 and n_internal != 0:
            raise ValueError("a 2-leaf topology is a bare edge")

    def splits(self) -> frozenset:
        """Non-trivial bipartitions, one per internal edge.

        Each split is a frozenset of the two leaf-label frozensets.
        """
        out = set()
        for u in self.adj:
            for v in self.adj[u]:
                if u < v or u in self.leaves or v in self.leaves:
                    continue
                side = self._leaves_beyond(u, v)
                out.add(frozenset({side, self.leaves - side}))
        return frozenset(out)

    def _leaves_beyond(self, u, v) -> frozenset:
        """Leaves reachable from v when the edge u-v is removed."""
        seen, stack, found = {u, v}, [v], []
        while stack:
            w = stack.pop()
            if w in self.leaves:
                found.append(w)
            for x in self.adj[w]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        return frozenset(found)

    def relabel(self, mapping: dict) -> "Topology":
        """New topology with leaf labels pushed through ``mapping``."""
        def m(v):
            return mapping.get(v, v) if v > 0 else v
        adj = {m(v): [m(w) for w in ns] for v, ns in self.adj.items()}
        return Topology(adj, [mapping.get(l, l) for l in self.leaves])

    def __repr__(self):
        return f"Topology(n={len(self.leaves)})"


def unroot(phy: Phylogeny) -> Topology:
    """Forget root, lengths and internal structure order of a phylogeny.

    The root (degree 2) is suppressed by joining its children; all other
    internal nodes keep degree 3.
    """
    first_leaf = phy.first_leaf
    def node_id(v):
        return phy.label_of_node(v) if v >= first_leaf else -(v + 1)
    adj = {}
    for v in range(1, phy.n_nodes):
        p = Phylogeny.parent(v)
        adj.setdefault(node_id(v), []).append(node_id(p))
        adj.setdefault(node_id(p), []).append(node_id(v))
    root_id = node_id(0)
    if phy.h >= 1:
        a, b = adj.pop(root_id)
        adj[a] = [x for x in adj[a] if x != root_id] + [b]
        adj[b] = [x for x in adj[b] if x != root_id] + [a]
    return Topology(adj, phy.leaf_labels.tolist())


def robinson_foulds(t1: Topology, t2: Topology) -> int:
    """Robinson-Foulds distance: size of the symmetric difference of the
    non-trivial split sets.  Requires identical leaf sets."""
    if t1.leaves != t2.leaves:
        raise ValueError("topologies have different leaf sets")
    return len(t1.splits() ^ t2.splits())


def topologies_equal(t1: Topology, t2: Topology) -> bool:
    """True when both trees display the same set of splits."""
    return t1.leaves == t2.leaves and robinson_foulds(t1, t2) == 0
