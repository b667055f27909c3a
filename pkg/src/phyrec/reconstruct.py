"""Level-by-level topology reconstruction for homogeneous trees.

Starting from the leaves, each sweep estimates all pairwise distances
within the current level, runs the thresholded four-point test over
every 4-subset (quartets failing the diameter gate are discarded),
collects the accepted splits, and pairs up the vertices that only ever
appear on the same side of accepted splits.  Each new parent gets a
sequence reconstructed site-by-site from its descendant leaf data, and
the sweep repeats one level up.  The merge history is returned as an
unrooted topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .asr import diluted_estimates, majority_estimates
from .errors import CherryMatchingError
from .metric import QuartetSplit, pairwise_distance_matrix
from .simulate import Alignment
from .tree import Topology

_ESTIMATORS = ("diluted", "majority")


@dataclass
class ReconstructionParams:
    """Tuning knobs of the reconstruction sweep.

    l       dilution parameter of the internal-sequence estimator
    D, W    diameter-gate parameters (quartets with an estimated
            distance above D + ln(W/4) are discarded; W > 5)
    f_min   lower bound on edge lengths; splits need a four-point value
            above f_min / 2
    estimator  "diluted" or "majority" for internal sequences
    """

    l: int
    D: float
    W: float = 20.0
    f_min: float = 0.1
    estimator: str = "diluted"

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")
        if self.W <= 5:
            raise ValueError(f"W must exceed 5, got {self.W}")
        if self.f_min <= 0:
            raise ValueError(f"f_min must be > 0, got {self.f_min}")
        if not self.D > 0:
            raise ValueError(f"D must be > 0, got {self.D}")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"estimator must be one of {_ESTIMATORS}")


def default_diameter_gate(g: float, b_bar: float, h_cherry: int = 2) -> float:
    """Diameter bound sized so cherry-scale quartets pass the gate: twice
    the largest honest path (h_cherry levels of edges at length g) plus
    twice the worst-case bias 2*b_bar."""
    return 2.0 * (g * h_cherry + 2.0 * b_bar)


def auto_reconstruction_params(g: float, k: int, l: int = 1, W: float = 5.5,
                               estimator: str = "diluted",
                               f_min: float | None = None,
                               D: float | None = None) -> ReconstructionParams:
    """Reconstruction parameters fitted to an edge scale ``g`` and
    sequence length ``k``.

    The smallest four-point value the matching relies on is a cherry
    junction separation of 2g, so the default acceptance threshold sits
    at 1.25g (``f_min = 2.5g``), leaving headroom on both sides.  The
    diameter gate must admit the sibling-block quartets the matching
    needs -- worst pair 4g plus twice the reconstruction bias, which for
    deep majority estimates approaches 1.8g per vertex, so about 7.5g --
    while excluding more distant quartets: quartets whose true split
    pairs the middle of the sorted index order have wrong pairings with
    a four-point value of exactly zero, and on far quartets estimate
    noise pushes those past the threshold, planting false "separated"
    marks on true cherries.  The gate therefore sits at 7.5g plus a
    noise allowance for sequence length ``k``, capped at g.
    """
    if f_min is None:
        f_min = 2.5 * g
    if D is None:
        block = 7.5 * g
        noise = math.sqrt(math.expm1(min(2.0 * block, 60.0)) / k)
        gate = block + min(3.0 * noise, g)
        D = max(gate - math.log(W / 4.0), 1e-3)
    return ReconstructionParams(l=l, D=D, W=W, f_min=f_min, estimator=estimator)


@lru_cache(maxsize=4)
def _all_quartets(m: int) -> np.ndarray:
    """All 4-subsets of range(m) as an (n_quartets, 4) int16 array."""
    if m < 4:
        return np.empty((0, 4), dtype=np.int16)
    pairs = np.array(list(combinations(range(m), 2)), dtype=np.int16)
    # starts[b] = index of the first pair whose smaller element is b
    counts_per_first = np.arange(m - 1, -1, -1, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(counts_per_first)))
    n_pairs = len(pairs)
    tail_counts = n_pairs - starts[pairs[:, 1] + 1]
    ab = np.repeat(pairs, tail_counts, axis=0)
    cd = np.concatenate([pairs[starts[b + 1]:] for b in pairs[:, 1]])
    return np.hstack([ab, cd])


def _quartet_relations(dist: np.ndarray, gate: float, f_min: float,
                       chunk: int = 1 << 20):
    """Scan every quartet and scatter the accepted splits into pairwise
    ``together`` / ``separated`` relations (m x m boolean)."""
    m = dist.shape[0]
    together = np.zeros((m, m), dtype=bool)
    separated = np.zeros((m, m), dtype=bool)
    quartets = _all_quartets(m)
    half = f_min / 2.0

    def scatter(mask, a, b, c, d):
        # accepted pairing (a,b)|(c,d)
        together[a[mask], b[mask]] = True
        together[c[mask], d[mask]] = True
        for u, v in ((a, c), (a, d), (b, c), (b, d)):
            separated[u[mask], v[mask]] = True

    for start in range(0, len(quartets), chunk):
        qa, qb, qc, qd = quartets[start:start + chunk].T
        tab, tcd = dist[qa, qb], dist[qc, qd]
        tac, tbd = dist[qa, qc], dist[qb, qd]
        tad, tbc = dist[qa, qd], dist[qb, qc]
        worst = np.maximum.reduce([tab, tcd, tac, tbd, tad, tbc])
        open_gate = ~(worst > gate)
        with np.errstate(invalid="ignore"):
            # saturated (infinite) estimates give NaN differences; those
            # quartets are already shut out by the gate
            x = tab + tcd
            y = tac + tbd
            z = tad + tbc
            scatter(open_gate & (0.5 * (y - x) > half), qa, qb, qc, qd)
            scatter(open_gate & (0.5 * (x - y) > half), qa, qc, qb, qd)
            scatter(open_gate & (0.5 * (x - z) > half), qa, qd, qb, qc)

    together |= together.T
    separated |= separated.T
    return together, separated


def _matching_from_relations(together: np.ndarray, separated: np.ndarray):
    """Greedy forced matching of the candidate cherry pairs.

    A candidate pair co-occurs in some accepted split and is never
    separated.  Vertices with exactly one candidate partner are matched
    first; matched vertices are removed and the elimination cascades, so
    stray extra candidates between members of different (forced)
    cherries are harmless.  If the cascade cannot match everyone the
    matching is missing or ambiguous and CherryMatchingError is raised.
    """
    cand = together & ~separated
    np.fill_diagonal(cand, False)
    m = cand.shape[0]
    adj = [set(map(int, np.flatnonzero(cand[i]))) for i in range(m)]
    candidates = [(i, j) for i in range(m) for j in adj[i] if i < j]
    unmatched = set(range(m))
    queue = [v for v in range(m) if len(adj[v]) == 1]
    pairs = []
    while queue:
        v = queue.pop()
        if v not in unmatched or len(adj[v]) != 1:
            continue
        (u,) = adj[v]
        pairs.append((v, u) if v < u else (u, v))
        unmatched -= {u, v}
        for w in (u, v):
            for x in adj[w]:
                adj[x].discard(w)
                if x in unmatched and len(adj[x]) == 1:
                    queue.append(x)
            adj[w] = set()
    if unmatched:
        raise CherryMatchingError(
            f"cherry candidates leave {len(unmatched)} of {m} vertices "
            "unforced (missing or ambiguous pairs)", candidates=candidates)
    pairs.sort()
    return pairs


def identify_cherries(splits, vertices):
    """Pair up vertices from a collection of accepted quartet splits.

    A candidate pair must appear together on one side of at least one
    split and never on opposite sides; the candidate pairs must form a
    unique perfect matching or CherryMatchingError is raised.
    """
    vertices = list(vertices)
    if len(vertices) % 2:
        raise ValueError("an odd number of vertices cannot be paired")
    if len(vertices) == 2:
        return [(vertices[0], vertices[1])]
    index = {v: i for i, v in enumerate(vertices)}
    m = len(vertices)
    together = np.zeros((m, m), dtype=bool)
    separated = np.zeros((m, m), dtype=bool)
    for split in splits:
        if split.sides is None:
            continue
        (a, b), (c, d) = (sorted(side) for side in split.sides)
        together[index[a], index[b]] = together[index[b], index[a]] = True
        together[index[c], index[d]] = together[index[d], index[c]] = True
        for u, v in ((a, c), (a, d), (b, c), (b, d)):
            separated[index[u], index[v]] = separated[index[v], index[u]] = True
    try:
        pairs = _matching_from_relations(together, separated)
    except CherryMatchingError as exc:
        raise CherryMatchingError(
            str(exc),
            candidates=[(vertices[i], vertices[j]) for i, j in exc.candidates])
    return [(vertices[i], vertices[j]) for i, j in pairs]


def reconstruct_internal_sequences(parent_leaf_sets, align: Alignment, q: int,
                                   l: int, rng, estimator: str = "diluted"):
    """Site-by-site root estimates for each parent's descendant leaves.

    ``parent_leaf_sets`` holds, per parent, the labels of its descendant
    leaves in subtree order; the estimator sees only those leaf columns.
    Returns one length-k int array per parent.
    """
    if estimator not in _ESTIMATORS:
        raise ValueError(f"estimator must be one of {_ESTIMATORS}")
    column = {v: i for i, v in enumerate(align.node_ids)}
    out = []
    for leaves in parent_leaf_sets:
        block = align.states[:, [column[v] for v in leaves]]
        if estimator == "diluted":
            out.append(diluted_estimates(block, q, l, rng))
        else:
            out.append(majority_estimates(block, q, rng))
    return out


class _Vertex:
    __slots__ = ("leaves", "children")

    def __init__(self, leaves, children=None):
        self.leaves = leaves          # descendant leaf labels, subtree order
        self.children = children      # (left, right) _Vertex or None for a leaf


def reconstruct_homogeneous(align: Alignment, q: int,
                            params: ReconstructionParams, rng,
                            metric_fn=None) -> Topology:
    """Reconstruct the unrooted topology of a homogeneous phylogeny.

    ``align`` holds the leaf sequences (columns labelled 1..n, n a power
    of two).  ``metric_fn(leaves_u, leaves_v)`` is a test hook: when
    given, it supplies every pairwise distance (e.g. the exact tree
    metric), no sequence work happens, and ``align`` may be empty
    (k = 0).

    Raises ReconstructionError (CherryMatchingError) with the failing
    level and the candidate-pair table when a sweep cannot pair up its
    vertices.
    """
    labels = sorted(align.node_ids)
    n = len(labels)
    if labels != list(range(1, n + 1)):
        raise ValueError(f"alignment columns must be labelled 1..{n}")
    h = n.bit_length() - 1
    if 2 ** h != n or h < 1:
        raise ValueError(f"leaf count must be a power of two >= 2, got {n}")
    if align.k == 0 and metric_fn is None:
        raise ValueError("empty alignment requires a metric_fn hook")

    entries = [_Vertex((lab,)) for lab in range(1, n + 1)]
    seqs = None
    if metric_fn is None:
        order = [align.node_ids.index(lab) for lab in range(1, n + 1)]
        seqs = align.states[:, order].T        # (m, k)
    gate = params.D + math.log(params.W / 4.0)

    for level in range(h):
        m = len(entries)
        if m == 2:
            break
        if metric_fn is not None:
            dist = np.zeros((m, m))
            for i in range(m):
                for j in range(i + 1, m):
                    dist[i, j] = dist[j, i] = metric_fn(entries[i].leaves,
                                                       entries[j].leaves)
        else:
            dist = pairwise_distance_matrix(seqs, q)
        together, separated = _quartet_relations(dist, gate, params.f_min)
        try:
            pairs = _matching_from_relations(together, separated)
        except CherryMatchingError as exc:
            raise CherryMatchingError(
                f"cherry matching failed at level {level}: {exc}",
                level=level,
                candidates=[(entries[i].leaves, entries[j].leaves)
                            for i, j in exc.candidates]) from None
        entries = [_Vertex(entries[i].leaves + entries[j].leaves,
                           (entries[i], entries[j]))
                   for i, j in pairs]
        if metric_fn is None:
            new = reconstruct_internal_sequences(
                [v.leaves for v in entries], align, q, params.l, rng,
                estimator=params.estimator)
            seqs = np.stack(new)

    return _merge_topology(entries[0], entries[1])


def _merge_topology(left: _Vertex, right: _Vertex) -> Topology:
    """Unrooted topology of the merge forest (root edge left-right)."""
    adj = {}
    counter = [0]

    def connect(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    def emit(vx):
        if vx.children is None:
            adj.setdefault(vx.leaves[0], [])
            return vx.leaves[0]
        counter[0] -= 1
        me = counter[0]
        for child in vx.children:
            connect(me, emit(child))
        return me

    connect(emit(left), emit(right))
    leaves = [v for v in adj if v > 0]
    return Topology(adj, leaves)
