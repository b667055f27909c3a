"""Distance estimation and the four-point (quartet) machinery.

Distances between sequences are estimated by inverting the symmetric
channel: tau_hat = -ln(1 - q/(q-1) * mismatch fraction), saturating to
+inf when the argument of the log is not positive.  Between
reconstructed sequences the estimate concentrates around the weighted
distance tau(u, v) + b_u + b_v, where b_u is the length of the error
channel of u's reconstruction; those extra summands cancel in every
four-point combination, so quartet calls remain valid.

Quartets whose largest pairwise estimate exceeds D + ln(W/4) fail the
diameter gate: their four-point value is +inf and they are discarded
(no split of a gated quartet is ever accepted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .simulate import sample_alignment
from .tree import Phylogeny, tree_metric


def estimate_distance(seq_u, seq_v, q: int) -> float:
    """Channel-inverting distance between two aligned state sequences."""
    seq_u = np.asarray(seq_u)
    seq_v = np.asarray(seq_v)
    if seq_u.shape != seq_v.shape or seq_u.ndim != 1:
        raise ValueError(
            f"sequences must be 1-d and of equal length, got {seq_u.shape} vs {seq_v.shape}")
    if seq_u.size == 0:
        raise ValueError("cannot estimate a distance from empty sequences")
    mismatch = float(np.mean(seq_u != seq_v))
    arg = 1.0 - q * mismatch / (q - 1.0)
    return -math.log(arg) if arg > 0 else math.inf


def pairwise_distance_matrix(seqs: np.ndarray, q: int) -> np.ndarray:
    """All-pairs estimate_distance over the rows of (m, k).  Saturated
    entries are +inf; the diagonal is zero."""
    seqs = np.asarray(seqs)
    m, k = seqs.shape
    if k == 0:
        raise ValueError("cannot estimate distances from empty sequences")
    if q <= 8:
        agree = np.zeros((m, m), dtype=np.float32)
        for state in range(q):
            hot = (seqs == state).astype(np.float32)
            agree += hot @ hot.T
    else:
        agree = np.empty((m, m), dtype=np.float64)
        for i in range(m):
            agree[i] = (seqs == seqs[i]).sum(axis=1)
    arg = 1.0 - (q / (q - 1.0)) * (1.0 - agree.astype(np.float64) / k)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(arg > 0, -np.log(np.maximum(arg, 1e-300)), np.inf)
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True)
class QuartetSplit:
    """An unordered bipartition of four labels into two pairs; ``sides``
    is None for the undetermined (gated) outcome."""

    sides: tuple | None

    @staticmethod
    def of(pair1, pair2) -> "QuartetSplit":
        a, b = frozenset(pair1), frozenset(pair2)
        if len(a) != 2 or len(b) != 2 or a & b:
            raise ValueError("a quartet split needs two disjoint pairs")
        return QuartetSplit(sides=(a, b) if min(a) < min(b) else (b, a))

    @staticmethod
    def undetermined() -> "QuartetSplit":
        return QuartetSplit(sides=None)

    def separates(self, u, v) -> bool:
        if self.sides is None:
            return False
        (a, b) = self.sides
        return (u in a and v in b) or (u in b and v in a)

    def groups(self, u, v) -> bool:
        if self.sides is None:
            return False
        return {u, v} in (set(self.sides[0]), set(self.sides[1]))

    def __repr__(self):
        if self.sides is None:
            return "QuartetSplit(undetermined)"
        (a, b) = self.sides
        return "QuartetSplit(%s|%s)" % ("".join(map(str, sorted(a))),
                                        "".join(map(str, sorted(b))))


@dataclass
class DistortedMetric:
    """Estimated pairwise distances over a set of node ids, together with
    the gating parameters D and W."""

    node_ids: list
    matrix: np.ndarray
    D: float
    W: float

    def __post_init__(self):
        self._index = {v: i for i, v in enumerate(self.node_ids)}
        if self.W <= 5:
            raise ValueError(f"gate width W must exceed 5, got {self.W}")

    @classmethod
    def from_sequences(cls, node_ids, seqs, q, D, W) -> "DistortedMetric":
        return cls(list(node_ids), pairwise_distance_matrix(np.asarray(seqs), q), D, W)

    def value(self, u, v) -> float:
        return float(self.matrix[self._index[u], self._index[v]])

    @property
    def gate(self) -> float:
        return self.D + math.log(self.W / 4.0)


def four_point_value(dm: DistortedMetric, a, b, c, d) -> float:
    """Gated four-point value of the pairing ab|cd:
    (tau(a,c) + tau(b,d) - tau(a,b) - tau(c,d)) / 2, or +inf when any of
    the six pairwise estimates exceeds the diameter gate."""
    labels = (a, b, c, d)
    if len(set(labels)) != 4:
        raise ValueError("four distinct labels required")
    worst = max(dm.value(u, v) for u, v in combinations(labels, 2))
    if worst > dm.gate:
        return math.inf
    return 0.5 * (dm.value(a, c) + dm.value(b, d) - dm.value(a, b) - dm.value(c, d))


def four_point_split(dm: DistortedMetric, quartet) -> QuartetSplit:
    """Split call for a 4-set of labels: the sign of the four-point value
    on the sorted ordering decides, zero falling to ad|bc; a gated
    quartet is undetermined."""
    a, b, c, d = sorted(quartet)
    value = four_point_value(dm, a, b, c, d)
    if math.isinf(value):
        return QuartetSplit.undetermined()
    if value > 0:
        return QuartetSplit.of((a, b), (c, d))
    if value < 0:
        return QuartetSplit.of((a, c), (b, d))
    return QuartetSplit.of((a, d), (b, c))


def fp_indicator(dm: DistortedMetric, quartet, f_min: float) -> dict:
    """Thresholded indicators for the three pairings of a quartet.

    A pairing scores 1 when its four-point value exceeds f_min / 2.
    Gated quartets score 0 on every pairing (they are discarded, which
    keeps contradictory all-pairings acceptances out of the split set).
    """
    a, b, c, d = sorted(quartet)
    t = dm.value
    worst = max(t(u, v) for u, v in combinations((a, b, c, d), 2))
    x = t(a, b) + t(c, d)
    y = t(a, c) + t(b, d)
    z = t(a, d) + t(b, c)
    gated = worst > dm.gate
    half = f_min / 2.0
    return {
        QuartetSplit.of((a, b), (c, d)): int(not gated and 0.5 * (y - x) > half),
        QuartetSplit.of((a, c), (b, d)): int(not gated and 0.5 * (x - y) > half),
        QuartetSplit.of((a, d), (b, c)): int(not gated and 0.5 * (x - z) > half),
    }


# ---------------------------------------------------------------------------
# Empirical concentration / gate report


@dataclass
class ConcentrationReport:
    """Pooled per-(trial, pair) event rates for the three concentration
    conditions and for the gate decision itself."""

    k: int
    D: float
    W: float
    delta: float
    trials: int
    n_leaves: int
    rate_concentration: float   # |tau_hat - tau| < delta on pairs with tau < D
    rate_far_deep: float        # tau_hat > D + ln(W/2) on pairs with tau > D + ln W
    rate_near_ungated: float    # tau_hat <= D + ln(W/4) on pairs with tau < D + ln(W/5)
    rate_far_gated: float       # tau_hat > D + ln(W/4) on the far pairs
    counts: dict
    cprime: float | None = None

    def gate_classification_rate(self) -> float:
        """Accuracy of the gate decision over both far and near classes."""
        far, near = self.counts["far"], self.counts["near_gate"]
        total = far + near
        if total == 0:
            return float("nan")
        return (self.rate_far_gated * far + self.rate_near_ungated * near) / total


def distance_concentration_check(phy: Phylogeny, model, k: int, D: float,
                                 delta: float, trials: int, rng,
                                 W: float = 20.0) -> ConcentrationReport:
    """Monte Carlo check of distance concentration and gate behaviour.

    Pairs of leaves are classed by their true tree distance: below D
    (concentration within delta expected), above D + ln W (the gate
    should fire), and below D + ln(W/5) (the gate should stay quiet).
    Events are pooled over pairs and trials.
    """
    q = model.q
    metric = tree_metric(phy)
    first = phy.first_leaf
    order = np.argsort(phy.leaf_labels)
    leaf_nodes = np.arange(first, phy.n_nodes)[order]
    true_dist = metric.matrix[np.ix_(leaf_nodes, leaf_nodes)]
    iu = np.triu_indices(phy.n_leaves, 1)
    d_pairs = true_dist[iu]
    near_conc = d_pairs < D
    far = d_pairs > D + math.log(W)
    near_gate = d_pairs < D + math.log(W / 5.0)
    gate = D + math.log(W / 4.0)
    deep = D + math.log(W / 2.0)

    hits = {"conc": 0, "far_deep": 0, "near_ungated": 0, "far_gated": 0}
    for _ in range(trials):
        align = sample_alignment(phy, model, k, rng)
        est = pairwise_distance_matrix(align.states.T, q)[iu]
        hits["conc"] += int(np.sum(np.abs(est[near_conc] - d_pairs[near_conc]) < delta))
        hits["far_deep"] += int(np.sum(est[far] > deep))
        hits["far_gated"] += int(np.sum(est[far] > gate))
        hits["near_ungated"] += int(np.sum(est[near_gate] <= gate))

    def rate(key, mask):
        total = int(mask.sum()) * trials
        return hits[key] / total if total else float("nan")

    return ConcentrationReport(
        k=k, D=D, W=W, delta=delta, trials=trials, n_leaves=phy.n_leaves,
        rate_concentration=rate("conc", near_conc),
        rate_far_deep=rate("far_deep", far),
        rate_near_ungated=rate("near_ungated", near_gate),
        rate_far_gated=rate("far_gated", far),
        counts={"concentration": int(near_conc.sum()), "far": int(far.sum()),
                "near_gate": int(near_gate.sum())})


def find_min_cprime(phy: Phylogeny, model, D: float, delta: float, rng,
                    W: float = 20.0, required: float = 0.99, trials: int = 40,
                    k_start: int = 125, k_cap: int = 10 ** 6) -> tuple:
    """Double k until concentration and gate rates reach ``required``;
    returns (k, cprime) with cprime = k / ln n, or (None, None) if the
    cap is exceeded."""
    n = phy.n_leaves
    k = k_start
    while k <= k_cap:
        report = distance_concentration_check(phy, model, k, D, delta, trials, rng, W=W)
        ok = (report.rate_concentration >= required
              and report.rate_near_ungated >= required
              and report.rate_far_gated >= required)
        if ok:
            return k, k / math.log(n)
        k *= 2
    return None, None
