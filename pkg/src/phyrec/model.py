"""Reversible rate models on a finite alphabet.

A model is a GTR pair (Q, pi): Q has positive off-diagonal entries, zero
row sums and satisfies detailed balance with respect to pi.  All models
are normalised so that the second-largest eigenvalue of Q is exactly -1;
edge lengths elsewhere in the package are expressed in that time scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModelError

LAMBDA2 = -1.0

# Linear (Kesten-Stigum) and percolation thresholds for edge lengths,
# in the Lambda2 = -1 normalisation.
G_LIN = 0.5 * math.log(2.0)
G_PERC = math.log(2.0)


@dataclass(frozen=True, eq=False)
class RateModel:
    """A validated, normalised reversible rate model.

    Attributes
    ----------
    q : int
        Alphabet size.
    rate_matrix : ndarray, shape (q, q)
        Normalised generator (second eigenvalue -1).
    pi : ndarray, shape (q,)
        Stationary distribution.
    """

    q: int
    rate_matrix: np.ndarray
    pi: np.ndarray
    # Symmetric eigendecomposition of D^1/2 Q D^-1/2, cached at
    # construction so transition_matrix is a pure table lookup + expm.
    _eigvals: np.ndarray = field(repr=False, default=None)
    _eigvecs: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        root = np.sqrt(self.pi)
        sym = self.rate_matrix * (root[:, None] / root[None, :])
        sym = 0.5 * (sym + sym.T)
        w, u = np.linalg.eigh(sym)
        object.__setattr__(self, "_eigvals", w)
        object.__setattr__(self, "_eigvecs", u)
        self.rate_matrix.setflags(write=False)
        self.pi.setflags(write=False)

    @property
    def is_symmetric(self) -> bool:
        """True when the model is the q-state symmetric (Potts) model."""
        q = self.q
        off = self.rate_matrix[~np.eye(q, dtype=bool)]
        return (np.allclose(self.pi, 1.0 / q, atol=1e-12)
                and np.allclose(off, off[0], atol=1e-12))

    def __repr__(self):  # keep array dumps out of logs
        kind = "symmetric" if self.is_symmetric else "gtr"
        return f"RateModel(q={self.q}, {kind})"


@dataclass(frozen=True)
class Thresholds:
    """Reconstruction thresholds implied by a normalised model."""

    g_lin: float
    g_perc: float
    g_lin_bio: float


def potts_rate_matrix(q: int) -> RateModel:
    """Symmetric model on q states: off-diagonal 1/q, diagonal -(q-1)/q.

    This normalisation already has second eigenvalue -1.
    """
    if not isinstance(q, (int, np.integer)) or q < 2:
        raise InvalidModelError(f"alphabet size must be an integer >= 2, got {q!r}")
    rate = np.full((q, q), 1.0 / q)
    np.fill_diagonal(rate, -(q - 1.0) / q)
    return RateModel(int(q), rate, np.full(q, 1.0 / q))


def delta_from_tau(q: int, tau: float) -> float:
    """Substitution probability delta = (1/q)(1 - exp(-tau)) of the
    symmetric channel over an edge of length tau."""
    if tau < 0:
        raise ValueError(f"edge length must be >= 0, got {tau}")
    return (1.0 - math.exp(-tau)) / q

def potts_transition_matrix(q: int, tau: float) -> np.ndarray:
    """Closed-form transition matrix of the symmetric model.

    Off-diagonal entries are delta_from_tau(q, tau), the diagonal is
    1 - (q-1) delta.  Equals transition_matrix(potts_rate_matrix(q), tau)
    but built without any matrix exponential.
    """
    delta = delta_from_tau(q, tau)
    m = np.full((q, q), delta)
    np.fill_diagonal(m, 1.0 - (q - 1) * delta)
    return m


def transition_matrix(model: RateModel, tau: float) -> np.ndarray:
    """Transition matrix exp(tau Q) over an edge of length tau >= 0.

    Computed through the symmetrised eigendecomposition, which is exact
    for reversible generators and keeps rows summing to one.
    """
    if tau < 0:
        raise ValueError(f"edge length must be >= 0, got {tau}")
    root = np.sqrt(model.pi)
    u = model._eigvecs
    core = (u * np.exp(tau * model._eigvals)) @ u.T
    m = core * (root[None, :] / root[:, None])
    # Clip the tiny negative round-off that eigh can leave behind.
    np.clip(m, 0.0, None, out=m)
    m /= m.sum(axis=1, keepdims=True)
    return m


def thresholds(model: RateModel) -> Thresholds:
    """Critical edge lengths for the normalised model.

    g_lin is the Kesten-Stigum bound ln(sqrt 2); g_perc = ln 2 is the
    percolation bound of the symmetric-model random-cluster picture.
    g_lin_bio restates g_lin for the biological convention in which the
    total substitution rate sum_i pi_i |Q_ii| equals one.
    """
    rate = float(-np.sum(model.pi * np.diag(model.rate_matrix)))
    return Thresholds(g_lin=G_LIN, g_perc=G_PERC, g_lin_bio=rate * G_LIN)


def validate_gtr(q: int, rate_matrix, pi, atol: float = 1e-8):
    """Validate a GTR pair and normalise the second eigenvalue to -1.

    Returns
    -------
    (RateModel, float)
        The normalised model and the scale factor that was applied to Q.

    Raises
    ------
    InvalidModelError
        With one diagnostic per violated condition.
    """
    rate_matrix = np.array(rate_matrix, dtype=float)
    pi = np.array(pi, dtype=float)
    diagnostics = []
    if not isinstance(q, (int, np.integer)) or q < 2:
        raise InvalidModelError(f"alphabet size must be an integer >= 2, got {q!r}")
    if rate_matrix.shape != (q, q):
        raise InvalidModelError(
            f"rate matrix must have shape ({q}, {q}), got {rate_matrix.shape}")
    if pi.shape != (q,):
        raise InvalidModelError(f"pi must have shape ({q},), got {pi.shape}")

    if np.any(pi <= 0):
        diagnostics.append("stationary distribution has non-positive entries")
    if abs(pi.sum() - 1.0) > atol:
        diagnostics.append(f"stationary distribution sums to {pi.sum():.6g}, not 1")
    off = rate_matrix[~np.eye(q, dtype=bool)]
    if np.any(off <= 0):
        diagnostics.append("off-diagonal rates must be strictly positive")
    rowsum = rate_matrix.sum(axis=1)
    if np.any(np.abs(rowsum) > atol * max(1.0, np.abs(rate_matrix).max())):
        diagnostics.append(f"rows must sum to zero (max |row sum| = {np.abs(rowsum).max():.3g})")
    flux = pi[:, None] * rate_matrix
    if not np.allclose(flux, flux.T, atol=atol * max(1.0, np.abs(flux).max())):
        diagnostics.append("detailed balance pi_i Q_ij = pi_j Q_ji fails")
    if diagnostics:
        raise InvalidModelError(diagnostics)

    root = np.sqrt(pi)
    sym = rate_matrix * (root[:, None] / root[None, :])
    eigvals = np.sort(np.linalg.eigvalsh(0.5 * (sym + sym.T)))
    lambda2 = eigvals[-2]
    if lambda2 >= -atol:
        raise InvalidModelError(
            f"second eigenvalue must be negative, got {lambda2:.6g}")
    scale = -1.0 / lambda2
    return RateModel(int(q), rate_matrix * scale, pi), scale


def load_rate_model(path) -> RateModel:
    """Read a model from a plain-text config.

    Format: first non-comment line is q, the next q lines are the rows of
    Q, the following line is pi; entries are whitespace-separated decimals
    and lines starting with '#' are ignored.  The matrix is validated and
    rescaled exactly like validate_gtr.
    """
    if hasattr(path, "read"):
        lines = path.read().splitlines()
    else:
        with open(path) as handle:
            lines = handle.read().splitlines()
    rows = [ln for ln in (l.strip() for l in lines) if ln and not ln.startswith("#")]
    if not rows:
        raise InvalidModelError("empty rate-model config")
    try:
        q = int(rows[0])
    except ValueError:
        raise InvalidModelError(f"first line must be the alphabet size, got {rows[0]!r}")
    if len(rows) != q + 2:
        raise InvalidModelError(
            f"expected {q} matrix rows plus pi after the size line, got {len(rows) - 1} lines")
    try:
        rate = np.array([[float(x) for x in rows[1 + i].split()] for i in range(q)])
        pi = np.array([float(x) for x in rows[q + 1].split()])
    except ValueError as exc:
        raise InvalidModelError(f"non-numeric entry in rate-model config: {exc}")
    model, _ = validate_gtr(q, rate, pi)
    return model
