"""Per-position influence scores for time-varying diagonal systems.

Three scoring families:

* naive final-state: norm of the operator mapping input k to the last state,
  which decays exponentially with distance from the end (the vanishing
  influence artifact the other methods fix);
* Jacobian: influence of input k on the average-pooled output, either via
  a single backward propagator pass (O(L)) or as the literal sum of per-pair
  Jacobian norms (O(L^2));
* Gramian: closed-form per-state reachable energy weighted by squared
  observability, averaged over channels.

Frobenius norms throughout.  Scores are nonnegative by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import (
    StateTrajectory,
    TimeVaryingDiagonalSystem,
    _as_float_array,
    recurrent_scan,
)
from .errors import (
    InvalidInput,
    InvalidParameter,
    ResourceLimit,
    ShapeError,
    UnstableSystem,
)

# Default O(L^2) guard for the exact Jacobian method.
EXACT_LENGTH_GUARD = 4096

# Default regularizer for the Gramian closed form.
DEFAULT_GRAMIAN_EPSILON = 1e-6


class Method(str, Enum):
    """Influence scoring method identifiers (CLI spelling)."""

    NAIVE = "naive"
    JACOBIAN_PROPAGATOR = "jacobian"
    JACOBIAN_EXACT = "jacobian-exact"
    GRAMIAN = "gramian"


@dataclass(frozen=True)
class InfluenceScores:
    """One nonnegative score per sequence position."""

    scores: np.ndarray
    method: Method
    epsilon: float = 0.0

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] < 1:
            raise ShapeError(f"scores must be a nonempty vector, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise InvalidParameter("scores contain non-finite entries")
        if np.any(scores < 0.0):
            raise InvalidParameter("scores must be nonnegative")
        if self.epsilon < 0.0:
            raise InvalidParameter("epsilon must be nonnegative")
        frozen = scores.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "scores", frozen)

    @property
    def length(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class Propagator:
    """Accumulated future read-out operator sum_{j>k} c_j prod a at one k."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", _as_float_array("matrix", self.matrix, 2).copy()
        )


@dataclass(frozen=True)
class GramianDiagnostics:
    """Finite-horizon vs closed-form Gramian diagonals plus residuals."""

    w_finite: np.ndarray
    w_closed: np.ndarray
    lyapunov_residual_norm: float
    offdiag_residual_norm: float


def _frob(matrix: np.ndarray) -> float:
    return float(np.sqrt(np.sum(matrix * matrix)))


def naive_final_state_influence(system: TimeVaryingDiagonalSystem) -> InfluenceScores:
    """Norm of the operator carrying input k into the final state.

    score(k) = || (prod_{j>k} diag(a_bar_j)) b_bar_k ||_F with the empty
    product (last position) equal to the identity, so the factor count for
    position k is L - 1 - k.
    """
    length = system.length
    a_bars = system.a_bars
    b_bars = system.b_bars
    scores = np.empty(length)
    suffix = np.ones(system.state_dim)
    for k in range(length - 1, -1, -1):
        scores[k] = _frob(suffix[:, np.newaxis] * b_bars[k])
        suffix = suffix * a_bars[k]
    return InfluenceScores(scores, Method.NAIVE)


def jacobian_influence_propagator(system: TimeVaryingDiagonalSystem) -> InfluenceScores:
    """Backward-pass influence on the pooled output, one norm per term group.

    score(k) = || c_k b_bar_k + d_k ||_F + || P_k b_bar_k ||_F where the
    propagator P_k = sum_{j>k} c_j prod_{k<i<=j} diag(a_bar_i) collects
    every future read-out of a state perturbation injected at position k
    and is updated right-multiplicatively: P_{k-1} = (c_k + P_k) diag(a_bar_k).
    Runs in O(L * N * max(M, P)) time and O(N * P) extra space.
    """
    length = system.length
    a_bars, b_bars, cs, ds = system.a_bars, system.b_bars, system.cs, system.ds
    scores = np.empty(length)
    prop = np.zeros((system.output_dim, system.state_dim))
    for k in range(length - 1, -1, -1):
        direct = _frob(cs[k] @ b_bars[k] + ds[k])
        propagated = _frob(prop @ b_bars[k])
        scores[k] = direct + propagated
        prop = (cs[k] + prop) * a_bars[k]
    return InfluenceScores(scores, Method.JACOBIAN_PROPAGATOR)


def jacobian_influence_exact(
    system: TimeVaryingDiagonalSystem, max_length: int = EXACT_LENGTH_GUARD
) -> InfluenceScores:
    """Literal sum of per-pair Jacobian norms, O(L^2).

    score(k) = || c_k b_bar_k + d_k ||_F
             + sum_{j>k} || c_j (prod_{k<i<=j} diag(a_bar_i)) b_bar_k ||_F
    """
    length = system.length
    if length > max_length:
        raise ResourceLimit(f"sequence length {length} exceeds guard {max_length}")
    a_bars, b_bars, cs, ds = system.a_bars, system.b_bars, system.cs, system.ds
    scores = np.empty(length)
    for k in range(length):
        total = _frob(cs[k] @ b_bars[k] + ds[k])
        prod = np.ones(system.state_dim)
        for j in range(k + 1, length):
            prod = prod * a_bars[j]
            total += _frob((cs[j] * prod) @ b_bars[k])
        scores[k] = total
    return InfluenceScores(scores, Method.JACOBIAN_EXACT)


def output_jacobian(system: TimeVaryingDiagonalSystem, k: int, j: int) -> np.ndarray:
    """Jacobian of output j with respect to input k (P x M matrix).

    Equals c_k b_bar_k + d_k when j == k (the empty-product direct term);
    otherwise c_j (prod_{k<i<=j} diag(a_bar_i)) b_bar_k, the operator the
    recurrence x_t = a_bar_t x_{t-1} + b_bar_t u_t actually applies between
    the injection at k and the read-out at j.  Indices are 0-based.
    """
    length = system.length
    if not (0 <= k <= j < length):
        raise IndexError(f"need 0 <= k <= j < {length}, got k={k}, j={j}")
    if j == k:
        return system.cs[k] @ system.b_bars[k] + system.ds[k]
    prod = np.prod(system.a_bars[k + 1 : j + 1], axis=0)
    return (system.cs[j] * prod) @ system.b_bars[k]


def future_propagator(system: TimeVaryingDiagonalSystem, k: int) -> Propagator:
    """Propagator P_k = sum_{j>k} c_j prod_{k<i<=j} diag(a_bar_i).

    Zero at the last position.
    """
    length = system.length
    if not (0 <= k < length):
        raise IndexError(f"position {k} out of range for length {length}")
    prop = np.zeros((system.output_dim, system.state_dim))
    for t in range(length - 1, k, -1):
        prop = (system.cs[t] + prop) * system.a_bars[t]
    return Propagator(prop)


def gap_output(trajectory: StateTrajectory) -> np.ndarray:
    """Global average pool of the output sequence: mean over positions."""
    return trajectory.outputs.mean(axis=0)


def gap_jacobian_analytic(system: TimeVaryingDiagonalSystem, k: int) -> np.ndarray:
    """Exact Jacobian of the pooled output with respect to input k.

    (1/L) (c_k b_bar_k + d_k + P_k b_bar_k) with parameters held fixed.
    """
    prop = future_propagator(system, k).matrix
    direct = system.cs[k] @ system.b_bars[k] + system.ds[k]
    return (direct + prop @ system.b_bars[k]) / system.length


def finite_difference_gap_jacobian(
    system: TimeVaryingDiagonalSystem, u, k: int, h: float = 1e-5
) -> np.ndarray:
    """Central-difference Jacobian of the pooled output at position k.

    Parameters stay frozen while u[k] is perturbed coordinate by coordinate,
    so for these linear systems the result is exact up to rounding.
    """
    if h <= 0.0:
        raise InvalidParameter("step h must be positive")
    length = system.length
    if not (0 <= k < length):
        raise IndexError(f"position {k} out of range for length {length}")
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1 and system.input_dim == 1:
        u = u[:, np.newaxis]
    jac = np.empty((system.output_dim, system.input_dim))
    for m in range(system.input_dim):
        u_plus = u.copy()
        u_plus[k, m] += h
        u_minus = u.copy()
        u_minus[k, m] -= h
        g_plus = gap_output(recurrent_scan(system, u_plus))
        g_minus = gap_output(recurrent_scan(system, u_minus))
        jac[:, m] = (g_plus - g_minus) / (2.0 * h)
    return jac


def _row_norms_sq(b_bar: np.ndarray) -> np.ndarray:
    b_bar = np.asarray(b_bar, dtype=np.float64)
    if b_bar.ndim == 1:
        return b_bar * b_bar
    if b_bar.ndim == 2:
        return np.sum(b_bar * b_bar, axis=1)
    raise ShapeError(f"b_bar must be 1- or 2-dimensional, got shape {b_bar.shape}")


def gramian_finite_horizon(a_bar, b_bar, horizon: int) -> np.ndarray:
    """Per-state reachable energy over a finite horizon, by explicit summation.

    w_i = ||b_bar_{i,:}||^2 * sum_{t<T} a_i^{2t}.  The term-by-term sum is
    deliberate: this is the oracle the closed form is checked against, and
    it works for unstable entries too.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise InvalidParameter("horizon must be >= 1")
    a_bar = _as_float_array("a_bar", a_bar, 1)
    b_sq = _row_norms_sq(b_bar)
    a_sq = a_bar * a_bar
    acc = np.zeros_like(a_bar)
    term = np.ones_like(a_bar)
    for _ in range(horizon):
        acc += term
        term = term * a_sq
    return b_sq * acc


def gramian_closed_form_diag(a_bar, b_bar, epsilon: float = 0.0) -> np.ndarray:
    """Closed-form per-state reachable energy w_i = ||b_i||^2 / (1 - a_i^2 + eps).

    With epsilon = 0 any |a_i| >= 1 makes the formula meaningless and raises
    UnstableSystem.  With epsilon > 0 the value is computed regardless, but
    entries whose regularized denominator is still nonpositive are set to
    +inf so downstream score containers reject them instead of silently
    reporting negative energies.
    """
    a_bar = _as_float_array("a_bar", a_bar, 1)
    b_sq = _row_norms_sq(b_bar)
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise InvalidParameter("epsilon must be nonnegative")
    if epsilon == 0.0:
        bad = np.abs(a_bar) >= 1.0
        if np.any(bad):
            idx = np.nonzero(bad)[0].tolist()
            raise UnstableSystem(
                f"|a_bar| >= 1 at state indices {idx}; closed form needs a stable system"
            )
    denom = 1.0 - a_bar * a_bar + epsilon
    with np.errstate(divide="ignore"):
        w = np.where(denom > 0.0, b_sq / np.where(denom > 0.0, denom, 1.0), np.inf)
    return w


def lyapunov_residual(a_bar, w, b_bar) -> float:
    """Diagonal residual of a W a - W + B B^T for diagonal a and W.

    Returns || a_i^2 w_i - w_i + ||b_i||^2 ||_2 over the diagonal; the
    off-diagonal mass of B B^T is reported separately by
    :func:`gramian_diagnostics` since it does not involve w at all.
    """
    a_bar = _as_float_array("a_bar", a_bar, 1)
    w = _as_float_array("w", w, 1)
    if w.shape != a_bar.shape:
        raise ShapeError("w and a_bar must have equal length")
    b_sq = _row_norms_sq(b_bar)
    if b_sq.shape != a_bar.shape:
        raise ShapeError("b_bar rows must match a_bar length")
    diag = a_bar * a_bar * w - w + b_sq
    return float(np.sqrt(np.sum(diag * diag)))


def offdiagonal_residual(b_bar) -> float:
    """Frobenius mass of the off-diagonal part of B B^T."""
    b_bar = np.asarray(b_bar, dtype=np.float64)
    if b_bar.ndim == 1:
        b_bar = b_bar[:, np.newaxis]
    gram = b_bar @ b_bar.T
    gram = gram - np.diag(np.diag(gram))
    return _frob(gram)


def gramian_diagnostics(
    a_bar, b_bar, horizon: int = 10_000, epsilon: float = 0.0
) -> GramianDiagnostics:
    """Bundle finite-horizon and closed-form diagonals with residual norms."""
    w_finite = gramian_finite_horizon(a_bar, b_bar, horizon)
    w_closed = gramian_closed_form_diag(a_bar, b_bar, epsilon)
    return GramianDiagnostics(
        w_finite=w_finite,
        w_closed=w_closed,
        lyapunov_residual_norm=lyapunov_residual(a_bar, w_closed, b_bar),
        offdiag_residual_norm=offdiagonal_residual(b_bar),
    )


def gramian_influence_score(a_bar, b_bar, c, epsilon: float = 0.0) -> float:
    """Observability-weighted, channel-averaged energy for one location.

    All arguments are (D, N): per-channel transition diagonal, input rows,
    and output rows.  score = (1/D) sum_d sum_i c_{d,i}^2 w_{d,i} with w
    from the closed form.  (N,) inputs are treated as a single channel.
    """
    a_bar = np.atleast_2d(np.asarray(a_bar, dtype=np.float64))
    b_bar = np.atleast_2d(np.asarray(b_bar, dtype=np.float64))
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if not (a_bar.shape == b_bar.shape == c.shape):
        raise ShapeError("a_bar, b_bar, and c must share a (channels, N) shape")
    total = 0.0
    for d in range(a_bar.shape[0]):
        w = gramian_closed_form_diag(a_bar[d], b_bar[d], epsilon)
        total += float(np.sum(c[d] * c[d] * w))
    return total / a_bar.shape[0]


# Positions where every propagated term shares a sign (always the case for
# scalar-output channels) make the exact and propagator scores mathematically
# equal; the two summation orders then differ by last-ulp rounding only.
# Dominance comparisons allow that much and nothing more.
DOMINANCE_TIE_RTOL = 1e-12


def dominance_violations(exact, propagator) -> int:
    """Count positions where the exact score genuinely undercuts the propagator.

    Mathematical ties are not violations; see DOMINANCE_TIE_RTOL.
    """
    exact = np.asarray(exact, dtype=np.float64)
    propagator = np.asarray(propagator, dtype=np.float64)
    slack = DOMINANCE_TIE_RTOL * np.maximum(1.0, np.abs(propagator))
    return int(np.sum(exact < propagator - slack))


def _mean_over_channels(
    systems: Sequence[TimeVaryingDiagonalSystem], score_fn
) -> np.ndarray:
    vectors = [score_fn(s).scores for s in systems]
    return np.mean(np.stack(vectors), axis=0)


def _gramian_sequence_scores(
    systems: Sequence[TimeVaryingDiagonalSystem], epsilon: float
) -> InfluenceScores:
    """Channel-stacked Gramian scores for a whole sequence.

    Each position k evaluates (1/D) sum_d sum_i c^2 w with w from the
    closed form; positions whose regularized denominator is nonpositive
    are invalid and raise rather than report a negative energy.
    """
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise InvalidParameter("epsilon must be nonnegative")
    a = np.stack([s.a_bars for s in systems])  # (D, L, N)
    b_sq = np.stack([np.sum(s.b_bars * s.b_bars, axis=2) for s in systems])
    c_sq = np.stack([np.sum(s.cs * s.cs, axis=1) for s in systems])
    if epsilon == 0.0:
        unstable = np.abs(a) >= 1.0
        if np.any(unstable):
            positions = sorted(set(np.nonzero(unstable)[1].tolist()))
            raise UnstableSystem(
                f"|a_bar| >= 1 at positions {positions} and epsilon=0"
            )
    denom = 1.0 - a * a + epsilon
    valid = denom > 0.0
    w = np.where(valid, b_sq / np.where(valid, denom, 1.0), np.inf)
    weighted = np.where(valid, c_sq * w, np.inf)
    scores = np.mean(np.sum(weighted, axis=2), axis=0)
    bad = ~np.isfinite(scores)
    if np.any(bad):
        positions = np.nonzero(bad)[0].tolist()
        raise UnstableSystem(
            f"regularized denominator nonpositive at positions {positions}"
        )
    return InfluenceScores(scores, Method.GRAMIAN, epsilon=epsilon)


def influence_scores(
    systems: Sequence[TimeVaryingDiagonalSystem] | TimeVaryingDiagonalSystem,
    method: Method,
    epsilon: float = DEFAULT_GRAMIAN_EPSILON,
) -> InfluenceScores:
    """Score one sequence given its per-channel systems.

    Channels are independent single-input systems; their score vectors are
    averaged, matching the Gramian method's 1/D channel convention.
    """
    if isinstance(systems, TimeVaryingDiagonalSystem):
        systems = [systems]
    systems = list(systems)
    if not systems:
        raise InvalidInput("need at least one channel system")
    length = systems[0].length
    if any(s.length != length for s in systems):
        raise ShapeError("channel systems disagree on sequence length")
    method = Method(method)
    if method is Method.NAIVE:
        return InfluenceScores(
            _mean_over_channels(systems, naive_final_state_influence), method
        )
    if method is Method.JACOBIAN_PROPAGATOR:
        return InfluenceScores(
            _mean_over_channels(systems, jacobian_influence_propagator), method
        )
    if method is Method.JACOBIAN_EXACT:
        return InfluenceScores(
            _mean_over_channels(systems, jacobian_influence_exact), method
        )
    return _gramian_sequence_scores(systems, epsilon)
