"""State space substrate: parameter containers, ZOH discretization, scans.

A continuous linear system

    x'(t) = A x(t) + B u(t)
    y(t)  = C x(t) + D u(t)

is discretized by zero-order hold at timescale ``delta`` and then evaluated
either step by step (recurrent form) or, when the parameters are
time-invariant, as a causal convolution.  Selective models supply different
discretized parameters at every sequence position; ``TimeVaryingDiagonalSystem``
captures that for the diagonal-state case every influence method consumes.

All arithmetic is float64 regardless of how parameters were stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidParameter, NumericalFailure, ResourceLimit, ShapeError

# Below this |delta * a| the (e^x - 1)/a factor is replaced by its limit
# delta, which is where the direct formula loses precision.
ZOH_SMALL_THRESHOLD = 1e-8

# Term budget and scaling target for the truncated-series matrix exponential.
EXPM_MAX_TERMS = 30
EXPM_SCALE_TARGET = 0.5

# Dense discretization is meant for desk-scale systems only.
MAX_DENSE_STATE_DIM = 64


def _as_float_array(name: str, value, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} contains non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not np.isfinite(delta) or delta <= 0.0:
        raise InvalidParameter(f"delta must be a positive finite scalar, got {delta}")
    return delta


@dataclass(frozen=True)
class DenseLTISystem:
    """Continuous-time system (A, B, C, D) with timescale ``delta``.

    A is N x N, B is N x M, C is P x N, D is P x M (zero when omitted).
    Shape consistency is checked at construction; the feedthrough D defaults
    to zero but is carried through every formula when provided.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    delta: float = 1.0

    def __post_init__(self):
        A = _as_float_array("A", self.A, 2)
        B = _as_float_array("B", self.B, 2)
        C = _as_float_array("C", self.C, 2)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ShapeError(f"A must be square, got {A.shape}")
        if n < 1 or B.shape[1] < 1 or C.shape[0] < 1:
            raise ShapeError("state, input, and output dimensions must all be >= 1")
        if B.shape[0] != n:
            raise ShapeError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise ShapeError(f"C has {C.shape[1]} columns, expected {n}")
        p, m = C.shape[0], B.shape[1]
        if self.D is None:
            D = np.zeros((p, m))
        else:
            D = _as_float_array("D", self.D, 2)
            if D.shape != (p, m):
                raise ShapeError(f"D must have shape {(p, m)}, got {D.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "delta", _check_delta(self.delta))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class DiscretizedDiagonalStep:
    """One position's discretized parameters (a_bar, b_bar, c, d).

    ``a_bar`` is the diagonal of the state transition at this step.  The
    stability of the step is recorded by :attr:`stable`, never enforced:
    the naive influence method must run on unstable inputs too.
    """

    a_bar: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        a_bar = _as_float_array("a_bar", self.a_bar, 1)
        b_bar = _as_float_array("b_bar", self.b_bar, 2)
        c = _as_float_array("c", self.c, 2)
        n = a_bar.shape[0]
        if n < 1:
            raise ShapeError("state dimension must be >= 1")
        if b_bar.shape[0] != n:
            raise ShapeError(f"b_bar has {b_bar.shape[0]} rows, expected {n}")
        if c.shape[1] != n:
            raise ShapeError(f"c has {c.shape[1]} columns, expected {n}")
        p, m = c.shape[0], b_bar.shape[1]
        if self.d is None:
            d = np.zeros((p, m))
        else:
            d = _as_float_array("d", self.d, 2)
            if d.shape != (p, m):
                raise ShapeError(f"d must have shape {(p, m)}, got {d.shape}")
        object.__setattr__(self, "a_bar", _frozen(a_bar))
        object.__setattr__(self, "b_bar", _frozen(b_bar))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "d", _frozen(d))

    @property
    def stable(self) -> bool:
        return bool(np.max(np.abs(self.a_bar)) < 1.0)


@dataclass(frozen=True)
class TimeVaryingDiagonalSystem:
    """Ordered steps of discretized diagonal dynamics for one sequence.

    All steps must share state, input, and output dimensions.  Stacked
    parameter arrays are cached for the vectorized influence paths.
    """

    steps: tuple[DiscretizedDiagonalStep, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        if len(steps) < 1:
            raise ShapeError("a system needs at least one step")
        n, m, p = (
            steps[0].a_bar.shape[0],
            steps[0].b_bar.shape[1],
            steps[0].c.shape[0],
        )
        for idx, s in enumerate(steps):
            if s.a_bar.shape[0] != n or s.b_bar.shape[1] != m or s.c.shape[0] != p:
                raise ShapeError(f"step {idx} dimensions differ from step 0")
        object.__setattr__(self, "steps", steps)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def state_dim(self) -> int:
        return self.steps[0].a_bar.shape[0]

    @property
    def input_dim(self) -> int:
        return self.steps[0].b_bar.shape[1]

    @property
    def output_dim(self) -> int:
        return self.steps[0].c.shape[0]

    @cached_property
    def a_bars(self) -> np.ndarray:
        return _frozen(np.stack([s.a_bar for s in self.steps]))

    @cached_property
    def b_bars(self) -> np.ndarray:
        return _frozen(np.stack([s.b_bar for s in self.steps]))

    @cached_property
    def cs(self) -> np.ndarray:
        return _frozen(np.stack([s.c for s in self.steps]))

    @cached_property
    def ds(self) -> np.ndarray:
        return _frozen(np.stack([s.d for s in self.steps]))

    @classmethod
    def from_arrays(cls, a_bars, b_bars, cs, ds=None) -> "TimeVaryingDiagonalSystem":
        """Build a system from stacked (L, ...) parameter arrays."""
        a_bars = _as_float_array("a_bars", a_bars, 2)
        b_bars = _as_float_array("b_bars", b_bars, 3)
        cs = _as_float_array("cs", cs, 3)
        length = a_bars.shape[0]
        if b_bars.shape[0] != length or cs.shape[0] != length:
            raise ShapeError("stacked parameter arrays disagree on sequence length")
        if ds is None:
            ds_seq = [None] * length
        else:
            ds = _as_float_array("ds", ds, 3)
            if ds.shape[0] != length:
                raise ShapeError("ds disagrees on sequence length")
            ds_seq = list(ds)
        return cls(
            tuple(
                DiscretizedDiagonalStep(a_bars[t], b_bars[t], cs[t], ds_seq[t])
                for t in range(length)
            )
        )

    @classmethod
    def constant(cls, a_bar, b_bar, c, length: int, d=None) -> "TimeVaryingDiagonalSystem":
        """Repeat one step ``length`` times (an LTI system in disguise)."""
        step = DiscretizedDiagonalStep(a_bar, b_bar, c, d)
        return cls((step,) * int(length))


@dataclass(frozen=True)
class StateTrajectory:
    """States and outputs produced by :func:`recurrent_scan`."""

    states: np.ndarray
    outputs: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(np.asarray(self.states, dtype=np.float64)))
        object.__setattr__(self, "outputs", _frozen(np.asarray(self.outputs, dtype=np.float64)))
        object.__setattr__(self, "x0", _frozen(np.asarray(self.x0, dtype=np.float64)))

    @property
    def length(self) -> int:
        return self.states.shape[0]


def discretize_zoh_diagonal(a, b, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of a diagonal-A system.

    a_bar_i = exp(delta * a_i)
    b_bar_im = ((exp(delta * a_i) - 1) / a_i) * b_im

    with the series limit delta * b_im substituted when |delta * a_i| is
    below ``ZOH_SMALL_THRESHOLD``.  ``b`` may be (N,) or (N, M); its shape
    is preserved.
    """
    a = _as_float_array("a", a, 1)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim not in (1, 2):
        raise ShapeError(f"b must be 1- or 2-dimensional, got shape {b.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise InvalidParameter("b contains non-finite entries")
    delta = _check_delta(delta)

    x = delta * a
    a_bar = np.exp(x)
    small = np.abs(x) < ZOH_SMALL_THRESHOLD
    safe_a = np.where(small, 1.0, a)
    factor = np.where(small, delta, np.expm1(x) / safe_a)
    b_bar = factor[:, np.newaxis] * b if b.ndim == 2 else factor * b
    return a_bar, b_bar


def _expm_taylor(matrix: np.ndarray, max_terms: int = EXPM_MAX_TERMS) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a truncated series."""
    n = matrix.shape[0]
    norm = float(np.linalg.norm(matrix, 1))
    scale = 0
    if norm > EXPM_SCALE_TARGET:
        scale = int(np.ceil(np.log2(norm / EXPM_SCALE_TARGET)))
    scaled = matrix / (2.0**scale)

    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, max_terms + 1):
        term = term @ scaled / k
        result = result + term
        if np.linalg.norm(term, 1) <= 1e-16 * max(np.linalg.norm(result, 1), 1.0):
            break
    else:
        raise NumericalFailure(
            f"exponential series did not converge within {max_terms} terms"
        )
    for _ in range(scale):
        result = result @ result
    return result


def discretize_zoh_dense(A, B, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """ZOH discretization for a dense state matrix.

    A_bar = exp(delta * A); B_bar comes from the augmented exponential

        exp([[delta*A, delta*B], [0, 0]]) = [[A_bar, B_bar], [0, I]]

    which stays well defined when delta * A is singular, so no explicit
    inverse is ever formed.
    """
    A = _as_float_array("A", A, 2)
    B = _as_float_array("B", B, 2)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ShapeError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise ShapeError(f"B has {B.shape[0]} rows, expected {n}")
    if n > MAX_DENSE_STATE_DIM:
        raise ResourceLimit(f"dense discretization capped at N={MAX_DENSE_STATE_DIM}")
    delta = _check_delta(delta)

    m = B.shape[1]
    augmented = np.zeros((n + m, n + m))
    augmented[:n, :n] = delta * A
    augmented[:n, n:] = delta * B
    exp_aug = _expm_taylor(augmented)
    return exp_aug[:n, :n].copy(), exp_aug[:n, n:].copy()


def _check_input_sequence(u, length: int, input_dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1 and input_dim == 1:
        u = u[:, np.newaxis]
    if u.ndim != 2:
        raise ShapeError(f"input sequence must be 2-dimensional, got shape {u.shape}")
    if u.shape[0] != length:
        raise ShapeError(f"input has {u.shape[0]} steps, system has {length}")
    if u.shape[1] != input_dim:
        raise ShapeError(f"input has {u.shape[1]} channels, system expects {input_dim}")
    if not np.all(np.isfinite(u)):
        raise InvalidParameter("input sequence contains non-finite entries")
    return u


def recurrent_scan(
    system: TimeVaryingDiagonalSystem, u, x0=None
) -> StateTrajectory:
    """Evaluate the recurrence x_t = a_bar_t * x_{t-1} + b_bar_t u_t.

    Outputs follow y_t = c_t x_t + d_t u_t.  The loop runs in a fixed
    order, so identical inputs give bitwise-identical trajectories.
    """
    u = _check_input_sequence(u, system.length, system.input_dim)
    n = system.state_dim
    if x0 is None:
        x = np.zeros(n)
    else:
        x = _as_float_array("x0", x0, 1).copy()
        if x.shape[0] != n:
            raise ShapeError(f"x0 has length {x.shape[0]}, expected {n}")
    x0_saved = x.copy()

    states = np.empty((system.length, n))
    outputs = np.empty((system.length, system.output_dim))
    for t, step in enumerate(system.steps):
        x = step.a_bar * x + step.b_bar @ u[t]
        states[t] = x
        outputs[t] = step.c @ x + step.d @ u[t]
    return StateTrajectory(states, outputs, x0_saved)


def convolution_kernel(system: DenseLTISystem, length: int) -> np.ndarray:
    """Kernel of the convolutional form: kernel[t] = C A_bar^t B_bar.

    Only valid for time-invariant parameters; returns an (L, P, M) array.
    """
    length = int(length)
    if length < 1:
        raise ShapeError("kernel length must be >= 1")
    a_bar, b_bar = discretize_zoh_dense(system.A, system.B, system.delta)
    kernel = np.empty((length, system.output_dim, system.input_dim))
    w = b_bar
    for t in range(length):
        kernel[t] = system.C @ w
        w = a_bar @ w
    return kernel


def convolve_output(u, kernel: np.ndarray) -> np.ndarray:
    """Causal convolution y_t = sum_{i<=t} kernel[t-i] u_i.

    Mirrors the unrolled recurrence with x0 = 0 and no feedthrough.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 3:
        raise ShapeError(f"kernel must be (L, P, M), got shape {kernel.shape}")
    length = kernel.shape[0]
    u = _check_input_sequence(u, length, kernel.shape[2])
    outputs = np.empty((length, kernel.shape[1]))
    for t in range(length):
        outputs[t] = np.einsum("ipm,im->p", kernel[: t + 1][::-1], u[: t + 1])
    return outputs
