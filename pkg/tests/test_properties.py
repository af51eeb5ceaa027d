"""Property-based checks of the documented invariants."""

import math
from decimal import Decimal, getcontext

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssmctl.core import TimeVaryingDiagonalSystem, discretize_zoh_diagonal
from ssmctl.influence import (
    Method,
    dominance_violations,
    gramian_closed_form_diag,
    gramian_finite_horizon,
    influence_scores,
    jacobian_influence_exact,
    jacobian_influence_propagator,
    naive_final_state_influence,
)
from ssmctl.scan2d import (
    ALL_DIRECTIONS,
    GridShape,
    InfluenceMap,
    aggregate_directions,
    flatten,
    unflatten_scores,
)

finite_floats = st.floats(allow_nan=False, allow_infinity=False)


def _decimal_zoh(a: float, delta: float) -> tuple[float, float]:
    getcontext().prec = 50
    a_d = Decimal(a)
    x = Decimal(delta) * a_d
    factor = Decimal(delta) if a_d == 0 else (x.exp() - 1) / a_d
    return float(x.exp()), float(factor)


@st.composite
def diagonal_systems(draw, max_length=12, max_n=4, scalar_channels=True):
    length = draw(st.integers(1, max_length))
    n = draw(st.integers(1, max_n))
    m = 1 if scalar_channels else draw(st.integers(1, 3))
    p = 1 if scalar_channels else draw(st.integers(1, 3))
    a = draw(
        arrays(np.float64, (length, n), elements=st.floats(-0.99, 0.99))
    )
    b = draw(
        arrays(np.float64, (length, n, m), elements=st.floats(-3.0, 3.0))
    )
    c = draw(
        arrays(np.float64, (length, p, n), elements=st.floats(-3.0, 3.0))
    )
    return TimeVaryingDiagonalSystem.from_arrays(a, b, c)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(min_value=-8.0, max_value=8.0).filter(lambda v: abs(v) >= 1e-3),
    delta=st.floats(min_value=1e-3, max_value=2.0),
)
def test_zoh_matches_decimal_oracle(a, delta):
    a_bar, b_bar = discretize_zoh_diagonal([a], [[1.0]], delta)
    want_a, want_f = _decimal_zoh(a, delta)
    assert abs(a_bar[0] - want_a) <= 1e-13 * max(1.0, abs(want_a))
    assert abs(b_bar[0, 0] - want_f) <= 1e-12 * max(1.0, abs(want_f))


@settings(max_examples=60, deadline=None)
@given(
    a=arrays(np.float64, 4, elements=st.floats(-50.0, -1e-6)),
    delta=st.floats(min_value=1e-6, max_value=100.0),
)
def test_negative_a_discretizes_stable(a, delta):
    a_bar, _ = discretize_zoh_diagonal(a, np.ones((4, 1)), delta)
    assert np.all(np.abs(a_bar) < 1.0)


@settings(max_examples=40, deadline=None)
@given(system=diagonal_systems(scalar_channels=False))
def test_scores_nonnegative_everywhere(system):
    for method in (Method.NAIVE, Method.JACOBIAN_PROPAGATOR, Method.JACOBIAN_EXACT):
        scores = influence_scores([system], method).scores
        assert np.all(scores >= 0.0)
    gram = influence_scores([system], Method.GRAMIAN, epsilon=1e-6).scores
    assert np.all(gram >= 0.0)


@settings(max_examples=60, deadline=None)
@given(system=diagonal_systems(scalar_channels=False))
def test_exact_dominates_propagator(system):
    exact = jacobian_influence_exact(system).scores
    prop = jacobian_influence_propagator(system).scores
    assert dominance_violations(exact, prop) == 0


@settings(max_examples=30, deadline=None)
@given(system=diagonal_systems())
def test_memoryless_collapse_makes_methods_equal(system):
    zeroed = TimeVaryingDiagonalSystem.from_arrays(
        np.zeros_like(system.a_bars), system.b_bars, system.cs
    )
    exact = jacobian_influence_exact(zeroed).scores
    prop = jacobian_influence_propagator(zeroed).scores
    assert np.array_equal(exact, prop)


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(min_value=0.05, max_value=0.99),
    b=st.floats(min_value=0.1, max_value=3.0),
    length=st.integers(2, 40),
)
def test_naive_log_affine_for_constant_scalar(a, b, length):
    system = TimeVaryingDiagonalSystem.constant([a], [[b]], [[1.0]], length)
    scores = naive_final_state_influence(system).scores
    log_scores = np.log(scores)
    slopes = np.diff(log_scores[::-1])
    assert np.max(np.abs(slopes - math.log(a))) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(min_value=0.0, max_value=0.98),
    length=st.integers(2, 40),
)
def test_jacobian_scores_monotone_for_constant_nonnegative_scalar(a, length):
    system = TimeVaryingDiagonalSystem.constant([a], [[1.0]], [[1.0]], length)
    jac = jacobian_influence_propagator(system).scores
    assert np.all(np.diff(jac) <= 1e-12)
    naive = naive_final_state_influence(system).scores
    assert jac[0] / jac[-1] >= naive[0] / naive[-1]


@settings(max_examples=40, deadline=None)
@given(
    a=arrays(np.float64, 3, elements=st.floats(-0.97, 0.97)),
    b=arrays(np.float64, 3, elements=st.floats(-3.0, 3.0)),
    t1=st.integers(1, 200),
    t2=st.integers(1, 200),
)
def test_gramian_horizon_monotone_below_closed_form(a, b, t1, t2):
    lo, hi = sorted((t1, t2))
    b = b.reshape(3, 1)
    w_lo = gramian_finite_horizon(a, b, lo)
    w_hi = gramian_finite_horizon(a, b, hi)
    w_inf = gramian_closed_form_diag(a, b, 0.0)
    assert np.all(w_lo <= w_hi + 1e-12)
    assert np.all(w_hi <= w_inf + 1e-12 * np.maximum(1.0, w_inf))
    # geometric tail: the truncation error is exactly ||b||^2 a^(2T) / (1 - a^2)
    tail = (b[:, 0] ** 2) * np.abs(a) ** (2 * hi) / (1.0 - a * a)
    assert np.all(np.abs(w_hi - w_inf) <= tail + 1e-9 * np.maximum(1.0, w_inf))


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(1, 6),
    w=st.integers(1, 6),
    direction=st.sampled_from(ALL_DIRECTIONS),
    data=st.data(),
)
def test_bijection_roundtrip(h, w, direction, data):
    shape = GridShape(h, w)
    scores = data.draw(
        arrays(np.float64, shape.size, elements=st.floats(0.0, 10.0))
    )
    imap = unflatten_scores(scores, direction, shape)
    assert np.array_equal(flatten(imap.values, direction), scores)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 5), w=st.integers(1, 5), data=st.data())
def test_aggregation_bounds_and_conservation(h, w, data):
    maps = [
        InfluenceMap(
            data.draw(arrays(np.float64, (h, w), elements=st.floats(0.0, 5.0))),
            direction=d,
        )
        for d in ALL_DIRECTIONS
    ]
    agg = aggregate_directions(maps)
    stack = np.stack([m.values for m in maps])
    assert np.all(agg.values >= stack.min(axis=0) - 1e-12)
    assert np.all(agg.values <= stack.max(axis=0) + 1e-12)
    assert abs(agg.values.sum() - np.mean([m.values.sum() for m in maps])) <= 1e-9 * max(
        1.0, abs(float(stack.sum()))
    )
