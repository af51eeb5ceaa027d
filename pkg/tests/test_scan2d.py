import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_system
from ssmctl.errors import InvalidInput, InvalidParameter, ShapeError
from ssmctl.influence import Method, jacobian_influence_propagator
from ssmctl.scan2d import (
    ALL_DIRECTIONS,
    GridShape,
    InfluenceMap,
    ScanDirection,
    aggregate_directions,
    analyze_layer,
    flatten,
    sequence_order,
    unflatten_scores,
)

GRID_2X2 = np.array([[1.0, 2.0], [3.0, 4.0]])


class TestFlatten:
    def test_singleton_identical_under_all_directions(self):
        grid = np.array([[7.0]])
        for direction in ALL_DIRECTIONS:
            assert_allclose(flatten(grid, direction), [7.0], rtol=0)

    @pytest.mark.parametrize(
        "direction,want",
        [
            (ScanDirection.FWD, [1.0, 2.0, 3.0, 4.0]),
            (ScanDirection.BWD, [4.0, 3.0, 2.0, 1.0]),
            (ScanDirection.TFWD, [1.0, 3.0, 2.0, 4.0]),
            (ScanDirection.TBWD, [4.0, 2.0, 3.0, 1.0]),
        ],
    )
    def test_two_by_two_enumeration(self, direction, want):
        assert_allclose(flatten(GRID_2X2, direction), want, rtol=0)

    def test_channel_grids(self):
        grid = np.stack([GRID_2X2, 10.0 * GRID_2X2], axis=-1)
        seq = flatten(grid, ScanDirection.TFWD)
        assert seq.shape == (4, 2)
        assert_allclose(seq[:, 0], [1.0, 3.0, 2.0, 4.0], rtol=0)
        assert_allclose(seq[:, 1], [10.0, 30.0, 20.0, 40.0], rtol=0)

    def test_roundtrip_all_small_grids(self, rng):
        for h in range(1, 6):
            for w in range(1, 6):
                shape = GridShape(h, w)
                grid = np.abs(rng.standard_normal((h, w)))
                for direction in ALL_DIRECTIONS:
                    seq = flatten(grid, direction)
                    back = unflatten_scores(seq, direction, shape)
                    assert np.array_equal(back.values, grid)
                    scores = np.abs(rng.standard_normal(shape.size))
                    seq2 = flatten(
                        unflatten_scores(scores, direction, shape).values, direction
                    )
                    assert np.array_equal(seq2, scores)


class TestUnflatten:
    def test_constant_scores_constant_map(self):
        shape = GridShape(3, 2)
        for direction in ALL_DIRECTIONS:
            m = unflatten_scores(np.full(6, 2.5), direction, shape)
            assert np.all(m.values == 2.5)

    def test_fwd_enumeration(self):
        m = unflatten_scores([1.0, 2.0, 3.0, 4.0], ScanDirection.FWD, GridShape(2, 2))
        assert_allclose(m.values, [[1.0, 2.0], [3.0, 4.0]], rtol=0)

    def test_bwd_enumeration(self):
        m = unflatten_scores([1.0, 2.0, 3.0, 4.0], ScanDirection.BWD, GridShape(2, 2))
        assert_allclose(m.values, [[4.0, 3.0], [2.0, 1.0]], rtol=0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            unflatten_scores(np.ones(5), ScanDirection.FWD, GridShape(2, 2))

    def test_permutation_equivariance(self, rng):
        scores = np.abs(rng.standard_normal(12))
        shape = GridShape(3, 4)
        fwd = unflatten_scores(scores, ScanDirection.FWD, shape).values
        bwd = unflatten_scores(scores[::-1], ScanDirection.BWD, shape).values
        assert np.array_equal(fwd, bwd)
        tfwd = unflatten_scores(scores, ScanDirection.TFWD, shape).values
        fwd_t = unflatten_scores(scores, ScanDirection.FWD, GridShape(4, 3)).values
        assert np.array_equal(tfwd, fwd_t.T)


class TestAggregate:
    def _maps(self, values_by_dir):
        return [
            InfluenceMap(values_by_dir[d], layer_index=1, method=Method.NAIVE, direction=d)
            for d in ALL_DIRECTIONS
        ]

    def test_identical_maps_unchanged(self, rng):
        values = np.abs(rng.standard_normal((2, 3)))
        agg = aggregate_directions(self._maps({d: values for d in ALL_DIRECTIONS}))
        assert_allclose(agg.values, values, rtol=0)
        assert agg.direction is None
        assert agg.layer_index == 1

    def test_mean_of_constants(self):
        values = {
            d: np.full((2, 2), float(i + 1)) for i, d in enumerate(ALL_DIRECTIONS)
        }
        agg = aggregate_directions(self._maps(values))
        assert np.all(agg.values == 2.5)

    def test_requires_exactly_four(self, rng):
        maps = self._maps({d: np.ones((2, 2)) for d in ALL_DIRECTIONS})
        with pytest.raises(InvalidInput):
            aggregate_directions(maps[:3])
        with pytest.raises(InvalidInput):
            aggregate_directions(maps[:3] + [maps[0]])

    def test_rejects_mismatched_provenance(self):
        maps = self._maps({d: np.ones((2, 2)) for d in ALL_DIRECTIONS})
        bad = InfluenceMap(np.ones((2, 2)), layer_index=2, method=Method.NAIVE,
                           direction=ScanDirection.TBWD)
        with pytest.raises(InvalidInput):
            aggregate_directions(maps[:3] + [bad])
        bad_shape = InfluenceMap(np.ones((3, 2)), layer_index=1, method=Method.NAIVE,
                                 direction=ScanDirection.TBWD)
        with pytest.raises(InvalidInput):
            aggregate_directions(maps[:3] + [bad_shape])

    def test_bounds_and_conservation(self, rng):
        maps = self._maps(
            {d: np.abs(rng.standard_normal((3, 3))) for d in ALL_DIRECTIONS}
        )
        agg = aggregate_directions(maps)
        stack = np.stack([m.values for m in maps])
        assert np.all(agg.values >= stack.min(axis=0) - 1e-15)
        assert np.all(agg.values <= stack.max(axis=0) + 1e-15)
        assert agg.values.sum() == pytest.approx(
            np.mean([m.values.sum() for m in maps]), rel=1e-12
        )


class TestAnalyzeLayer:
    def test_zero_c_gramian_gives_zero_maps(self, rng):
        shape = GridShape(2, 3)
        length = shape.size

        def provider(direction):
            from ssmctl.core import TimeVaryingDiagonalSystem

            return [
                TimeVaryingDiagonalSystem.from_arrays(
                    rng.uniform(-0.5, 0.5, (length, 2)),
                    rng.standard_normal((length, 2, 1)),
                    np.zeros((length, 1, 2)),
                )
            ]

        result = analyze_layer(shape, provider, Method.GRAMIAN, epsilon=0.0)
        for m in result.per_direction.values():
            assert np.all(m.values == 0.0)
        assert np.all(result.aggregated.values == 0.0)

    def test_matches_hand_assembled_composition(self, rng):
        shape = GridShape(2, 2)
        systems = {d: [make_system(rng, 4, 2)] for d in ALL_DIRECTIONS}
        result = analyze_layer(
            shape, lambda d: systems[d], Method.JACOBIAN_PROPAGATOR, layer_index=3
        )
        hand_maps = []
        for d in ALL_DIRECTIONS:
            scores = jacobian_influence_propagator(systems[d][0]).scores
            hand_maps.append(unflatten_scores(scores, d, shape).values)
            assert np.array_equal(result.per_direction[d].values, hand_maps[-1])
        assert_allclose(result.aggregated.values, np.mean(hand_maps, axis=0), rtol=0)
        assert result.aggregated.layer_index == 3

    def test_single_direction_hook(self, rng):
        shape = GridShape(2, 2)
        system = [make_system(rng, 4, 2)]
        result = analyze_layer(
            shape, lambda d: system, Method.NAIVE, directions=[ScanDirection.TFWD]
        )
        assert set(result.per_direction) == {ScanDirection.TFWD}
        assert np.array_equal(
            result.aggregated.values, result.per_direction[ScanDirection.TFWD].values
        )

    def test_shared_system_aggregate_is_rotation_invariant(self, rng):
        shape = GridShape(3, 3)
        system = [make_system(rng, 9, 2)]
        result = analyze_layer(shape, lambda d: system, Method.JACOBIAN_PROPAGATOR)
        agg = result.aggregated.values
        assert_allclose(agg, np.rot90(agg, 2), rtol=1e-15)

    def test_length_mismatch(self, rng):
        shape = GridShape(2, 2)
        with pytest.raises(ShapeError):
            analyze_layer(shape, lambda d: [make_system(rng, 5, 2)], Method.NAIVE)

    def test_errors_annotated_with_direction(self, rng):
        from ssmctl.core import TimeVaryingDiagonalSystem
        from ssmctl.errors import UnstableSystem

        shape = GridShape(1, 2)
        system = TimeVaryingDiagonalSystem.from_arrays(
            np.array([[1.5], [0.2]]), np.ones((2, 1, 1)), np.ones((2, 1, 1))
        )
        with pytest.raises(UnstableSystem, match="direction fwd"):
            analyze_layer(shape, lambda d: [system], Method.GRAMIAN, epsilon=0.0)


class TestMapType:
    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(InvalidParameter):
            InfluenceMap(np.array([[-1.0]]))
        with pytest.raises(InvalidParameter):
            InfluenceMap(np.array([[np.nan]]))

    def test_grid_shape_requires_positive(self):
        with pytest.raises(InvalidInput):
            GridShape(0, 3)
