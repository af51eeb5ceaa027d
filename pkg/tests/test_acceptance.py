"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one `[criterion N] PASS/FAIL` line (visible with -s or on
failure) and then asserts, so a red criterion is loud in both channels.
"""

import json
import math
import time

import numpy as np

from conftest import run_cli
from ssmctl.core import (
    DenseLTISystem,
    TimeVaryingDiagonalSystem,
    convolution_kernel,
    convolve_output,
    discretize_zoh_dense,
    discretize_zoh_diagonal,
    recurrent_scan,
)
from ssmctl.influence import (
    dominance_violations,
    finite_difference_gap_jacobian,
    gap_jacobian_analytic,
    gramian_closed_form_diag,
    gramian_finite_horizon,
    jacobian_influence_exact,
    jacobian_influence_propagator,
    lyapunov_residual,
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
from ssmctl.validation import (
    bruteforce_exact_scores,
    bruteforce_propagator_scores,
    random_system,
)


def _announce(number: int, description: str, ok: bool) -> None:
    print(f"[criterion {number}] {'PASS' if ok else 'FAIL'} - {description}")


def _seeded_jacobian_family():
    """The 100 seeded systems shared by criteria 2 and 3 (N <= 8, L <= 64)."""
    rng = np.random.default_rng(2024)
    systems = []
    for _ in range(100):
        length = int(rng.integers(2, 65))
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        systems.append(random_system(rng, length, n, m, p))
    return systems


def test_criterion_1_recurrent_convolutional_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    # diagonal systems through the library recurrence
    for n, length in [(1, 16), (4, 64), (8, 256)]:
        a = rng.uniform(-2.0, -0.05, size=n)
        b = rng.standard_normal((n, 2))
        c = rng.standard_normal((2, n))
        delta = 0.1
        lti = DenseLTISystem(np.diag(a), b, c, delta=delta)
        u = rng.standard_normal((length, 2))
        y_conv = convolve_output(u, convolution_kernel(lti, length))
        a_bar, b_bar = discretize_zoh_diagonal(a, b, delta)
        system = TimeVaryingDiagonalSystem.constant(a_bar, b_bar, c, length)
        y_rec = recurrent_scan(system, u).outputs
        worst = max(worst, np.max(np.abs(y_conv - y_rec)) / np.max(np.abs(y_rec)))
    # dense systems against a locally written dense recurrence
    for n, length in [(3, 64), (8, 256)]:
        a = rng.standard_normal((n, n)) / np.sqrt(n) - 1.0 * np.eye(n)
        b = rng.standard_normal((n, 2))
        c = rng.standard_normal((2, n))
        delta = 0.2
        lti = DenseLTISystem(a, b, c, delta=delta)
        u = rng.standard_normal((length, 2))
        y_conv = convolve_output(u, convolution_kernel(lti, length))
        a_bar, b_bar = discretize_zoh_dense(a, b, delta)
        x = np.zeros(n)
        y_rec = np.empty((length, 2))
        for t in range(length):
            x = a_bar @ x + b_bar @ u[t]
            y_rec[t] = c @ x
        worst = max(worst, np.max(np.abs(y_conv - y_rec)) / np.max(np.abs(y_rec)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-8 and elapsed < 1.0
    _announce(1, f"recurrent/conv equivalence (err {worst:.2e}, {elapsed:.2f}s)", ok)
    assert worst <= 1e-8
    assert elapsed < 1.0


def test_criterion_2_jacobian_oracle_equivalence():
    started = time.perf_counter()
    worst_exact = 0.0
    worst_prop = 0.0
    for system in _seeded_jacobian_family():
        exact = jacobian_influence_exact(system).scores
        exact_bf = bruteforce_exact_scores(system)
        worst_exact = max(
            worst_exact, float(np.max(np.abs(exact - exact_bf) / np.abs(exact_bf)))
        )
        prop = jacobian_influence_propagator(system).scores
        prop_bf = bruteforce_propagator_scores(system)
        worst_prop = max(
            worst_prop, float(np.max(np.abs(prop - prop_bf) / np.abs(prop_bf)))
        )
    elapsed = time.perf_counter() - started
    ok = worst_exact <= 1e-12 and worst_prop <= 1e-12 and elapsed < 10.0
    _announce(
        2,
        f"jacobian oracle equivalence (exact {worst_exact:.2e}, "
        f"propagator {worst_prop:.2e}, {elapsed:.2f}s)",
        ok,
    )
    assert worst_exact <= 1e-12
    assert worst_prop <= 1e-12
    assert elapsed < 10.0


def test_criterion_3_dominance():
    violations = 0
    for system in _seeded_jacobian_family():
        exact = jacobian_influence_exact(system).scores
        prop = jacobian_influence_propagator(system).scores
        violations += dominance_violations(exact, prop)
    ok = violations == 0
    _announce(3, f"exact >= propagator everywhere ({violations} violations)", ok)
    assert violations == 0


def test_criterion_4_gradient_check():
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(50):
        length = int(rng.integers(2, 13))
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        p = int(rng.integers(1, 3))
        system = TimeVaryingDiagonalSystem.from_arrays(
            rng.uniform(-1.0, 1.0, (length, n)),
            rng.uniform(-1.0, 1.0, (length, n, m)),
            rng.uniform(-1.0, 1.0, (length, p, n)),
        )
        u = rng.standard_normal((length, m))
        k = int(rng.integers(0, length))
        analytic = gap_jacobian_analytic(system, k)
        numeric = finite_difference_gap_jacobian(system, u, k, h=1e-5)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    ok = worst <= 1e-6
    _announce(4, f"analytic vs central-difference pooled Jacobian ({worst:.2e})", ok)
    assert worst <= 1e-6


def test_criterion_5_gramian_convergence():
    rng = np.random.default_rng(55)
    worst_rel = 0.0
    worst_residual = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 9))
        a = rng.uniform(-0.95, 0.95, size=n)
        b = rng.standard_normal((n, int(rng.integers(1, 3))))
        w_fin = gramian_finite_horizon(a, b, 10_000)
        w_closed = gramian_closed_form_diag(a, b, 0.0)
        worst_rel = max(
            worst_rel, float(np.max(np.abs(w_fin - w_closed) / w_closed))
        )
        worst_residual = max(worst_residual, lyapunov_residual(a, w_closed, b))
    ok = worst_rel <= 1e-6 and worst_residual <= 1e-10
    _announce(
        5,
        f"gramian horizon vs closed form ({worst_rel:.2e}), "
        f"lyapunov residual ({worst_residual:.2e})",
        ok,
    )
    assert worst_rel <= 1e-6
    assert worst_residual <= 1e-10


def test_criterion_6_vanishing_influence():
    a, length = 0.9, 50
    system = TimeVaryingDiagonalSystem.constant([a], [[1.0]], [[1.0]], length)
    naive = naive_final_state_influence(system).scores
    # log-score gains exactly ln a per extra product factor
    slopes = np.diff(np.log(naive)[::-1])
    slope_err = float(np.max(np.abs(slopes - math.log(a))))
    jac = jacobian_influence_propagator(system).scores
    naive_ratio = naive[0] / naive[-1]
    jac_ratio = jac[0] / jac[-1]
    ok = slope_err <= 1e-9 and jac_ratio > naive_ratio
    _announce(
        6,
        f"naive log-slope ln(0.9) (err {slope_err:.2e}); jacobian early/late "
        f"{jac_ratio:.3f} > naive {naive_ratio:.2e}",
        ok,
    )
    assert slope_err <= 1e-9
    assert jac_ratio > naive_ratio


def test_criterion_7_scan_bijections():
    rng = np.random.default_rng(77)
    ok = True
    for h in range(1, 6):
        for w in range(1, 6):
            shape = GridShape(h, w)
            grid = np.abs(rng.standard_normal((h, w)))
            for direction in ALL_DIRECTIONS:
                seq = flatten(grid, direction)
                ok = ok and np.array_equal(
                    unflatten_scores(seq, direction, shape).values, grid
                )
                scores = np.abs(rng.standard_normal(shape.size))
                ok = ok and np.array_equal(
                    flatten(unflatten_scores(scores, direction, shape).values, direction),
                    scores,
                )
            maps = [
                InfluenceMap(np.abs(rng.standard_normal((h, w))), direction=d)
                for d in ALL_DIRECTIONS
            ]
            agg = aggregate_directions(maps)
            stack = np.stack([m.values for m in maps])
            ok = ok and bool(np.all(agg.values >= stack.min(axis=0) - 1e-15))
            ok = ok and bool(np.all(agg.values <= stack.max(axis=0) + 1e-15))
    _announce(7, "bijection round-trips and aggregation bounds, H,W <= 5", ok)
    assert ok


def test_criterion_8_end_to_end_determinism(tmp_path):
    flags = [
        "synth", "--seed", 3, "--height", 4, "--width", 5,
        "--state-dim", 3, "--channels", 2, "--layers", 2,
    ]
    p1, p2 = tmp_path / "a.ssmz", tmp_path / "b.ssmz"
    assert run_cli(flags + ["--out", p1]) == 0
    assert run_cli(flags + ["--out", p2]) == 0
    ok = p1.read_bytes() == p2.read_bytes()

    out1, out2 = tmp_path / "out1", tmp_path / "out2"
    for out in (out1, out2):
        assert run_cli(["analyze", p1, "--method", "jacobian", "--output-dir", out]) == 0
    names1 = sorted(f.name for f in out1.iterdir())
    names2 = sorted(f.name for f in out2.iterdir())
    ok = ok and names1 == names2
    for name in names1:
        if name.endswith((".csv", ".json")):
            ok = ok and (out1 / name).read_bytes() == (out2 / name).read_bytes()
    _announce(8, "synth + analyze reruns byte-identical (CSV and JSON)", ok)
    assert ok


def test_criterion_9_depth_concentration(tmp_path):
    archive_path = tmp_path / "deep.ssmz"
    assert run_cli(
        [
            "synth", "--seed", 0, "--height", 8, "--width", 8,
            "--state-dim", 4, "--channels", 2, "--layers", 3,
            "--out", archive_path,
        ]
    ) == 0
    out = tmp_path / "out"
    assert run_cli(["analyze", archive_path, "--output-dir", out]) == 0
    report = json.loads((out / "report.json").read_text())
    entropies = [entry["aggregated"]["entropy"] for entry in report["layers"]]
    ok = all(b < a for a, b in zip(entropies, entropies[1:]))
    _announce(
        9,
        "per-layer entropy strictly decreasing with depth "
        + "(" + ", ".join(f"{e:.3f}" for e in entropies) + ")",
        ok,
    )
    assert ok
