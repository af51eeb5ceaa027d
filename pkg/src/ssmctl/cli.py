"""Command-line front end: synth, analyze, validate, vanish-demo.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 numerical or
model error.  Wall-clock timings go to stderr so the emitted CSV/JSON stays
byte-identical across runs with the same flags.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .archive import load_archive, save_archive, synth_model
from .core import TimeVaryingDiagonalSystem
from .errors import SsmctlError
from .influence import (
    Method,
    jacobian_influence_propagator,
    naive_final_state_influence,
)
from .pipeline import analyze_archive, emit_results
from .validation import KNOWN_FAULTS, run_validation

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

METHOD_NAMES = tuple(m.value for m in Method)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _cmd_synth(args) -> int:
    for name in ("height", "width", "state_dim", "channels", "layers"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
    archive = synth_model(
        args.seed, args.height, args.width, args.state_dim, args.channels, args.layers
    )
    save_archive(archive, args.out)
    _log(f"wrote {args.out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    started = time.perf_counter()
    archive_bytes = Path(args.archive).read_bytes()
    archive = load_archive(args.archive)
    loaded = time.perf_counter()
    results = analyze_archive(archive, Method(args.method), args.layer, args.epsilon)
    analyzed = time.perf_counter()
    emit_results(
        results, archive_bytes, Method(args.method), args.epsilon, args.format, args.output_dir
    )
    finished = time.perf_counter()
    _log(
        f"timings: load={1e3 * (loaded - started):.1f}ms "
        f"analyze={1e3 * (analyzed - loaded):.1f}ms "
        f"emit={1e3 * (finished - analyzed):.1f}ms"
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    results = run_validation(seed=args.seed, tolerance=args.tolerance, fault=args.inject_fault)
    name_width = max(len(r.name) for r in results)
    print(f"{'check':<{name_width}}  {'observed':>12}  {'bound':>12}  status")
    for r in results:
        status = "pass" if r.ok else "FAIL"
        print(f"{r.name:<{name_width}}  {r.observed:>12.3e}  {r.bound:>12.3e}  {status}")
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VALIDATION


def _cmd_vanish_demo(args) -> int:
    if args.length < 1:
        raise UsageError("--length must be >= 1")
    if abs(args.decay) >= 1.0:
        raise UsageError("--decay must satisfy |a| < 1")
    system = TimeVaryingDiagonalSystem.constant(
        [args.decay], [[1.0]], [[1.0]], args.length
    )
    naive = naive_final_state_influence(system).scores
    columns = ["position", "naive"]
    series = [naive]
    if args.compare:
        columns.append("jacobian")
        series.append(jacobian_influence_propagator(system).scores)
    lines = [",".join(columns)]
    for k in range(args.length):
        lines.append(",".join([str(k)] + [repr(float(s[k])) for s in series]))
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
        _log(f"wrote {args.out}")
    return EXIT_OK


class UsageError(Exception):
    """Flag combinations argparse cannot express; maps to exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmctl",
        description="Controllability-based influence heatmaps for selective SSMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a deterministic synthetic model archive")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--height", type=int, default=8)
    p_synth.add_argument("--width", type=int, default=8)
    p_synth.add_argument("--state-dim", type=int, default=4, dest="state_dim")
    p_synth.add_argument("--channels", type=int, default=1)
    p_synth.add_argument("--layers", type=int, default=1)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_analyze = sub.add_parser("analyze", help="compute influence maps from an archive")
    p_analyze.add_argument("archive")
    p_analyze.add_argument("--method", choices=METHOD_NAMES, default=Method.JACOBIAN_PROPAGATOR.value)
    p_analyze.add_argument("--layer", default="all", help="layer index or 'all'")
    p_analyze.add_argument("--epsilon", type=float, default=1e-6)
    p_analyze.add_argument("--format", choices=("csv", "pgm", "json"), default="csv")
    p_analyze.add_argument("--output-dir", required=True, dest="output_dir")
    p_analyze.set_defaults(func=_cmd_analyze)

    p_validate = sub.add_parser("validate", help="run the numerical invariant suite")
    p_validate.add_argument("--tolerance", type=float, default=1e-6)
    p_validate.add_argument("--seed", type=int, default=0)
    p_validate.add_argument(
        "--inject-fault", choices=KNOWN_FAULTS, default=None, help=argparse.SUPPRESS
    )
    p_validate.set_defaults(func=_cmd_validate)

    p_vanish = sub.add_parser(
        "vanish-demo", help="naive vs jacobian scores on a constant scalar system"
    )
    p_vanish.add_argument("--length", type=int, required=True)
    p_vanish.add_argument("--decay", type=float, required=True)
    p_vanish.add_argument("--compare", action="store_true")
    p_vanish.add_argument("--out", default="-")
    p_vanish.set_defaults(func=_cmd_vanish_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {exc}\n")
    except SsmctlError as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
