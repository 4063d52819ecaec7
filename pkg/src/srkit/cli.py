"""Command-line entry point.

Subcommands: ``round`` (inspect one value under both roundings),
``verify`` (run property suites), ``bound`` (sweep the convergence-bound
evaluators to CSV), and ``experiment`` (run an experiment spec to
metrics.csv + manifest.json).

Exit codes: 0 success, 1 check or run failure, 2 configuration error.
The default seed comes from ``SRKIT_SEED`` when set.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentSpec,
    SpecError,
    _atomic_write,
    run_experiment,
    write_run,
)
from .rng import RoundRng
from .rounding import (
    quant_grid,
    round_nearest,
    round_stochastic_f32,
    sr_up_probability,
)
from .theory import ProblemConstants, nr_bound, sr_bound
from .verify import SUITES, run_suites

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _default_seed() -> int:
    return int(os.environ.get("SRKIT_SEED", "0"))


def _parse_value(text: str) -> float:
    """Accept a decimal float, a binary32 hex pattern, or a bf16 hex pattern."""
    t = text.strip().lower()
    if t.startswith("0x"):
        digits = t[2:]
        if len(digits) == 8:
            bits = np.uint32(int(digits, 16))
            return float(np.array([bits], dtype=np.uint32).view(np.float32)[0])
        if len(digits) == 4:
            bits = np.uint32(int(digits, 16) << 16)
            return float(np.array([bits], dtype=np.uint32).view(np.float32)[0])
        raise ValueError("hex pattern must have 4 (bf16) or 8 (binary32) digits")
    return float(t)


def _bits32(x: float) -> int:
    return int(np.array([np.float32(x)], dtype=np.float32).view(np.uint32)[0])


def cmd_round(args) -> int:
    try:
        x = _parse_value(args.value)
    except ValueError as e:
        print(f"error: cannot parse value {args.value!r}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    x32 = float(np.float32(x))

    rows = [("input", f"{x32!r} (0x{_bits32(x32):08X})")]
    if math.isfinite(x32):
        g = quant_grid(x32)
        rows += [("floor", f"{g.floor!r}"), ("ceil", f"{g.ceil!r}"),
                 ("resolution", f"{g.resolution!r}")]
    nr = round_nearest(x32, ties=args.ties)
    rows.append(("nearest", f"{nr.value!r} (0x{nr.bits:04X})"))

    if args.mode == "sr":
        if not math.isfinite(x32):
            print("error: stochastic rounding requires a finite value",
                  file=sys.stderr)
            return EXIT_CONFIG
        p = sr_up_probability(x32)
        rows.append(("p_up", f"{p:.6f}"))
        rng = RoundRng(args.seed)
        n = args.count
        y = round_stochastic_f32(np.full(n, x32, dtype=np.float32), rng, 0, 0)
        sample = float(y[0])
        rows.append(("sr_sample", f"{sample!r} (0x{_bits32(sample) >> 16:04X})"))
        ups = float((y.astype(np.float64) > quant_grid(x32).floor).mean())
        rows.append(("empirical_up", f"{ups:.6f} (count={n})"))

    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = run_suites(names, seed=args.seed, jobs=args.jobs)
    out = reports[0] if len(reports) == 1 else {"suites": reports}
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(args.out) / "verify.json", text + "\n")
    print(text)
    failures = sum(r["failures"] for r in reports)
    return EXIT_OK if failures == 0 else EXIT_FAILURE


_AXES = ("delta", "beta2", "alpha", "R", "L", "eps", "horizon", "d")


def cmd_bound(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        constants = dict(cfg["constants"])
        axis = cfg["axis"]
        values = cfg["values"]
        if axis not in _AXES:
            raise SpecError(f"axis: must be one of {_AXES}")
        if not isinstance(values, list) or not values:
            raise SpecError("values: must be a nonempty list")
        base = ProblemConstants.from_dict(constants)
    except KeyError as e:
        print(f"error: config missing field {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpecError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "sr_vanishing", "sr_adam_gap", "sr_quantization_error",
                "sr_total", "nr_vanishing", "nr_adam_gap",
                "nr_quantization_error", "nr_bias_term", "nr_total"])
    for v in values:
        d = base.to_dict()
        d[axis] = int(v) if axis in ("horizon", "d") else float(v)
        try:
            c = ProblemConstants.from_dict(d)
        except ValueError as e:
            print(f"error: values: {e}", file=sys.stderr)
            return EXIT_CONFIG
        s, n = sr_bound(c), nr_bound(c)
        w.writerow([repr(d[axis]), repr(s.vanishing), repr(s.adam_gap),
                    repr(s.quantization_error), repr(s.total),
                    repr(n.vanishing), repr(n.adam_gap),
                    repr(n.quantization_error), repr(n.bias_term), repr(n.total)])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bounds.csv"
    _atomic_write(path, buf.getvalue())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.seed is not None:
            raw = {**raw, "seed": args.seed}
        elif "seed" not in raw and "SRKIT_SEED" in os.environ:
            raw = {**raw, "seed": _default_seed()}
        spec = ExperimentSpec.from_dict(raw)
        if args.verbose:
            print(f"running {spec.kind} with seed {spec.seed}, "
                  f"{spec.repetitions} repetitions")
        records = run_experiment(spec)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    csv_path, manifest_path = write_run(spec, records, args.out)
    print(f"wrote {csv_path} and {manifest_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="srkit",
        description="BF16 rounding, rounded-update AdamW, and verification tools")
    p.add_argument("--verbose", action="store_true", help="chattier output")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("round", help="inspect one value under both roundings")
    pr.add_argument("value", help="decimal value, 0x binary32 pattern, or 0x bf16 pattern")
    pr.add_argument("--mode", choices=["nearest", "sr"], default="nearest")
    pr.add_argument("--ties", choices=["even", "away"], default="even",
                    help="nearest-rounding tie rule")
    pr.add_argument("--count", type=int, default=100_000,
                    help="stochastic draws for the empirical frequency")
    pr.add_argument("--seed", type=int, default=_default_seed(),
                    help="seed (default from SRKIT_SEED)")
    pr.set_defaults(fn=cmd_round)

    pv = sub.add_parser("verify", help="run a property suite")
    pv.add_argument("suite", choices=list(SUITES) + ["all"])
    pv.add_argument("--seed", type=int, default=_default_seed())
    pv.add_argument("--jobs", type=int, default=1, help="parallel suites")
    pv.add_argument("--out", help="directory for verify.json")
    pv.set_defaults(fn=cmd_verify)

    pb = sub.add_parser("bound", help="sweep the convergence bounds to CSV")
    pb.add_argument("--config", required=True,
                    help="JSON with {constants, axis, values}")
    pb.add_argument("--out", required=True, help="output directory")
    pb.set_defaults(fn=cmd_bound)

    pe = sub.add_parser("experiment", help="run an experiment spec")
    pe.add_argument("--config", required=True, help="experiment spec JSON")
    pe.add_argument("--out", required=True, help="output directory")
    pe.add_argument("--seed", type=int, default=None,
                    help="override the spec seed (default from SRKIT_SEED "
                         "only when the spec omits one)")
    pe.add_argument("--jobs", type=int, default=1,
                    help="parallel grid cells (cells stay deterministic)")
    pe.set_defaults(fn=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
