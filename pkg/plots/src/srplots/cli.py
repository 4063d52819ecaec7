"""plots: render figures from srkit experiment output.

Usage: plots render --spec spec.json [--spec more.json ...]

Exit codes: 0 success, 1 render failure, 2 bad spec or missing data.
"""

from __future__ import annotations

import argparse
import sys

from .figspec import FigSpecError, FigureSpec
from .render import render


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="plots",
                                description="figure generation for srkit CSV output")
    sub = p.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("render", help="render one or more figure specs")
    pr.add_argument("--spec", action="append", required=True,
                    help="figure spec JSON (repeatable)")
    args = p.parse_args(argv)

    rc = 0
    for spec_path in args.spec:
        try:
            info = render(FigureSpec.load(spec_path))
        except FigSpecError as e:
            print(f"error: {spec_path}: {e}", file=sys.stderr)
            return 2
        except Exception as e:  # noqa: BLE001 - report and fail the batch
            print(f"error: {spec_path}: {e}", file=sys.stderr)
            rc = 1
            continue
        print(f"wrote {info.path} ({info.kind}, {info.series} series)")
    return rc


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
