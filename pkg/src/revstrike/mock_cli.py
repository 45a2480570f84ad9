"""Command-line front of the bundled mock scanners.

Kept import-light: campaign fixtures launch this once per scan round.
"""

from __future__ import annotations

import argparse
import sys


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="revstrike-mock",
        description="Run one bundled mock scanner round against a target.",
    )
    parser.add_argument("--spec", required=True, help="bundled mock name or spec file path")
    parser.add_argument("--target", required=True, help="target URL to scan")
    parser.add_argument("--out", required=True, help="where to write the HTML report")
    args = parser.parse_args(argv)

    from .mocks import TargetUnreachable, load_mock_spec, run_mock

    try:
        spec = load_mock_spec(args.spec)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bad mock spec: {exc}", file=sys.stderr)
        return 2
    try:
        artifact = run_mock(spec, args.target)
    except TargetUnreachable as exc:
        print(str(exc), file=sys.stderr)
        return 3
    with open(args.out, "wb") as fh:
        fh.write(artifact.content)
    return 0


if __name__ == "__main__":
    sys.exit(main())
