"""Command-line wrapper: igsc-convert --features <mat> --splits <mat> --out <dir>."""
from __future__ import annotations

import argparse
import sys

from .convert import ConverterError, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="igsc-convert",
        description="Convert a MAT-format benchmark archive pair into a portable dataset directory.",
    )
    parser.add_argument("--features", required=True, help="MAT file with the feature matrix and labels")
    parser.add_argument("--splits", required=True, help="MAT file with the attribute matrix and split indices")
    parser.add_argument("--out", required=True, help="output dataset directory")
    args = parser.parse_args(argv)
    try:
        summary = convert(args.features, args.splits, args.out)
    except ConverterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        "wrote {out}: {samples} samples x {feature_dim} features, "
        "{classes} classes x {attribute_dim} attributes, splits "
        "{train}/{val}/{test_seen}/{test_unseen} (train/val/test-seen/test-unseen)".format(
            out=args.out, **summary
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
