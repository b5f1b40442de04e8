"""Regenerate the bundled miniature fixtures under src/kgeval/fixtures/mini."""

import argparse
from pathlib import Path

from kgeval.synthetic import write_mini_fixtures

DEFAULT = Path(__file__).resolve().parents[1] / "src" / "kgeval" / "fixtures" / "mini"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=DEFAULT)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    for name in write_mini_fixtures(args.out, args.seed):
        print(args.out / name)


if __name__ == "__main__":
    main()
