"""Write the smooth / texture / noise fixture datasets as PNG folders."""

import argparse
from pathlib import Path

from imgcomplexity.synthetic import FAMILIES, write_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for offset, family in enumerate(FAMILIES):
        root = write_dataset(args.out / family, family, args.count, args.seed + offset, args.size)
        print(f"{family}: {args.count} images -> {root}")


if __name__ == "__main__":
    main()
