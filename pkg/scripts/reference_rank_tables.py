"""Rank the four driving-scene datasets from their reported summary statistics.

Only means and standard deviations are available for these datasets, so the
summaries are built directly and pushed through the normal report emitter.
"""

import argparse
from pathlib import Path

from imgcomplexity.intdim import IdEstimate
from imgcomplexity.report import DatasetSummary, NormalFit, emit_summary, rank_notes

# (mean, std) for shannon, glcm, delentropy, then pooled ID
REPORTED = {
    "Cityscapes": ((6.85, 0.29), (6.32, 1.25), (4.35, 0.35), 11.4),
    "IDD": ((7.17, 0.38), (7.8, 1.27), (4.38, 0.55), 11.9),
    "BDD": ((7.38, 0.4), (7.79, 1.05), (4.3, 0.68), 13.7),
    "Vistas": ((7.39, 0.31), (8.12, 1.13), (5.01, 0.62), 30.1),
}


def summaries():
    out = []
    for ds, (sh, gl, de, ide) in REPORTED.items():
        # n is unknown; any value >= 2 gives the same ranks
        fits = [NormalFit(m, s, 2) for m, s in (sh, gl, de)]
        out.append(DatasetSummary(ds, *fits, IdEstimate({10: ide}, ide, (10, 20), 2)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/reference"))
    args = ap.parse_args()
    sums = summaries()
    emit_summary(sums, args.out, provenance={"source": "reported means and stds"})
    print((args.out / "table3.csv").read_text())
    print((args.out / "table1.csv").read_text())
    for metric in ("shannon", "glcm", "delentropy"):
        notes = rank_notes(sums, metric)
        if notes["near_ties"]:
            print(f"{metric}: near ties {notes['near_ties']}")


if __name__ == "__main__":
    main()
