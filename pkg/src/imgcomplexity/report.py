"""Normal fits, dataset ranking, and JSON/CSV/SVG report artifacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .intdim import IdEstimate

METRICS = ("shannon", "glcm", "delentropy", "id")
ENTROPY_METRICS = ("shannon", "glcm", "delentropy")
METRIC_LABELS = {
    "shannon": "Shannon pixel entropy (bits)",
    "glcm": "GLCM entropy (bits)",
    "delentropy": "Delentropy (bits)",
}
# adjacent ranks closer than this fraction of the smaller std are flagged
NEAR_TIE_FRACTION = 0.25


class ReportError(Exception):
    pass


class TooFewSamplesError(ReportError):
    pass


class MissingMetricError(ReportError):
    pass


class ReportIOError(ReportError):
    pass


@dataclass(frozen=True)
class NormalFit:
    mean: float
    std: float
    n: int

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * ((x - self.mean) / self.std) ** 2) / (self.std * math.sqrt(2 * math.pi))


@dataclass
class DatasetSummary:
    dataset_id: str
    shannon_fit: NormalFit
    glcm_fit: NormalFit
    delentropy_fit: NormalFit
    id_estimate: IdEstimate | None = None
    embedding_ref: str | None = None
    config_snapshot: dict = field(default_factory=dict)

    @property
    def n_images(self) -> int:
        return self.shannon_fit.n

    def metric(self, name: str) -> float | None:
        if name == "id":
            return None if self.id_estimate is None else self.id_estimate.pooled
        fit = {"shannon": self.shannon_fit, "glcm": self.glcm_fit,
               "delentropy": self.delentropy_fit}.get(name)
        if fit is None:
            raise MissingMetricError(f"unknown metric {name!r}")
        return fit.mean

    def spread(self, name: str) -> float | None:
        if name == "id":
            return None
        return {"shannon": self.shannon_fit, "glcm": self.glcm_fit,
                "delentropy": self.delentropy_fit}[name].std

    def to_dict(self) -> dict:
        def fit(f):
            return {"mean": f.mean, "std": f.std}

        return {
            "dataset_id": self.dataset_id,
            "n_images": self.n_images,
            "shannon": fit(self.shannon_fit),
            "glcm": fit(self.glcm_fit),
            "delentropy": fit(self.delentropy_fit),
            "intrinsic_dim": None if self.id_estimate is None else {
                "pooled": self.id_estimate.pooled,
                "k_range": list(self.id_estimate.k_range),
            },
            "embedding": self.embedding_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSummary":
        n = int(d["n_images"])

        def fit(key):
            return NormalFit(float(d[key]["mean"]), float(d[key]["std"]), n)

        ide = None
        if d.get("intrinsic_dim"):
            pooled = float(d["intrinsic_dim"]["pooled"])
            k1, k2 = d["intrinsic_dim"]["k_range"]
            ide = IdEstimate({}, pooled, (int(k1), int(k2)), n)
        return cls(d["dataset_id"], fit("shannon"), fit("glcm"), fit("delentropy"),
                   ide, d.get("embedding"))


def fit_normal(samples: Sequence[float]) -> NormalFit:
    """Mean and sample (n-1) standard deviation."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise TooFewSamplesError(f"need at least 2 samples to fit a normal, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    mean = float(np.mean(x))
    std = float(np.sqrt(np.sum((x - mean) ** 2) / (x.size - 1)))
    return NormalFit(mean, std, int(x.size))


def rank_datasets(summaries: Sequence[DatasetSummary], metric: str) -> list[str]:
    """Dataset ids from lowest to highest complexity; equal values fall back to id order."""
    if len(summaries) < 1:
        raise ValueError("no summaries to rank")
    keyed = []
    for s in summaries:
        value = s.metric(metric)
        if value is None:
            raise MissingMetricError(f"dataset {s.dataset_id!r} has no {metric!r} value")
        keyed.append((value, s.dataset_id))
    return [ds for _, ds in sorted(keyed)]


def rank_notes(summaries: Sequence[DatasetSummary], metric: str) -> dict:
    """Exact ties and near-ties between adjacent datasets in the rank order."""
    by_id = {s.dataset_id: s for s in summaries}
    order = rank_datasets(summaries, metric)
    ties, near = [], []
    for lo, hi in zip(order, order[1:]):
        a, b = by_id[lo].metric(metric), by_id[hi].metric(metric)
        if a == b:
            ties.append(f"{lo}={hi} (broken by dataset id)")
            continue
        spreads = [s for s in (by_id[lo].spread(metric), by_id[hi].spread(metric)) if s]
        if spreads and abs(b - a) < NEAR_TIE_FRACTION * min(spreads):
            near.append(f"{lo}~{hi} (diff {b - a:.4g})")
    return {"ties": ties, "near_ties": near}


# --- SVG -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _write(out: str | Path, text: str) -> None:
    try:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {out}: {exc}") from exc


def histogram_bins(samples: np.ndarray, min_bins: int = 8, max_bins: int = 128) -> np.ndarray:
    """Bin edges from the Freedman-Diaconis width, clamped to ``[min_bins, max_bins]``."""
    lo, hi = float(samples.min()), float(samples.max())
    if hi == lo:
        return np.linspace(lo - 0.5, hi + 0.5, min_bins + 1)
    q75, q25 = np.percentile(samples, [75, 25])
    width = 2.0 * (q75 - q25) / samples.size ** (1.0 / 3.0)
    count = max_bins if width <= 0 else math.ceil((hi - lo) / width)
    count = min(max(count, min_bins), max_bins)
    return np.linspace(lo, hi, count + 1)


def emit_histogram_svg(samples: Sequence[float], fit: NormalFit, title: str,
                       out: str | Path, xlabel: str = "value", width: int = 480,
                       height: int = 320) -> None:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no samples to plot")
    edges = histogram_bins(x)
    counts, _ = np.histogram(x, bins=edges)
    ml, mr, mt, mb = 56, 16, 36, 44
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(edges[0]), float(edges[-1])
    binw = float(edges[1] - edges[0])
    degenerate = not fit.std > 0

    curve_x = np.linspace(x0, x1, 200)
    curve_y = np.zeros_like(curve_x) if degenerate else fit.pdf(curve_x) * x.size * binw
    ymax = max(float(counts.max()), float(curve_y.max()), 1.0) * 1.08

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - v / ymax * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<g class="bars" fill="#7a9cc6" stroke="#3b5b85" stroke-width="0.5">',
    ]
    for left, c in zip(edges[:-1], counts):
        if c == 0:
            continue
        parts.append(f'<rect x="{_fmt(sx(left))}" y="{_fmt(sy(c))}" '
                     f'width="{_fmt(binw / (x1 - x0) * pw)}" height="{_fmt(ph - (sy(c) - mt))}" '
                     f'data-count="{int(c)}"/>')
    parts.append("</g>")
    if degenerate:
        parts.append(f'<text class="notice" x="{ml + pw / 2}" y="{mt + 16}" text-anchor="middle" '
                     f'font-size="11" fill="#a33">degenerate fit: std = 0, n = {fit.n}</text>')
    else:
        d = " ".join(f"{'M' if i == 0 else 'L'}{_fmt(sx(cx))},{_fmt(sy(cy))}"
                     for i, (cx, cy) in enumerate(zip(curve_x, curve_y)))
        parts.append(f'<path class="normal-fit" d="{d}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    parts += [
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml}" y="{mt + ph + 14}" font-size="10" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{ml + pw}" y="{mt + ph + 14}" font-size="10" text-anchor="middle">{x1:.3g}</text>',
        f'<text x="{ml - 4}" y="{mt + 4}" font-size="10" text-anchor="end">{ymax:.3g}</text>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {mt + ph / 2})">count</text>',
        f'<text x="{ml + pw - 4}" y="{mt + 12}" text-anchor="end" font-size="10">'
        f'mean {fit.mean:.4g}, std {fit.std:.4g}, n {fit.n}</text>',
        "</svg>",
    ]
    _write(out, "\n".join(parts) + "\n")


def _marginal_counts(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    if hi == lo:
        counts = np.zeros(bins, dtype=np.int64)
        counts[bins // 2] = values.size
        return counts
    return np.histogram(values, bins=bins, range=(lo, hi))[0]


def emit_embedding_svg(points: np.ndarray, out: str | Path, title: str = "",
                       size: int = 420, marginal: int = 70, bins: int = 40) -> None:
    """Scatter of a 2-D embedding with marginal histograms on the top and right edges."""
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("empty embedding")
    pad = 12
    width = size + marginal + 2 * pad
    height = size + marginal + 2 * pad + 20
    px0, py0 = pad, pad + 20 + marginal
    xs, ys = pts[:, 0], pts[:, 1]

    def span(v):
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            return lo - 1.0, hi + 1.0
        margin = 0.03 * (hi - lo)
        return lo - margin, hi + margin

    # symmetric x/y limits so a mirrored embedding yields a mirrored picture
    xlim = span(np.concatenate([xs, -xs]))
    ylim = span(ys)
    radius = max(0.6, min(4.0, 40.0 / math.sqrt(n)))

    def sx(v):
        return px0 + (v - xlim[0]) / (xlim[1] - xlim[0]) * size

    def sy(v):
        return py0 + size - (v - ylim[0]) / (ylim[1] - ylim[0]) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{px0}" y="{py0}" width="{size}" height="{size}" fill="none" stroke="#888"/>',
        '<g class="points" fill="#2c6fbb" fill-opacity="0.55">',
    ]
    parts += [f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="{radius:.2f}"/>'
              for x, y in pts]
    parts.append("</g>")

    cx = _marginal_counts(xs, *xlim, bins)
    cy = _marginal_counts(ys, *ylim, bins)
    peak = max(int(cx.max()), int(cy.max()), 1)
    step = size / bins
    parts.append('<g class="marginal-x" fill="#7a9cc6">')
    for i, c in enumerate(cx):
        if c:
            h = c / peak * (marginal - 4)
            parts.append(f'<rect x="{_fmt(px0 + i * step)}" y="{_fmt(py0 - h)}" '
                         f'width="{_fmt(step)}" height="{_fmt(h)}" data-count="{int(c)}"/>')
    parts.append("</g>")
    parts.append('<g class="marginal-y" fill="#7a9cc6">')
    for i, c in enumerate(cy):
        if c:
            w = c / peak * (marginal - 4)
            parts.append(f'<rect x="{_fmt(px0 + size)}" y="{_fmt(py0 + size - (i + 1) * step)}" '
                         f'width="{_fmt(w)}" height="{_fmt(step)}" data-count="{int(c)}"/>')
    parts.append("</g>")
    parts.append("</svg>")
    _write(out, "\n".join(parts) + "\n")


# --- tables ----------------------------------------------------------------

def summary_ranks(summaries: Sequence[DatasetSummary]) -> dict:
    ranks = {}
    for metric in METRICS:
        if all(s.metric(metric) is not None for s in summaries):
            ranks[metric] = rank_datasets(summaries, metric)
        else:
            ranks[metric] = None
    return ranks


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def emit_summary(summaries: Sequence[DatasetSummary], out_dir: str | Path,
                 provenance: dict | None = None) -> dict:
    """Write summary.json, table1.csv (IDs), table2.csv (mean/std) and table3.csv (ranks)."""
    if not summaries:
        raise ValueError("no summaries to emit")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {out_dir}: {exc}") from exc

    ranks = summary_ranks(summaries)
    notes = {m: rank_notes(summaries, m) for m, order in ranks.items() if order is not None}
    doc = {
        "datasets": [s.to_dict() for s in summaries],
        "ranks": ranks,
        "rank_notes": notes,
    }
    if provenance:
        doc["provenance"] = provenance
    _write(out_dir / "summary.json", json.dumps(doc, indent=2) + "\n")

    _write_csv(out_dir / "table1.csv", ["dataset_id", "intrinsic_dim", "k1", "k2"], [
        [s.dataset_id, repr(s.id_estimate.pooled), *s.id_estimate.k_range]
        for s in summaries if s.id_estimate is not None
    ])
    header = ["dataset_id", "n_images"]
    for m in ENTROPY_METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    rows = []
    for s in summaries:
        row = [s.dataset_id, s.n_images]
        for fit in (s.shannon_fit, s.glcm_fit, s.delentropy_fit):
            row += [repr(fit.mean), repr(fit.std)]
        rows.append(row)
    _write_csv(out_dir / "table2.csv", header, rows)
    _write_csv(out_dir / "table3.csv", ["metric", "order", "ties", "near_ties"], [
        [m, ";".join(order), ";".join(notes[m]["ties"]), ";".join(notes[m]["near_ties"])]
        for m, order in ranks.items() if order is not None
    ])
    return doc


def read_table3(path: str | Path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        return {r["metric"]: r["order"].split(";") for r in csv.DictReader(fh)}
