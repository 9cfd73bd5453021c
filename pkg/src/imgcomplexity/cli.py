"""Command-line driver: analyze -> intdim -> embed -> report.

Exit codes: 0 success, 1 completed with warnings, 2 fatal.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ingest
from .config import ConfigError, DatasetSpec, RunConfig, config_from_dict, load_config
from .embed import EmbedError, embed_dataset, save_embedding
from .entropy import EntropyError, EntropyRecord, analyze_image
from .intdim import FeatureSet, IdError, IdEstimate, image_features, knn_table, mle_id_dataset
from .report import (ENTROPY_METRICS, METRIC_LABELS, DatasetSummary, ReportError,
                     emit_embedding_svg, emit_histogram_svg, emit_summary, fit_normal)

log = logging.getLogger("imgcomplexity")

OK, PARTIAL, FATAL = 0, 1, 2
# a dataset is abandoned when more than this fraction of its images fail
FAILURE_THRESHOLD = 0.5


class MissingPrerequisite(Exception):
    def __init__(self, path: Path, command: str):
        super().__init__(f"missing {path}; run `imgcomplexity {command}` first")
        self.path = path
        self.command = command


def _dataset_dir(cfg: RunConfig, ds: DatasetSpec) -> Path:
    return Path(cfg.output_dir) / ds.id


def _require(path: Path, command: str) -> Path:
    if not path.exists():
        raise MissingPrerequisite(path, command)
    return path


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# --- analyze ---------------------------------------------------------------

def _load_cache(path: Path) -> dict:
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text()).get("entries", {})
    except (OSError, ValueError):
        log.warning("event=cache_unreadable path=%s", path)
        return {}


def analyze_dataset(cfg: RunConfig, ds: DatasetSpec) -> tuple[int, dict]:
    out = _dataset_dir(cfg, ds)
    out.mkdir(parents=True, exist_ok=True)
    try:
        manifest = ingest.scan_dataset(ds.root, ds.id)
    except ingest.IngestError as exc:
        log.error("event=dataset_failed dataset=%s reason=%s", ds.id, exc)
        return FATAL, {}
    _write_atomic(out / "manifest.json", manifest.to_json())
    for skipped in manifest.skipped:
        log.warning("event=path_skipped dataset=%s path=%s", ds.id, skipped)

    chash = cfg.entropy.config_hash()
    cache = _load_cache(out / "cache.json")
    keys = [f"{rel}|{size}|{chash}" for rel, size in manifest.entries]
    todo = [i for i, key in enumerate(keys) if key not in cache]

    def work(i):
        rel = manifest.entries[i][0]
        try:
            image = ingest.load_grayscale(Path(manifest.root) / rel)
            return analyze_image(image, cfg.entropy, rel)
        except (ingest.IngestError, EntropyError) as exc:
            return exc

    if cfg.workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            fresh = dict(zip(todo, pool.map(work, todo)))
    else:
        fresh = {i: work(i) for i in todo}

    records, failed = [], []
    for i, key in enumerate(keys):
        if i in fresh:
            result = fresh[i]
            if isinstance(result, Exception):
                failed.append(manifest.entries[i][0])
                log.warning("event=image_failed dataset=%s path=%s error=%s",
                            ds.id, manifest.entries[i][0], str(result).replace("\n", " "))
                continue
            records.append((key, result))
        else:
            records.append((key, EntropyRecord(**cache[key])))

    stats = {"images": manifest.count, "decoded": len(todo), "cached": manifest.count - len(todo),
             "failed": len(failed)}
    if manifest.count and len(failed) > FAILURE_THRESHOLD * manifest.count:
        log.error("event=dataset_failed dataset=%s reason=too_many_failures failed=%d of=%d",
                  ds.id, len(failed), manifest.count)
        return FATAL, stats

    tmp = out / "entropy.csv.tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EntropyRecord.CSV_HEADER)
        for _, rec in records:
            writer.writerow(rec.csv_row())
    os.replace(tmp, out / "entropy.csv")
    cache_doc = {"config_hash": chash,
                 "entries": {key: rec.__dict__ for key, rec in records}}
    _write_atomic(out / "cache.json", json.dumps(cache_doc, sort_keys=True) + "\n")
    meta = {"dataset_id": ds.id, "config": cfg.entropy.to_dict(), "config_hash": chash,
            "images": manifest.count, "records": len(records), "failed": failed}
    _write_atomic(out / "entropy_meta.json", json.dumps(meta, indent=2) + "\n")
    log.info("event=analyzed dataset=%s images=%d decoded=%d cached=%d failed=%d",
             ds.id, manifest.count, stats["decoded"], stats["cached"], len(failed))
    if manifest.count == 0:
        log.warning("event=empty_dataset dataset=%s", ds.id)
        return PARTIAL, stats
    return (PARTIAL if failed else OK), stats


def cmd_analyze(cfg: RunConfig) -> int:
    return max([analyze_dataset(cfg, ds)[0] for ds in cfg.datasets], default=OK)


# --- features, intdim, embed -------------------------------------------------

def _features(cfg: RunConfig, ds: DatasetSpec, mode: str, side: int, levels: int
              ) -> FeatureSet:
    out = _dataset_dir(cfg, ds)
    manifest_path = _require(out / "manifest.json", "analyze")
    manifest = ingest.DatasetManifest.from_dict(json.loads(manifest_path.read_text()))

    def one(rel):
        try:
            img = ingest.load_grayscale(Path(manifest.root) / rel)
            return image_features(img, mode, side, levels)
        except (ingest.IngestError, EntropyError) as exc:
            log.warning("event=feature_skipped dataset=%s path=%s error=%s", ds.id, rel, exc)
            return None

    rels = [rel for rel, _ in manifest.entries]
    if cfg.workers > 1 and len(rels) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(one, rels))
    else:
        rows = [one(r) for r in rels]
    kept = [(rel, row) for rel, row in zip(rels, rows) if row is not None]
    if not kept:
        raise IdError(f"dataset {ds.id!r} has no usable images")
    return FeatureSet(np.vstack([r for _, r in kept]), mode, [rel for rel, _ in kept])


def intdim_dataset(cfg: RunConfig, ds: DatasetSpec) -> int:
    ic = cfg.intdim
    feats = _features(cfg, ds, ic.mode, ic.side, ic.glcm_levels)
    table = knn_table(feats, ic.k2, threads=cfg.workers)
    est = mle_id_dataset(table, ic.k1, ic.k2)
    doc = est.to_dict()
    doc.update({"mode": ic.mode, "config_hash": cfg.config_hash()})
    _write_atomic(_dataset_dir(cfg, ds) / "intdim.json", json.dumps(doc, indent=2) + "\n")
    log.info("event=intdim dataset=%s n=%d pooled=%.6g degenerate=%d",
             ds.id, est.n, est.pooled, est.degenerate)
    return PARTIAL if est.degenerate else OK


def cmd_intdim(cfg: RunConfig) -> int:
    status = OK
    for ds in cfg.datasets:
        try:
            status = max(status, intdim_dataset(cfg, ds))
        except MissingPrerequisite:
            raise
        except (IdError, ValueError) as exc:
            log.error("event=intdim_failed dataset=%s error=%s", ds.id, exc)
            status = FATAL
    return status


def embed_paths(cfg: RunConfig, ds: DatasetSpec, n_neighbors: int) -> tuple[Path, Path]:
    base = _dataset_dir(cfg, ds) / "embed" / f"k{n_neighbors}"
    return base.with_suffix(".csv"), base.with_suffix(".svg")


def embed_dataset_sweep(cfg: RunConfig, ds: DatasetSpec) -> int:
    sweep = cfg.embed
    feats = _features(cfg, ds, "glcm_flat", 2, sweep.glcm_levels)
    usable = [k for k in sweep.neighbors if k < feats.n]
    status = OK
    for k in sweep.neighbors:
        if k not in usable:
            log.warning("event=embed_skipped dataset=%s n_neighbors=%d n=%d reason=too_few_samples",
                        ds.id, k, feats.n)
            status = PARTIAL
    if not usable:
        return status
    table = knn_table(feats, max(usable), threads=cfg.workers)
    for k in usable:
        result = embed_dataset(feats, sweep.config_for(k), table=table)
        result.extra.update({"dataset_id": ds.id, "config_hash": cfg.config_hash(),
                             "feature_mode": "glcm_flat", "glcm_levels": sweep.glcm_levels})
        csv_path, svg_path = embed_paths(cfg, ds, k)
        save_embedding(result, csv_path)
        emit_embedding_svg(result.points, svg_path,
                           title=f"{ds.id}: neighbors {k}, min. distance {sweep.min_dist:g}")
        log.info("event=embedded dataset=%s n_neighbors=%d init=%s loss=%.6g->%.6g",
                 ds.id, k, result.init_method, result.initial_loss, result.final_loss)
    return status


def cmd_embed(cfg: RunConfig) -> int:
    status = OK
    for ds in cfg.datasets:
        try:
            status = max(status, embed_dataset_sweep(cfg, ds))
        except MissingPrerequisite:
            raise
        except (IdError, EmbedError, ValueError) as exc:
            log.error("event=embed_failed dataset=%s error=%s", ds.id, exc)
            status = FATAL
    return status


# --- report ----------------------------------------------------------------

def read_entropy_csv(path: Path) -> list[EntropyRecord]:
    with open(path, newline="") as fh:
        return [EntropyRecord.from_csv_row(r) for r in csv.DictReader(fh)]


def summarize_dataset(cfg: RunConfig, ds: DatasetSpec) -> DatasetSummary:
    out = _dataset_dir(cfg, ds)
    records = read_entropy_csv(_require(out / "entropy.csv", "analyze"))
    columns = {
        "shannon": [r.shannon for r in records],
        "glcm": [r.glcm_entropy for r in records],
        "delentropy": [r.delentropy for r in records],
    }
    fits = {m: fit_normal(columns[m]) for m in ENTROPY_METRICS}
    for m in ENTROPY_METRICS:
        emit_histogram_svg(columns[m], fits[m], f"{ds.id}: {METRIC_LABELS[m]}",
                           out / f"hist_{m}.svg", xlabel=METRIC_LABELS[m])
    ide = None
    if (out / "intdim.json").exists():
        ide = IdEstimate.from_dict(json.loads((out / "intdim.json").read_text()))
    embedding = None
    for k in cfg.embed.neighbors:
        csv_path, _ = embed_paths(cfg, ds, k)
        if csv_path.exists():
            embedding = csv_path.relative_to(cfg.output_dir).as_posix()
            break
    return DatasetSummary(ds.id, fits["shannon"], fits["glcm"], fits["delentropy"], ide,
                          embedding, cfg.to_dict())


def cmd_report(cfg: RunConfig) -> int:
    summaries, status = [], OK
    for ds in cfg.datasets:
        try:
            summaries.append(summarize_dataset(cfg, ds))
        except MissingPrerequisite:
            raise
        except ReportError as exc:
            log.error("event=report_skipped dataset=%s error=%s", ds.id, exc)
            status = PARTIAL
    if not summaries:
        log.error("event=report_failed reason=no_datasets")
        return FATAL
    emit_summary(summaries, cfg.output_dir, provenance={"config_hash": cfg.config_hash()})
    log.info("event=report_written path=%s datasets=%d",
             Path(cfg.output_dir) / "summary.json", len(summaries))
    return status


def cmd_all(cfg: RunConfig) -> int:
    status = OK
    for step in (cmd_analyze, cmd_intdim, cmd_embed, cmd_report):
        status = max(status, step(cfg))
        if status == FATAL:
            break
    return status


COMMANDS = {"analyze": cmd_analyze, "intdim": cmd_intdim, "embed": cmd_embed,
            "report": cmd_report, "all": cmd_all}


# --- argument handling -------------------------------------------------------

def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated integers, got {text!r}")
    return a, b


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _dataset_arg(text: str) -> DatasetSpec:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected ID=PATH, got {text!r}")
    ds_id, root = text.split("=", 1)
    return DatasetSpec(ds_id, root)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--dataset", action="append", type=_dataset_arg, default=[],
                        metavar="ID=PATH", help="add a dataset (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    common.add_argument("--seed", type=int, help="embedding RNG seed")
    common.add_argument("--glcm-levels", type=int, help="GLCM gray levels for entropy")
    common.add_argument("--glcm-offset", type=_pair, metavar="DX,DY", help="GLCM pixel offset")
    common.add_argument("--deldensity-bins", type=int)
    common.add_argument("--no-half-factor", action="store_true",
                        help="report delentropy without the 1/2 factor")
    common.add_argument("--k-range", type=_pair, metavar="K1,K2", help="neighbour range pooled for ID")
    common.add_argument("--neighbors", type=_int_list, metavar="LIST",
                        help="comma-separated embedding neighbour counts")
    common.add_argument("--min-dist", type=float, help="embedding min_dist")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="imgcomplexity", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.dataset:
        cfg = replace(cfg, datasets=list(args.dataset))
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)

    entropy = {}
    if args.glcm_levels is not None:
        entropy["levels"] = args.glcm_levels
    if args.glcm_offset is not None:
        entropy["offset"] = args.glcm_offset
    if args.deldensity_bins is not None:
        entropy["bins"] = args.deldensity_bins
    if args.no_half_factor:
        entropy["half_factor"] = False
    if entropy:
        cfg = replace(cfg, entropy=replace(cfg.entropy, **entropy))
    if args.k_range is not None:
        cfg = replace(cfg, intdim=replace(cfg.intdim, k1=args.k_range[0], k2=args.k_range[1]))

    embed = {}
    if args.seed is not None:
        embed["seed"] = args.seed
    if args.neighbors:
        embed["neighbors"] = args.neighbors
    if args.min_dist is not None:
        embed["min_dist"] = args.min_dist
    if embed:
        cfg = replace(cfg, embed=replace(cfg.embed, **embed))
    if not cfg.datasets:
        raise ConfigError("no datasets given; use --config or --dataset ID=PATH")
    return cfg


def setup_logging(verbose: bool = False) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except MissingPrerequisite as exc:
        log.error("event=missing_prerequisite path=%s hint=\"run `imgcomplexity %s` first\"",
                  exc.path, exc.command)
        return FATAL
    except (ConfigError, OSError, ValueError) as exc:
        log.error("event=fatal error=%s", str(exc).replace("\n", " "))
        return FATAL


if __name__ == "__main__":
    sys.exit(main())
