"""Command-line front end: ``brainaug {index,split,augment,evaluate,analyze,verify-math}``.

Every common flag can also come from an ``APP_``-prefixed environment
variable (``APP_SEED``, ``APP_WORKERS``, ``APP_OUT``, ``APP_CONFIG``,
``APP_FORMAT``). Data files carry no timestamps so reruns can be diffed.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from .augment import dump_pipeline_spec, execute, load_pipeline_spec, load_preset, preset_names
from .augment.pipeline import PipelineSpec
from .dataset import DatasetIndex, Split, build_index, load_case, stratified_split
from .errors import BrainAugError
from .metrics import REGIONS, DiceReport, evaluate
from .nifti import load_mask, nifti_stem, save_mask, save_volume
from .stats import analyze_region
from .verify import run_checks
from .volume import Volume

log = logging.getLogger("brainaug")

seed_option = click.option("--seed", type=click.IntRange(0, 2**64 - 1), envvar="APP_SEED", default=None,
                           help="Overrides the seed from the config (APP_SEED).")
out_option = click.option("--out", type=click.Path(file_okay=True, path_type=Path), envvar="APP_OUT",
                          required=True, help="Output path (APP_OUT).")


def _fail(msg: str, code: int = 2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Seeded volumetric augmentation, dice evaluation and statistics."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(message)s")


@main.command("index")
@click.argument("root", type=click.Path(path_type=Path))
@out_option
@click.option("--require-masks", is_flag=True, help="Fail when a case has no label map.")
def cmd_index(root, out, require_masks):
    """Scan a BraTS-style directory and write a JSON case manifest."""
    try:
        idx = build_index(root, require_masks=require_masks)
    except BrainAugError as exc:
        _fail(f"{type(exc).__name__}: {exc}", 1)
    _write_text(out, idx.to_json())
    click.echo(f"indexed {len(idx)} case(s) -> {out}")


@main.command("split")
@click.option("--index", "index_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--ratios", nargs=3, type=float, default=(0.8, 0.1, 0.1), show_default=True)
@click.option("--strata", multiple=True, help="Grades that must be present (e.g. HGG LGG).")
@seed_option
@out_option
def cmd_split(index_path, ratios, strata, seed, out):
    """Stratified train/validation/test split, written as a JSON manifest."""
    try:
        split = stratified_split(DatasetIndex.load(index_path), ratios, seed or 0, strata or None)
    except BrainAugError as exc:
        _fail(f"{type(exc).__name__}: {exc}", 1)
    _write_text(out, split.to_json())
    click.echo(f"train={len(split.train)} validation={len(split.validation)} test={len(split.test)} -> {out}")


class LazyPool:
    """Thread-safe, load-once mapping from case id to its image volume."""

    def __init__(self, index: DatasetIndex):
        self._index = index
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __getitem__(self, case_id) -> Volume:
        with self._lock:
            if case_id not in self._cache:
                self._cache[case_id] = load_case(self._index, case_id, with_mask=False).volume
            return self._cache[case_id]


def _resolve_spec(config, preset, index: DatasetIndex, seed) -> PipelineSpec:
    if bool(config) == bool(preset):
        _fail("give exactly one of --config or --preset")
    spec = load_pipeline_spec(config, index.ids) if config else load_preset(preset, index.ids)
    if seed is not None:
        spec.master_seed = seed
    missing = [i for i in spec.reference_pool if i not in index.ids]
    if missing:
        _fail(f"reference_pool ids not in index: {missing}")
    return spec.validate()


def _augment_one(index, spec, pool, case_id, case_index, out_dir: Path):
    entry = index.entry(case_id)
    case = load_case(index, case_id)
    result = execute(case, spec, case_index, pool)
    case_dir = out_dir / case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    vol = result.case.volume
    for c, (name, rel) in enumerate(entry.channel_paths.items()):
        single = Volume(vol.data[c:c + 1], affine=vol.affine, spacing=vol.spacing, channel_names=(name,))
        save_volume(single, case_dir / Path(rel).name)
    if result.case.mask is not None:
        save_mask(result.case.mask, case_dir / Path(entry.mask_path).name)
    if entry.grade.value != "Unknown":
        (case_dir / "grade.txt").write_text(entry.grade.value + "\n")
    return result.provenance(spec, case_index)


@main.command("augment")
@click.option("--config", type=click.Path(exists=True, path_type=Path), envvar="APP_CONFIG", default=None,
              help="Pipeline YAML (APP_CONFIG).")
@click.option("--preset", type=click.Choice(preset_names()), default=None, help="Shipped pipeline preset.")
@click.option("--index", "index_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--split", "split_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--subset", type=click.Choice(["train", "validation", "test"]), default="train", show_default=True)
@seed_option
@click.option("--workers", type=click.IntRange(1), envvar="APP_WORKERS", default=None,
              help="Worker threads, default: CPU count (APP_WORKERS).")
@out_option
def cmd_augment(config, preset, index_path, split_path, subset, seed, workers, out):
    """Augment every case (or one split subset) and write NIfTI + provenance."""
    index = DatasetIndex.load(index_path)
    try:
        spec = _resolve_spec(config, preset, index, seed)
    except BrainAugError as exc:
        _fail(f"{type(exc).__name__}: {exc}")
    case_ids = index.ids
    if split_path is not None:
        wanted = set(getattr(Split.load(split_path), subset))
        case_ids = [c for c in case_ids if c in wanted]
    # case index = position in the full index, so subsets do not shift seeds
    positions = {cid: i for i, cid in enumerate(index.ids)}
    out.mkdir(parents=True, exist_ok=True)
    pool = LazyPool(index)
    workers = workers or os.cpu_count() or 1

    def job(cid):
        try:
            return cid, _augment_one(index, spec, pool, cid, positions[cid], out), None
        except (BrainAugError, OSError) as exc:
            return cid, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=workers) as ex:
        results = list(ex.map(job, case_ids))

    failures = 0
    lines = []
    for cid, record, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            failures += 1
            log.error("case %s failed: %s", cid, err)
            click.echo(f"case {cid} failed: {err}", err=True)
            record = {"case_id": cid, "case_index": positions[cid], "error": err}
        lines.append(json.dumps(record, sort_keys=True))
    _write_text(out / "provenance.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    dump_pipeline_spec(spec, out / "pipeline.yaml")
    click.echo(f"augmented {len(case_ids) - failures}/{len(case_ids)} case(s) -> {out}")
    sys.exit(1 if failures else 0)


def _discover_masks(directory: Path) -> dict:
    found = {}
    for p in sorted(directory.rglob("*.nii*")):
        if not p.is_file() or not (p.name.endswith(".nii") or p.name.endswith(".nii.gz")):
            continue
        stem = nifti_stem(p)
        for suffix in ("_seg", "_pred"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
                break
        else:
            # modality images inside a BraTS tree are not label maps
            if "_" in stem and stem.rsplit("_", 1)[1].lower() in ("t1", "t1ce", "t2", "flair"):
                continue
        if stem in found:
            _fail(f"two label maps for case {stem!r} under {directory}")
        found[stem] = p
    return found


def _formats(fmt):
    return set(fmt) if fmt else {"csv", "json"}


@main.command("evaluate")
@click.option("--pred", "pred_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--gt", "gt_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), multiple=True, envvar="APP_FORMAT",
              help="Report formats (default both; APP_FORMAT).")
@out_option
def cmd_evaluate(pred_dir, gt_dir, fmt, out):
    """Per-case WT/TC/ET dice between two directories of label maps."""
    try:
        preds = {k: load_mask(p) for k, p in _discover_masks(pred_dir).items()}
        gts = {k: load_mask(p) for k, p in _discover_masks(gt_dir).items()}
        report = evaluate(preds, gts)
    except BrainAugError as exc:
        _fail(f"{type(exc).__name__}: {exc}", 1)
    out.mkdir(parents=True, exist_ok=True)
    formats = _formats(fmt)
    if "csv" in formats:
        _write_text(out / "dice.csv", report.to_csv())
    if "json" in formats:
        _write_text(out / "dice.json", report.to_json())
    means = report.per_region_mean
    click.echo(" ".join(f"{r}={means[r]:.5f}" for r in REGIONS) + f" mean={report.overall_mean:.5f}")


def _parse_report_arg(arg: str):
    name, sep, path = arg.partition("=")
    if not sep:
        path = arg
        name = Path(arg).parent.name if Path(arg).name == "dice.csv" else Path(arg).stem
    return name, Path(path)


@main.command("analyze")
@click.argument("reports", nargs=-1, required=True)
@click.option("--correction", type=click.Choice(["none", "gg"]), default="none", show_default=True,
              help="Sphericity correction for the ANOVA p-value.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), multiple=True, envvar="APP_FORMAT")
@out_option
def cmd_analyze(reports, correction, fmt, out):
    """Compare conditions given as NAME=dice.csv (one report per augmentation)."""
    columns = {}
    for arg in reports:
        name, path = _parse_report_arg(arg)
        if name in columns:
            _fail(f"duplicate condition name {name!r}")
        if not path.is_file():
            _fail(f"no such report: {path}")
        columns[name] = DiceReport.from_csv(path.read_text())
    if len(columns) < 2:
        _fail("need at least two condition reports")
    try:
        result = {
            region: analyze_region({c: {cid: s[region] for cid, s in rep.per_case.items()}
                                    for c, rep in columns.items()}, correction)
            for region in REGIONS
        }
    except BrainAugError as exc:
        _fail(f"{type(exc).__name__}: {exc}", 1)
    out.mkdir(parents=True, exist_ok=True)
    formats = _formats(fmt)
    if "json" in formats:
        _write_text(out / "stats.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    if "csv" in formats:
        buf = io.StringIO()
        fields = ["region", "condition", "n", "min", "q1", "median", "q3", "max",
                  "whisker_low", "whisker_high", "variance", "outliers"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for region in REGIONS:
            for b in result[region]["boxplot"]:
                writer.writerow([region, b["condition"], b["n"]]
                                + [repr(b[k]) for k in fields[3:11]]
                                + [";".join(repr(v) for v in b["outliers"])])
        _write_text(out / "boxplot.csv", buf.getvalue())
    for region in REGIONS:
        a = result[region]["anova"]
        flag = " (degenerate: zero error variance)" if a["degenerate"] else ""
        click.echo(f"{region}: F={a['F']} p={a['p_value']:.6g}{flag}")


@main.command("verify-math")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_verify_math(seed):
    """Evaluate the loss/schedule formulas and gradient checks; exit 0 iff all pass."""
    checks = run_checks(seed)
    for c in checks:
        click.echo(c.line())
    failed = sum(not c.passed for c in checks)
    click.echo(f"{len(checks) - failed}/{len(checks)} checks passed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
