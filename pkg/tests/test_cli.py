import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from brainaug import SegMask, load_mask, save_mask
from brainaug.cli import main
from conftest import write_brats_tree

SMALL_PIPELINE = {
    "master_seed": 3,
    "spn_permutation_seed": 9,
    "reference_pool": "index",
    "transforms": [
        {"kind": "NormalizeNonZero", "p": 1.0},
        {"kind": "RandScaleIntensity", "p": 0.5, "params": {"factor_range": 0.1}},
        {"kind": "RandShiftIntensity", "p": 0.5, "params": {"offset_range": 0.1}},
        {"kind": "RandSpatialCrop", "p": 1.0, "params": {"roi": [10, 10, 10]}},
        {"kind": "RandFlipZ", "p": 0.5},
        {"kind": "RandElasticAffine", "p": 0.5, "params": {"grid_spacing": [4, 4, 4]}},
        {"kind": "GaussianNoise", "p": 0.5, "params": {"sigma": 0.1}},
        {"kind": "MSR", "p": 0.5, "params": {"alpha": 0.01}},
        {"kind": "SPN", "p": 1.0, "params": {"alpha": 0.01}},
    ],
}


def invoke(*args, env=None):
    result = CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)
    return result


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def dataset(tmp_path):
    data = tmp_path / "data"
    write_brats_tree(data, 10, shape=(12, 12, 12), grades=["HGG", "LGG"])
    r = invoke("index", data, "--out", tmp_path / "index.json", "--require-masks")
    assert r.exit_code == 0, r.output
    return tmp_path


def write_config(path: Path, data: dict) -> Path:
    path.write_text(yaml.safe_dump(data))
    return path


def test_index_and_split(dataset):
    idx = json.loads((dataset / "index.json").read_text())
    assert len(idx["cases"]) == 10
    r = invoke("split", "--index", dataset / "index.json", "--seed", 4, "--out", dataset / "split.json",
               "--strata", "HGG", "--strata", "LGG")
    assert r.exit_code == 0, r.output
    split = json.loads((dataset / "split.json").read_text())
    assert split["seed"] == 4
    assert sorted(split["train"] + split["validation"] + split["test"]) == [c["id"] for c in idx["cases"]]
    again = invoke("split", "--index", dataset / "index.json", "--out", dataset / "split2.json", env={"APP_SEED": "4"})
    assert again.exit_code == 0
    assert (dataset / "split2.json").read_bytes() == (dataset / "split.json").read_bytes()


def test_index_missing_channel_exits_nonzero(tmp_path):
    write_brats_tree(tmp_path / "d", 1, shape=(4, 4, 4))
    (tmp_path / "d" / "Case_000" / "Case_000_t2.nii.gz").unlink()
    r = invoke("index", tmp_path / "d", "--out", tmp_path / "i.json")
    assert r.exit_code == 1 and "MissingChannel" in r.output


def test_augment_is_deterministic_across_workers(dataset):
    cfg = write_config(dataset / "p.yaml", SMALL_PIPELINE)
    outs = []
    for name, workers in (("w1", 1), ("w8", 8), ("w8b", 8)):
        r = invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--workers", workers,
                   "--out", dataset / name)
        assert r.exit_code == 0, r.output
        outs.append(tree_bytes(dataset / name))
    assert outs[0] == outs[1] == outs[2]
    assert len(outs[0]) == 10 * 6 + 2
    lines = (dataset / "w1" / "provenance.jsonl").read_text().splitlines()
    assert [json.loads(x)["case_id"] for x in lines] == [f"Case_{i:03d}" for i in range(10)]


def test_augment_seed_flag_and_env(dataset):
    cfg = write_config(dataset / "p.yaml", SMALL_PIPELINE)
    common = ["augment", "--config", cfg, "--index", dataset / "index.json", "--workers", 2]
    assert invoke(*common, "--seed", 77, "--out", dataset / "a").exit_code == 0
    assert invoke(*common, "--out", dataset / "b", env={"APP_SEED": "77"}).exit_code == 0
    assert invoke(*common, "--out", dataset / "c").exit_code == 0
    assert tree_bytes(dataset / "a") == tree_bytes(dataset / "b")
    assert tree_bytes(dataset / "a") != tree_bytes(dataset / "c")
    assert yaml.safe_load((dataset / "a" / "pipeline.yaml").read_text())["master_seed"] == 77


def test_empty_pipeline_reproduces_inputs(dataset):
    cfg = write_config(dataset / "empty.yaml", {"transforms": []})
    r = invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--out", dataset / "same")
    assert r.exit_code == 0, r.output
    src = tree_bytes(dataset / "data")
    out = tree_bytes(dataset / "same")
    for rel, content in src.items():
        case_file = "/".join(rel.split("/")[1:])  # drop the grade directory
        assert out[case_file] == content, rel


def test_provenance_replays_a_case(dataset):
    from brainaug.augment import load_pipeline_spec, run_pipeline
    from brainaug.dataset import DatasetIndex, load_case

    cfg = write_config(dataset / "p.yaml", SMALL_PIPELINE)
    assert invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--out", dataset / "o").exit_code == 0
    record = json.loads((dataset / "o" / "provenance.jsonl").read_text().splitlines()[6])
    index = DatasetIndex.load(dataset / "index.json")
    spec = load_pipeline_spec(dataset / "o" / "pipeline.yaml")
    assert spec.master_seed == record["master_seed"]
    pool = {cid: load_case(index, cid, with_mask=False).volume for cid in index.ids}
    replay = run_pipeline(load_case(index, record["case_id"]), spec, record["case_index"], pool)
    saved = load_mask(dataset / "o" / record["case_id"] / f"{record['case_id']}_seg.nii.gz")
    assert np.array_equal(saved.labels, replay.mask.labels)


def test_augment_subset_keeps_case_seeds(dataset):
    cfg = write_config(dataset / "p.yaml", SMALL_PIPELINE)
    invoke("split", "--index", dataset / "index.json", "--out", dataset / "split.json")
    assert invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--out", dataset / "all").exit_code == 0
    r = invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--split", dataset / "split.json",
               "--subset", "test", "--out", dataset / "test")
    assert r.exit_code == 0, r.output
    test_ids = json.loads((dataset / "split.json").read_text())["test"]
    sub = tree_bytes(dataset / "test")
    full = tree_bytes(dataset / "all")
    assert {k.split("/")[0] for k in sub if "/" in k} == set(test_ids)
    for k, v in sub.items():
        if "/" in k:
            assert full[k] == v


def test_augment_failures_exit_one(dataset):
    cfg = write_config(dataset / "bad.yaml", {"transforms": [
        {"kind": "RandSpatialCrop", "p": 1.0, "params": {"roi": [64, 64, 64]}}]})
    r = invoke("augment", "--config", cfg, "--index", dataset / "index.json", "--out", dataset / "bad")
    assert r.exit_code == 1
    rec = json.loads((dataset / "bad" / "provenance.jsonl").read_text().splitlines()[0])
    assert "RoiTooLarge" in rec["error"]


def test_augment_needs_exactly_one_pipeline_source(dataset):
    r = invoke("augment", "--index", dataset / "index.json", "--out", dataset / "x")
    assert r.exit_code == 2


def test_augment_preset(dataset):
    # presets crop to 128^3, larger than the fixture volumes: every case fails cleanly
    r = invoke("augment", "--preset", "spn", "--index", dataset / "index.json", "--out", dataset / "p")
    assert r.exit_code == 1
    assert yaml.safe_load((dataset / "p" / "pipeline.yaml").read_text())["transforms"][-1]["kind"] == "SPN"


def _write_masks(directory: Path, masks: dict, suffix: str):
    directory.mkdir(parents=True, exist_ok=True)
    for cid, labels in masks.items():
        save_mask(SegMask(np.asarray(labels, np.uint8)), directory / f"{cid}{suffix}.nii.gz")


def test_evaluate(tmp_path):
    gt = {"a": [[[0, 1], [2, 4]]], "b": [[[0, 0], [0, 0]]]}
    pred = {"a": [[[0, 1], [2, 2]]], "b": [[[0, 0], [0, 0]]]}
    _write_masks(tmp_path / "gt", gt, "_seg")
    _write_masks(tmp_path / "pred", pred, "_pred")
    r = invoke("evaluate", "--pred", tmp_path / "pred", "--gt", tmp_path / "gt", "--out", tmp_path / "ev")
    assert r.exit_code == 0, r.output
    rows = (tmp_path / "ev" / "dice.csv").read_text().splitlines()
    assert rows == ["case_id,WT,TC,ET", "a,1.0,0.6666666666666666,0.0", "b,1.0,1.0,1.0"]
    summary = json.loads((tmp_path / "ev" / "dice.json").read_text())
    assert summary["empty_both"] == {"b": ["WT", "TC", "ET"]}
    only_csv = invoke("evaluate", "--pred", tmp_path / "pred", "--gt", tmp_path / "gt", "--format", "csv",
                      "--out", tmp_path / "ev2")
    assert only_csv.exit_code == 0 and not (tmp_path / "ev2" / "dice.json").exists()


def test_evaluate_case_mismatch(tmp_path):
    _write_masks(tmp_path / "gt", {"a": [[[0]]], "b": [[[0]]]}, "_seg")
    _write_masks(tmp_path / "pred", {"a": [[[0]]]}, "_pred")
    r = invoke("evaluate", "--pred", tmp_path / "pred", "--gt", tmp_path / "gt", "--out", tmp_path / "ev")
    assert r.exit_code == 1 and "CaseSetMismatch" in r.output


def test_evaluate_reads_brats_tree(dataset):
    r = invoke("evaluate", "--pred", dataset / "data", "--gt", dataset / "data", "--out", dataset / "ev")
    assert r.exit_code == 0, r.output
    assert "WT=1.00000" in r.output


def _write_report(path: Path, scores):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["case_id,WT,TC,ET"] + [f"s{i},{v!r},{v!r},{v!r}" for i, v in enumerate(scores)]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_analyze_three_conditions(tmp_path):
    table = [[0.81, 0.83, 0.85], [0.72, 0.74, 0.79], [0.90, 0.89, 0.93], [0.65, 0.70, 0.71], [0.77, 0.80, 0.78]]
    args = [f"{name}={_write_report(tmp_path / name / 'dice.csv', [row[j] for row in table])}"
            for j, name in enumerate(["baseline", "msr", "spn"])]
    r = invoke("analyze", *args, "--out", tmp_path / "st")
    assert r.exit_code == 0, r.output
    stats = json.loads((tmp_path / "st" / "stats.json").read_text())
    assert abs(stats["WT"]["anova"]["F"] - 7.396648044692732) <= 1e-6
    assert abs(stats["TC"]["anova"]["p_value"] - 0.015175095034131308) <= 1e-6
    box = (tmp_path / "st" / "boxplot.csv").read_text().splitlines()
    assert box[0].startswith("region,condition,n,min,q1,median,q3,max")
    assert len(box) == 1 + 3 * 3


def test_analyze_degenerate_is_flagged(tmp_path):
    a = _write_report(tmp_path / "a.csv", [0.5, 0.7, 0.2])
    b = _write_report(tmp_path / "b.csv", [0.6, 0.8, 0.3])
    r = invoke("analyze", a, b, "--out", tmp_path / "st", "--format", "json")
    assert r.exit_code == 0, r.output
    assert "degenerate" in r.output
    stats = json.loads((tmp_path / "st" / "stats.json").read_text())
    assert stats["ET"]["anova"]["F"] == "inf" and stats["ET"]["anova"]["degenerate"]
    assert not (tmp_path / "st" / "boxplot.csv").exists()


def test_analyze_needs_two_reports(tmp_path):
    a = _write_report(tmp_path / "a.csv", [0.5, 0.7])
    assert invoke("analyze", a, "--out", tmp_path / "st").exit_code == 2


def test_verify_math():
    r = invoke("verify-math")
    assert r.exit_code == 0
    assert "13/13 checks passed" in r.output
    assert r.output.count("[PASS]") == 13
