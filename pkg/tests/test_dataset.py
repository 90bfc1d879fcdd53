import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainaug import Grade
from brainaug.dataset import DatasetIndex, Split, allocate, build_index, load_case, stratified_split
from brainaug.errors import EmptyStratum, InvalidParameter, MissingChannel, MissingMask
from conftest import write_brats_tree


def _synthetic(n_hgg, n_lgg, n_unknown=0):
    return ([(f"HGG_{i:03d}", "HGG") for i in range(n_hgg)]
            + [(f"LGG_{i:03d}", "LGG") for i in range(n_lgg)]
            + [(f"UNK_{i:03d}", "Unknown") for i in range(n_unknown)])


def test_build_index_and_load_case(tmp_path):
    ids = write_brats_tree(tmp_path, 4, shape=(6, 7, 8), grades=["HGG", "LGG"])
    idx = build_index(tmp_path, require_masks=True)
    assert idx.ids == ids
    assert [idx.entry(i).grade for i in ids] == [Grade.HGG, Grade.LGG, Grade.HGG, Grade.LGG]
    entry = idx.entry("Case_001")
    assert entry.channel_paths["T1Gd"] == "LGG/Case_001/Case_001_t1ce.nii.gz"
    case = load_case(idx, "Case_001")
    assert case.volume.shape == (4, 6, 7, 8)
    assert case.volume.channel_names == ("T1", "T1Gd", "T2", "FLAIR")
    assert case.mask.labels.shape == (6, 7, 8)


def test_grade_sidecar_and_unknown(tmp_path):
    write_brats_tree(tmp_path, 2, shape=(4, 4, 4))
    (tmp_path / "Case_000" / "grade.txt").write_text("LGG\n")
    idx = build_index(tmp_path)
    assert idx.entry("Case_000").grade is Grade.LGG
    assert idx.entry("Case_001").grade is Grade.UNKNOWN


def test_index_json_round_trip(tmp_path):
    write_brats_tree(tmp_path / "data", 3, shape=(4, 4, 4), grades=["HGG"])
    idx = build_index(tmp_path / "data")
    (tmp_path / "index.json").write_text(idx.to_json())
    back = DatasetIndex.load(tmp_path / "index.json")
    assert back.to_dict() == idx.to_dict()


def test_missing_modality_and_mask(tmp_path):
    write_brats_tree(tmp_path, 2, shape=(4, 4, 4), with_mask=False)
    with pytest.raises(MissingMask):
        build_index(tmp_path, require_masks=True)
    assert build_index(tmp_path).entry("Case_000").mask_path is None
    (tmp_path / "Case_001" / "Case_001_flair.nii.gz").unlink()
    with pytest.raises(MissingChannel) as info:
        build_index(tmp_path)
    assert info.value.case_id == "Case_001" and info.value.channel == "FLAIR"


def test_not_a_directory(tmp_path):
    with pytest.raises(InvalidParameter):
        build_index(tmp_path / "missing")


def test_allocate():
    assert allocate(285, (0.8, 0.1, 0.1)) == [228, 29, 28]
    assert allocate(213, (0.8, 0.1, 0.1)) == [171, 21, 21]
    assert allocate(72, (0.8, 0.1, 0.1)) == [58, 7, 7]
    assert allocate(5, (1 / 3, 1 / 3, 1 / 3)) == [2, 2, 1]
    assert allocate(3, (1.0, 0.0, 0.0)) == [3, 0, 0]
    assert allocate(0, (0.8, 0.1, 0.1)) == [0, 0, 0]


def test_brats_sized_split_counts():
    split = stratified_split(_synthetic(213, 72), (0.8, 0.1, 0.1), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (229, 28, 28)


def _check_split(pairs, split, ratios):
    parts = [set(split.train), set(split.validation), set(split.test)]
    everything = {i for i, _ in pairs}
    assert sum(map(len, parts)) == len(everything)
    assert set().union(*parts) == everything
    by_grade = {}
    for cid, g in pairs:
        by_grade.setdefault(g, set()).add(cid)
    for members in by_grade.values():
        n = len(members)
        for part, r in zip(parts, ratios):
            assert abs(len(part & members) / n - r) < 1 / n


@settings(max_examples=100, deadline=None)
@given(n_hgg=st.integers(0, 60), n_lgg=st.integers(0, 40), n_unk=st.integers(0, 10),
       seed=st.integers(0, 2**64 - 1),
       ratios=st.sampled_from([(0.8, 0.1, 0.1), (0.7, 0.15, 0.15), (0.5, 0.25, 0.25), (1.0, 0.0, 0.0)]))
def test_split_properties(n_hgg, n_lgg, n_unk, seed, ratios):
    pairs = _synthetic(n_hgg, n_lgg, n_unk)
    if not pairs:
        return
    split = stratified_split(pairs, ratios, seed)
    _check_split(pairs, split, ratios)
    assert stratified_split(list(reversed(pairs)), ratios, seed).to_dict() == split.to_dict()


def test_seed_changes_membership_not_counts():
    pairs = _synthetic(40, 20)
    a = stratified_split(pairs, seed=1)
    b = stratified_split(pairs, seed=2)
    assert a.test != b.test
    assert [len(a.train), len(a.validation), len(a.test)] == [len(b.train), len(b.validation), len(b.test)]


def test_stratum_shuffle_ignores_other_strata():
    with_lgg = stratified_split(_synthetic(30, 10), seed=5)
    hgg_only = stratified_split(_synthetic(30, 0), seed=5)
    assert [i for i in with_lgg.test if i.startswith("HGG")] == hgg_only.test


def test_split_errors(tmp_path):
    with pytest.raises(InvalidParameter):
        stratified_split(_synthetic(3, 3), (0.5, 0.5, 0.5))
    with pytest.raises(InvalidParameter):
        stratified_split(_synthetic(3, 3), (0.8, 0.1))
    with pytest.raises(EmptyStratum):
        stratified_split(_synthetic(3, 0), strata=["HGG", "LGG"])
    with pytest.raises(EmptyStratum):
        stratified_split([])
    with pytest.raises(InvalidParameter):
        Split(["a"], ["a"], [])


def test_split_json_round_trip(tmp_path):
    split = stratified_split(_synthetic(10, 5), seed=3)
    (tmp_path / "s.json").write_text(split.to_json())
    assert Split.load(tmp_path / "s.json").to_dict() == split.to_dict()


def test_split_accepts_index(tmp_path):
    write_brats_tree(tmp_path, 10, shape=(4, 4, 4), grades=["HGG", "LGG"])
    split = stratified_split(build_index(tmp_path), seed=0)
    assert sorted(split.train + split.validation + split.test) == [f"Case_{i:03d}" for i in range(10)]
    assert np.isclose(sum(split.ratios), 1.0)
