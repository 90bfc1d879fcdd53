from pathlib import Path

import numpy as np
import pytest

from brainaug import Case, SegMask, Volume, save_mask, save_volume

SUFFIXES = (("T1", "t1"), ("T1Gd", "t1ce"), ("T2", "t2"), ("FLAIR", "flair"))


def random_volume(rng, shape=(2, 8, 8, 8), background=0.3):
    data = rng.normal(1.0, 0.5, size=shape)
    data[rng.random(shape) < background] = 0.0
    return Volume(data.astype(np.float32))


def random_mask(rng, shape=(8, 8, 8)):
    return SegMask(rng.choice([0, 0, 0, 1, 2, 4], size=shape).astype(np.uint8))


def write_brats_tree(root: Path, n_cases: int, shape=(12, 12, 12), seed=0, grades=None, with_mask=True):
    """Synthetic BraTS-style dataset on disk; returns the case ids."""
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n_cases):
        grade = grades[i % len(grades)] if grades else None
        cid = f"Case_{i:03d}"
        case_dir = root / grade / cid if grade else root / cid
        case_dir.mkdir(parents=True, exist_ok=True)
        for name, suffix in SUFFIXES:
            data = rng.gamma(2.0, 50.0, size=(1,) + tuple(shape)).astype(np.float32)
            data[:, :2] = 0.0  # background slab
            save_volume(Volume(data, channel_names=(name,)), case_dir / f"{cid}_{suffix}.nii.gz")
        if with_mask:
            save_mask(random_mask(rng, shape), case_dir / f"{cid}_seg.nii.gz")
        ids.append(cid)
    return ids


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Records one PASS/FAIL line per criterion for the end-of-run summary."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(name: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_case(rng):
    return Case("a", random_volume(rng), random_mask(rng))
