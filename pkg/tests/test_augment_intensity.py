import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainaug import Volume
from brainaug.augment import (
    GaussianNoise,
    NormalizeNonZero,
    RandScaleIntensity,
    RandShiftIntensity,
    gaussian_noise,
    normalize_nonzero,
    rand_scale_intensity,
    rand_shift_intensity,
)
from brainaug.errors import DegenerateChannel, InvalidParameter
from conftest import random_volume


def _check_normalized(src: Volume, out: Volume):
    for c in range(src.n_channels):
        nz = src.data[c] != 0
        assert np.all(out.data[c][~nz] == 0.0)
        vals = out.data[c][nz].astype(np.float64)
        if vals.size:
            assert abs(vals.mean()) < 1e-5
            assert abs(vals.std() - 1.0) < 1e-4


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), loc=st.floats(-500, 500), scale=st.floats(0.01, 300))
def test_normalize_nonzero_moments(seed, loc, scale):
    rng = np.random.default_rng(seed)
    data = rng.normal(loc, scale, size=(3, 6, 7, 5))
    data[rng.random(data.shape) < 0.4] = 0.0
    v = Volume(data.astype(np.float32))
    if any(np.ptp(v.data[c][v.data[c] != 0]) == 0 for c in range(3) if np.any(v.data[c])):
        return
    _check_normalized(v, normalize_nonzero(v))


def test_normalize_hand_values():
    v = Volume(np.array([0, 1, 2, 3, 0, 0, 0, 0], np.float32).reshape(1, 2, 2, 2))
    out = normalize_nonzero(v).data.ravel()
    s = np.sqrt(2.0 / 3.0)
    np.testing.assert_allclose(out[:4], [0, -1 / s, 0, 1 / s], rtol=1e-6)
    assert not out[4:].any()


def test_normalize_all_zero_channel_passes_through():
    data = np.zeros((2, 3, 3, 3), np.float32)
    data[1, 0, 0, :] = [1, 2, 4]
    out = normalize_nonzero(Volume(data))
    assert not out.data[0].any()


def test_normalize_degenerate_channel():
    data = np.zeros((1, 3, 3, 3), np.float32)
    data[0, 1, 1, 1] = 5.0
    with pytest.raises(DegenerateChannel):
        normalize_nonzero(Volume(data))
    data[0, 2, 2, 2] = 5.0
    with pytest.raises(DegenerateChannel):
        NormalizeNonZero().transform(Volume(data))


def test_scale_uses_single_factor_across_channels(rng):
    v = random_volume(rng, shape=(4, 5, 5, 5), background=0.0)
    t = RandScaleIntensity(p=1.0, factor_range=0.1)
    draws = t.sample(np.random.default_rng(3), v)
    assert draws["applied"] and abs(draws["factor"]) <= 0.1
    out, _ = t.apply(v, None, draws)
    ratio = out.data / v.data
    np.testing.assert_allclose(ratio, 1 + draws["factor"], rtol=1e-6)


def test_scale_channel_wise(rng):
    v = random_volume(rng, shape=(4, 5, 5, 5), background=0.0)
    t = RandScaleIntensity(p=1.0, factor_range=0.1, channel_wise=True)
    draws = t.sample(np.random.default_rng(3), v)
    assert len(draws["factor"]) == 4 and len(set(draws["factor"])) == 4


def test_scale_forced_draws():
    v = Volume(np.full((1, 2, 2, 2), 2.0, np.float32))
    out, _ = RandScaleIntensity(p=1.0).apply(v, None, {"applied": True, "factor": 0.1})
    np.testing.assert_allclose(out.data, 2.2, rtol=1e-7)
    out, _ = RandScaleIntensity(p=1.0).apply(v, None, {"applied": True, "factor": 0.0})
    assert out is v


def test_shift_forced_and_range(rng):
    v = random_volume(rng)
    t = RandShiftIntensity(p=1.0, offset_range=0.1)
    for seed in range(50):
        d = t.sample(np.random.default_rng(seed), v)
        assert -0.1 <= d["offset"] <= 0.1
    out, _ = t.apply(v, None, {"applied": True, "offset": -0.05})
    np.testing.assert_allclose(out.data, v.data - np.float32(0.05), atol=1e-6)


def test_noise_is_replayable_from_draws(rng):
    v = random_volume(rng)
    t = GaussianNoise(p=1.0, sigma=0.1)
    draws = t.sample(np.random.default_rng(9), v)
    a, _ = t.apply(v, None, draws)
    b, _ = t.apply(v, None, dict(draws))
    assert a.data.tobytes() == b.data.tobytes()
    resid = (a.data - v.data).astype(np.float64)
    assert abs(resid.std() - 0.1) < 0.02


def test_noise_sigma_required():
    with pytest.raises(TypeError):
        GaussianNoise(p=0.3)
    with pytest.raises(InvalidParameter):
        GaussianNoise(p=0.3, sigma=-1).fit()


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
def test_probability_validation(bad):
    with pytest.raises(InvalidParameter):
        RandShiftIntensity(p=bad).fit()


def test_invalid_ranges():
    with pytest.raises(InvalidParameter):
        RandScaleIntensity(factor_range=0).fit()
    with pytest.raises(InvalidParameter):
        RandShiftIntensity(offset_range=-1).fit()


@pytest.mark.parametrize("fn,kw", [
    (rand_scale_intensity, {"factor_range": 0.1}),
    (rand_shift_intensity, {"offset_range": 0.1}),
    (gaussian_noise, {"sigma": 0.1}),
])
def test_gate_endpoints(rng, fn, kw):
    v = random_volume(rng)
    for seed in range(20):
        assert fn(v, np.random.default_rng(seed), p=0.0, **kw) is v
        assert fn(v, np.random.default_rng(seed), p=1.0, **kw).data.tobytes() != v.data.tobytes()


def test_get_params_round_trip():
    t = RandScaleIntensity(p=0.4, factor_range=0.2)
    assert t.get_params() == {"p": 0.4, "factor_range": 0.2, "channel_wise": False}
    clone = RandScaleIntensity(**t.get_params())
    assert clone.to_config() == t.to_config()
