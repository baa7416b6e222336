import numpy as np
import pytest

from xrtumap import synth
from xrtumap.dataset import Dataset, load_dataset, save_dataset
from xrtumap.errors import ConfigError, DataError

SMALL = synth.SynthConfig(height=16, width=16, bands=8, seed=3)


def test_segmentation_set_is_deterministic():
    a = synth.make_segmentation_set(4, SMALL)
    b = synth.make_segmentation_set(4, SMALL)
    assert len(a) == 4
    for x, y in zip(a, b):
        assert x.cube == y.cube
        assert np.array_equal(x.mask, y.mask)


def test_streams_differ():
    a = synth.make_segmentation_set(2, SMALL, stream=0)
    b = synth.make_segmentation_set(2, SMALL, stream=1)
    assert not a[0].cube == b[0].cube


def test_empty_profile_gives_empty_mask():
    (s,) = synth.make_segmentation_set(1, SMALL, profiles=["none"])
    assert not s.mask.any()
    assert s.cube.transmittance


@pytest.mark.parametrize("profile", ["pack", "carton"])
def test_insert_profiles_mark_pixels(profile):
    (s,) = synth.make_segmentation_set(1, SMALL, profiles=[profile])
    assert s.mask.any()
    # tobacco attenuates, so masked pixels are darker on average in the insert cube
    assert s.insert.data[s.mask].mean() < s.insert.data[~s.mask].mean()


def test_fused_cube_bounded_by_sources():
    for s in synth.make_segmentation_set(5, SMALL):
        bound = np.minimum(s.container.data, s.insert.data)
        assert np.all(s.cube.data <= bound)


def test_default_profiles_include_negatives():
    p = synth.default_profiles(10)
    assert p.count("none") == 2
    assert set(p) == {"none", "pack", "carton"}


def test_profile_count_must_match():
    with pytest.raises(ConfigError):
        synth.make_segmentation_set(2, SMALL, profiles=["pack"])


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError):
        synth.make_segmentation_set(1, SMALL, profiles=["crate"])


@pytest.mark.parametrize("kwargs", [dict(height=8), dict(bands=1), dict(e_min=0.0), dict(photons=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        synth.SynthConfig(**kwargs)


def test_attenuation_falls_with_energy_and_rises_with_z():
    e = synth.energy_grid(synth.SynthConfig())
    mu = synth.attenuation("organic", e)
    assert np.all(np.diff(mu) < 0)
    assert np.all(synth.attenuation("iron", e) > synth.attenuation("aluminium", e))


def test_noise_free_limit_follows_beer_lambert():
    cfg = synth.SynthConfig(height=12, width=12, bands=4, photons=1e12)
    ref = synth.white_reference(cfg, np.random.default_rng(0))
    t = np.full((12, 12), 2.0)
    cube = synth.capture({"plastic": t}, cfg, np.random.default_rng(1), ref)
    expected = np.exp(-2.0 * synth.attenuation("plastic", synth.energy_grid(cfg)))
    assert np.allclose(cube.data, expected[None, None, :], rtol=1e-4)


def test_regression_targets_are_consistent():
    for s in synth.make_regression_set(3, SMALL):
        assert s.targets.shape == (16, 16, len(synth.REGRESSION_TARGETS))
        fa, fb = s.targets[..., 1], s.targets[..., 2]
        assert np.all((fa > 0) & (fb > 0))
        assert np.allclose(fa + fb, 1.0)
        assert np.all(s.targets[~s.mask, 0] <= s.targets[s.mask, 0].max())
        # thicker paths transmit less
        inside = s.cube.data[s.mask].mean()
        outside = s.cube.data[~s.mask].mean()
        assert inside < outside


# --- dataset layout ---------------------------------------------------------


def test_segmentation_dataset_round_trip(tmp_path):
    samples = synth.make_segmentation_set(3, SMALL)
    ds = Dataset("segmentation", [s.cube for s in samples],
                 labels=[s.mask.astype(np.int64) for s in samples], meta={"seed": 3})
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.task == "segmentation" and back.meta == {"seed": 3}
    assert all(a == b for a, b in zip(back.cubes, ds.cubes))
    assert all(np.array_equal(a, b) for a, b in zip(back.labels, ds.labels))
    assert back.masks is None


def test_regression_dataset_round_trip(tmp_path):
    samples = synth.make_regression_set(2, SMALL)
    ds = Dataset("regression", [s.cube for s in samples], masks=[s.mask for s in samples],
                 targets=[s.targets for s in samples])
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert all(np.allclose(a, b, rtol=1e-6) for a, b in zip(back.targets, ds.targets))
    assert all(np.array_equal(a, b) for a, b in zip(back.masks, ds.masks))
    assert back.references() is back.targets


def test_missing_manifest_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(tmp_path)


def test_malformed_manifest_is_data_error(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DataError):
        load_dataset(tmp_path)
