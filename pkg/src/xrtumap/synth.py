"""Synthetic X-ray transmission phantoms.

Transmittance through a stack of materials follows Beer-Lambert,
``T(E) = exp(-sum_m mu_m(E) t_m)``. Mass attenuation is modeled as a
photoelectric term ``~ Z^3 / E^3`` plus a slowly decaying Compton term.
Each phantom is "captured" separately (Poisson counts against an open-beam
reference), white-normalized, and then fused by multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError
from .hypercube import HyperCube, WhiteReference, fuse_beer_lambert, white_normalize

PE_COEF = 11.3  # cm^2/g * keV^3, photoelectric scale
COMPTON_COEF = 0.2  # cm^2/g at 30 keV

# name: (effective Z, density g/cm^3)
MATERIALS = {
    "organic": (6.6, 0.35),
    "plastic": (5.8, 1.05),
    "aluminium": (13.0, 2.7),
    "iron": (26.0, 7.9),
    "tobacco": (7.6, 0.45),
    "mineral_a": (11.0, 2.6),
    "mineral_b": (22.0, 4.5),
}

INSERT_PROFILES = ("none", "pack", "carton")


@dataclass(frozen=True)
class SynthConfig:
    height: int = 40
    width: int = 40
    bands: int = 16
    e_min: float = 20.0
    e_max: float = 150.0
    photons: float = 4000.0  # open-beam counts per pixel and band
    seed: int = 0

    def __post_init__(self):
        if min(self.height, self.width) < 12 or self.bands < 2:
            raise ConfigError("phantoms need at least 12x12 pixels and 2 bands")
        if not 0 < self.e_min < self.e_max:
            raise ConfigError("need 0 < e_min < e_max")
        if self.photons <= 0:
            raise ConfigError("photons must be positive")


def energy_grid(cfg: SynthConfig) -> np.ndarray:
    return np.linspace(cfg.e_min, cfg.e_max, cfg.bands)


def attenuation(material: str, energies) -> np.ndarray:
    """Linear attenuation coefficient ``mu(E)`` in 1/cm."""
    z, rho = MATERIALS[material]
    e = np.asarray(energies, dtype=np.float64)
    mass = PE_COEF * z**3 / e**3 + COMPTON_COEF * (30.0 / e) ** 0.15
    return rho * mass


def white_reference(cfg: SynthConfig, rng) -> WhiteReference:
    """Open-beam counts with per-detector-pixel gain and a falling spectrum."""
    e = energy_grid(cfg)
    spectrum = np.exp(-(e - cfg.e_min) / (cfg.e_max - cfg.e_min))
    spectrum /= spectrum.mean()
    gain = rng.uniform(0.85, 1.15, size=cfg.width)
    return WhiteReference(cfg.photons * gain[:, None] * spectrum[None, :])


def capture(thickness: dict, cfg: SynthConfig, rng, ref: WhiteReference) -> HyperCube:
    """Poisson acquisition of a thickness stack, then white normalization."""
    e = energy_grid(cfg)
    optical = np.zeros((cfg.height, cfg.width, cfg.bands))
    for material, t in thickness.items():
        optical += t[..., None] * attenuation(material, e)[None, None, :]
    expected = ref.data[None, :, :] * np.exp(-optical)
    counts = rng.poisson(expected).astype(np.float64)
    return white_normalize(HyperCube(counts), ref)


def _smooth_field(rng, shape, scale, lo, hi):
    f = gaussian_filter(rng.standard_normal(shape), scale, mode="reflect")
    f = (f - f.min()) / (np.ptp(f) + 1e-12)
    return lo + (hi - lo) * f


def _rect(shape, top, left, h, w):
    m = np.zeros(shape, dtype=bool)
    m[top : top + h, left : left + w] = True
    return m


def luggage_thickness(cfg: SynthConfig, rng) -> dict:
    """Material thickness maps (cm) for a bag.

    Thin, smoothly varying clothing over a plastic shell, plus a few small
    dense rectangular items (a thick organic block, an aluminium plate or an
    iron part). Bright and dark regions bracket the tobacco's attenuation, so
    the insert is not separable by any single transmittance threshold. Items
    are at most a quarter of the bag per side so most of an insert lies over
    clothing rather than hidden behind a dense item.
    """
    shape = (cfg.height, cfg.width)
    organic = _smooth_field(rng, shape, 3.0, 0.0, rng.uniform(1.0, 3.0))
    plastic = np.full(shape, rng.uniform(0.2, 0.4))
    aluminium = np.zeros(shape)
    iron = np.zeros(shape)
    for _ in range(rng.integers(1, 4)):
        h, w = rng.integers(3, cfg.height // 4 + 1), rng.integers(3, cfg.width // 4 + 1)
        m = _rect(shape, rng.integers(0, cfg.height - h), rng.integers(0, cfg.width - w), h, w)
        kind = rng.integers(0, 3)
        if kind == 0:
            organic[m] += rng.uniform(20.0, 30.0)
        elif kind == 1:
            aluminium[m] += rng.uniform(1.5, 3.0)
        else:
            iron[m] += rng.uniform(0.3, 1.0)
    return {"organic": organic, "plastic": plastic, "aluminium": aluminium, "iron": iron}


def insert_thickness(cfg: SynthConfig, rng, profile: str):
    """Cigarette-like insert: a tobacco block plus its mask."""
    if profile not in INSERT_PROFILES:
        raise ConfigError(f"unknown insert profile {profile!r}")
    shape = (cfg.height, cfg.width)
    if profile == "none":
        return {"tobacco": np.zeros(shape)}, np.zeros(shape, dtype=bool)
    if profile == "pack":
        h, w, depth = rng.integers(4, 7), rng.integers(3, 5), rng.uniform(4.0, 6.0)
    else:
        h, w, depth = rng.integers(7, 11), rng.integers(5, 9), rng.uniform(6.0, 10.0)
    if rng.random() < 0.5:
        h, w = w, h
    mask = _rect(shape, rng.integers(0, cfg.height - h + 1), rng.integers(0, cfg.width - w + 1), h, w)
    return {"tobacco": np.where(mask, depth, 0.0)}, mask


@dataclass
class SegmentationSample:
    cube: HyperCube  # fused container x insert
    mask: np.ndarray
    profile: str
    container: HyperCube
    insert: HyperCube


def make_segmentation_sample(cfg: SynthConfig, rng, profile: str, ref: WhiteReference) -> SegmentationSample:
    bag = capture(luggage_thickness(cfg, rng), cfg, rng, ref)
    thick, mask = insert_thickness(cfg, rng, profile)
    insert = capture(thick, cfg, rng, ref)
    return SegmentationSample(fuse_beer_lambert(bag, insert), mask, profile, bag, insert)


def default_profiles(n: int, negative_every: int = 5) -> list[str]:
    """Every ``negative_every``-th sample is empty; others alternate pack/carton."""
    out = []
    for i in range(n):
        if negative_every and i % negative_every == negative_every - 1:
            out.append("none")
        else:
            out.append("pack" if i % 2 == 0 else "carton")
    return out


def make_segmentation_set(n: int, cfg: SynthConfig, profiles=None, stream: int = 0):
    """``n`` fused samples; ``stream`` separates train and test draws."""
    rng = np.random.default_rng([cfg.seed, stream])
    ref = white_reference(cfg, np.random.default_rng([cfg.seed, 99]))
    profiles = profiles or default_profiles(n)
    if len(profiles) != n:
        raise ConfigError("need one insert profile per sample")
    return [make_segmentation_sample(cfg, rng, p, ref) for p in profiles]


REGRESSION_TARGETS = ("thickness", "fraction_a", "fraction_b")
STONE_DEPTH = (0.5, 2.0)  # cm


@dataclass
class RegressionSample:
    cube: HyperCube
    mask: np.ndarray
    targets: np.ndarray  # [H, W, 3]: thickness (cm), fraction A, fraction B


def make_stone(cfg: SynthConfig, rng, ref: WhiteReference) -> RegressionSample:
    """An ellipsoidal stone mixing a light component A with a heavy component B.

    Per-pixel targets are the path length and the (per-stone) fractions of
    A and B, which sum to one.
    """
    yy, xx = np.mgrid[0 : cfg.height, 0 : cfg.width].astype(np.float64)
    cy, cx = rng.uniform(0.35, 0.65) * cfg.height, rng.uniform(0.35, 0.65) * cfg.width
    ry, rx = rng.uniform(0.25, 0.45) * cfg.height, rng.uniform(0.25, 0.45) * cfg.width
    r2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    depth = rng.uniform(STONE_DEPTH[0], STONE_DEPTH[1])
    thickness = depth * np.sqrt(np.clip(1.0 - r2, 0.0, None))
    mask = thickness > 0.15 * depth
    frac_a = rng.uniform(0.1, 0.9)
    frac_b = 1.0 - frac_a
    cube = capture({"mineral_a": thickness * frac_a, "mineral_b": thickness * frac_b}, cfg, rng, ref)
    targets = np.stack(
        [thickness, np.full(thickness.shape, frac_a), np.full(thickness.shape, frac_b)], axis=-1
    )
    return RegressionSample(cube, mask, targets)


def make_regression_set(n: int, cfg: SynthConfig, stream: int = 0):
    rng = np.random.default_rng([cfg.seed, stream])
    ref = white_reference(cfg, np.random.default_rng([cfg.seed, 99]))
    return [make_stone(cfg, rng, ref) for _ in range(n)]
