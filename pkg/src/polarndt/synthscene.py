"""Synthetic DoFP sequences of a cooling specimen with subsurface defects.

The specimen is a plate of one surface material with rectangular regions
backed by other materials.  After pulsed heating each region cools with its
own exponential decay, so its radiation balance
``alpha(t) = I_env / (I_env + dI * exp(-t / tau))`` climbs toward 1 from
below at a region-specific rate.  Per-pixel DoLP ground truth combines the
surface and subsurface responses with alpha-dependent weights; background
pixels respond with the surface material alone.

The forward sensor model renders each pixel through its micro-polarizer:
``I(theta) = S0/2 * (1 + DoLP * cos 2(theta - aolp))``, mosaicked per the
superpixel layout, scaled so peak S0 sits at 60% of the 16-bit range,
plus iid Gaussian noise (std in digital numbers), rounded half-even and
clipped to the rail.  Rendering is deterministic per (seed, frame index),
so frames may be rendered in parallel with bit-identical results.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import radiometry
from .dofp import DEFAULT_LAYOUT, MosaicStack, angle_map
from .radiometry import Material, RadiometricScene

U16_MAX = 65535
S0_HEADROOM = 0.6


class SaturationWarning(UserWarning):
    """More than 1% of rendered samples clipped at the 16-bit rail."""


@dataclass(frozen=True)
class DefectRegion:
    """Rectangle backed by a subsurface material with its own cooling decay."""

    x: int
    y: int
    width: int
    height: int
    material: str
    tau_s: float
    delta_i: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"region size must be positive, got "
                             f"{self.width}x{self.height}")
        if not (self.tau_s > 0):
            raise ValueError(f"tau_s must be > 0, got {self.tau_s}")
        if not (self.delta_i >= 0):
            raise ValueError(f"delta_i must be >= 0, got {self.delta_i}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.y, self.y + self.height),
                slice(self.x, self.x + self.width))


@dataclass(frozen=True)
class SpecimenSpec:
    """Plate geometry: surface material, defect regions, background cooling."""

    width: int
    height: int
    surface_material: str
    regions: tuple[DefectRegion, ...]
    background_tau_s: float = 1.0
    background_delta_i: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("specimen dimensions must be positive")
        if not (self.background_tau_s > 0):
            raise ValueError("background_tau_s must be > 0")
        if not (self.background_delta_i >= 0):
            raise ValueError("background_delta_i must be >= 0")
        boxes = []
        for r in self.regions:
            if r.x < 0 or r.y < 0 or r.x + r.width > self.width \
                    or r.y + r.height > self.height:
                raise ValueError(f"region {r.material} at ({r.x},{r.y}) "
                                 f"extends outside the {self.width}x{self.height} image")
            boxes.append(r)
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                if (a.x < b.x + b.width and b.x < a.x + a.width
                        and a.y < b.y + b.height and b.y < a.y + a.height):
                    raise ValueError(
                        f"regions {a.material} and {b.material} overlap")

    def label_mask(self) -> np.ndarray:
        """Integer mask: 0 background, i+1 for regions[i]."""
        mask = np.zeros((self.height, self.width), dtype=np.int64)
        for i, r in enumerate(self.regions):
            mask[r.slices] = i + 1
        return mask

    def labels(self) -> dict[int, str]:
        out = {0: self.surface_material}
        for i, r in enumerate(self.regions):
            out[i + 1] = r.material
        return out


@dataclass(frozen=True)
class SynthConfig:
    """Acquisition settings for a synthetic render; the seed is mandatory."""

    seed: int
    n_frames: int = 80
    frame_rate_hz: float = 40.0
    observation_angle_deg: float = 70.0
    environment_intensity: float = 1.0
    noise_sigma: float = 0.0  # std in 16-bit digital numbers
    aolp_deg: float = 22.5
    layout: str = DEFAULT_LAYOUT

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not (self.frame_rate_hz > 0):
            raise ValueError("frame_rate_hz must be > 0")
        if not (0.0 <= self.observation_angle_deg < 90.0):
            raise ValueError("observation_angle_deg must lie in [0, 90)")
        if not (self.environment_intensity > 0):
            raise ValueError("environment_intensity must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def psi_i(self) -> float:
        return math.radians(self.observation_angle_deg)


@dataclass(frozen=True)
class TruthFrame:
    """Ground truth at one instant."""

    dolp: np.ndarray
    s0: np.ndarray
    mask: np.ndarray
    labels: dict[int, str]


@dataclass(frozen=True)
class TruthBundle:
    """Per-frame DoLP truth plus the static label mask."""

    dolp: np.ndarray  # (n_frames, height, width) float32
    mask: np.ndarray  # (height, width) int
    labels: dict[int, str]
    times_s: np.ndarray


def default_specimen(width: int = 64, height: int = 64) -> SpecimenSpec:
    """Four equal defect rectangles (aluminum, rubber, nickel, paper) on CFRP.

    Metal-backed regions cool slightly faster than polymer-backed ones, so
    the intensity histories differ only weakly while the DoLP histories
    keep the full material contrast.
    """
    rw, rh = width * 3 // 8, height * 3 // 8
    gx0, gy0 = width // 8, height // 8
    gx1, gy1 = width - width // 8 - rw, height - height // 8 - rh
    regions = (
        DefectRegion(gx0, gy0, rw, rh, "aluminum", tau_s=0.97, delta_i=1.0),
        DefectRegion(gx1, gy0, rw, rh, "rubber", tau_s=1.03, delta_i=1.0),
        DefectRegion(gx0, gy1, rw, rh, "nickel", tau_s=0.98, delta_i=1.0),
        DefectRegion(gx1, gy1, rw, rh, "paper", tau_s=1.02, delta_i=1.0),
    )
    return SpecimenSpec(width=width, height=height, surface_material="cfrp",
                        regions=regions, background_tau_s=1.0,
                        background_delta_i=1.0)


def alpha_timeline(delta_i: float, tau_s: float, i_e: float, t):
    """Radiation balance during cooling: alpha(t) = I_env / (I_env + dI e^{-t/tau}).

    Strictly increasing in t, equal to ``i_e / (i_e + delta_i)`` at t = 0,
    and approaching 1 from below.
    """
    t = np.asarray(t, dtype=np.float64)
    i_obj = i_e + delta_i * np.exp(-t / tau_s)
    return i_e / i_obj


def _region_params(spec: SpecimenSpec):
    """(delta_i, tau_s, material name) per label, label 0 = background."""
    params = [(spec.background_delta_i, spec.background_tau_s,
               spec.surface_material)]
    for r in spec.regions:
        params.append((r.delta_i, r.tau_s, r.material))
    return params


def render_truth(spec: SpecimenSpec, config: SynthConfig, t: float,
                 materials: dict[str, Material] | None = None) -> TruthFrame:
    """Ground-truth DoLP, S0, and label mask at time ``t`` seconds.

    Each region's DoLP blends the surface and subsurface responses at the
    region's current alpha; background pixels use the surface material
    alone.  S0 is proportional to the region's emitted intensity.
    """
    materials = materials or radiometry.MATERIALS
    surface = radiometry.get_material(spec.surface_material, materials)
    i_e = config.environment_intensity
    mask = spec.label_mask()
    dolp = np.zeros(mask.shape, dtype=np.float64)
    s0 = np.zeros(mask.shape, dtype=np.float64)
    for label, (delta_i, tau_s, mat_name) in enumerate(_region_params(spec)):
        alpha = float(alpha_timeline(delta_i, tau_s, i_e, t))
        scene = RadiometricScene(alpha=alpha, psi_i=config.psi_i)
        surf_dolp = radiometry.dolp_simplified(surface, scene)
        if label == 0:
            value = surf_dolp
        else:
            sub = radiometry.get_material(mat_name, materials)
            sub_dolp = radiometry.dolp_simplified(sub, scene)
            value = radiometry.dolp_mixture(surf_dolp, sub_dolp, alpha)
        where = mask == label
        dolp[where] = value
        s0[where] = i_e / alpha  # == i_obj(t)
    return TruthFrame(dolp=dolp, s0=s0, mask=mask, labels=spec.labels())


def _intensity_scale(spec: SpecimenSpec, config: SynthConfig) -> float:
    """DN per radiometric unit: peak S0 (at t=0) maps to 60% of full scale."""
    peak_delta = max([spec.background_delta_i] + [r.delta_i for r in spec.regions])
    s0_peak = config.environment_intensity + peak_delta
    return S0_HEADROOM * U16_MAX / s0_peak


def render_mosaic_sequence(spec: SpecimenSpec, config: SynthConfig,
                           materials: dict[str, Material] | None = None
                           ) -> tuple[MosaicStack, TruthBundle]:
    """Render the full mosaic sequence and its ground-truth bundle.

    Frame n samples t = n / frame_rate.  Noise uses a per-frame substream
    keyed by (seed, frame index), so any render order gives bit-identical
    stacks.  Emits ``SaturationWarning`` if more than 1% of samples clip.
    """
    if spec.width % 2 or spec.height % 2:
        raise ValueError("specimen dimensions must be even for mosaic rendering")
    n = config.n_frames
    scale = _intensity_scale(spec, config)
    thetas = np.radians(angle_map(config.layout, spec.height, spec.width))
    modulation = np.cos(2.0 * (thetas - math.radians(config.aolp_deg)))

    frames = np.empty((n, spec.height, spec.width), dtype=np.uint16)
    truth_dolp = np.empty((n, spec.height, spec.width), dtype=np.float32)
    times = np.arange(n, dtype=np.float64) / config.frame_rate_hz
    mask = spec.label_mask()
    clipped = 0
    for idx in range(n):
        truth = render_truth(spec, config, float(times[idx]), materials)
        truth_dolp[idx] = truth.dolp.astype(np.float32)
        analog = 0.5 * scale * truth.s0 * (1.0 + truth.dolp * modulation)
        if config.noise_sigma > 0:
            rng = np.random.default_rng([config.seed, idx])
            analog = analog + rng.normal(0.0, config.noise_sigma, analog.shape)
        dn = np.rint(analog)
        clipped += int(np.count_nonzero(dn > U16_MAX))
        frames[idx] = np.clip(dn, 0, U16_MAX).astype(np.uint16)

    total = n * spec.height * spec.width
    if clipped > 0.01 * total:
        warnings.warn(
            f"{clipped}/{total} samples clipped at the 16-bit rail",
            SaturationWarning, stacklevel=2)

    stack = MosaicStack(frames=frames, frame_rate_hz=config.frame_rate_hz,
                        layout=config.layout,
                        meta={"seed": config.seed,
                              "observation_angle_deg": config.observation_angle_deg,
                              "noise_sigma": config.noise_sigma,
                              "aolp_deg": config.aolp_deg})
    bundle = TruthBundle(dolp=truth_dolp, mask=mask, labels=spec.labels(),
                         times_s=times)
    return stack, bundle
