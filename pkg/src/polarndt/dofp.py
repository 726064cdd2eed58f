"""Division-of-focal-plane mosaic processing.

A DoFP sensor samples four linear-polarizer orientations (0/45/90/135
degrees) in 2x2 superpixels.  This module turns raw 16-bit mosaic frames
into four full-resolution polarization channels (bilinear or bicubic
interpolation on each channel's sampling lattice), Stokes components, DoLP
images, and guided-filtered DoLP images using the channel mean as the
guidance image (its noise std is half the per-channel noise std).

Superpixel layouts are given as strings like ``"135,0/90,45"``: rows
separated by ``/``, columns by ``,``, anchored at the even (top-left)
pixel.  The default realizes a clockwise 135-0-45-90 cycle starting at the
top-left corner.  All border handling is edge replication, and 16-bit data
is mapped to [0, 1] by dividing by 65535 (no dark/gain calibration).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

DEFAULT_LAYOUT = "135,0/90,45"
U16_MAX = 65535.0

POLAR_ANGLES = (0, 45, 90, 135)


class LayoutError(ValueError):
    """Bad superpixel layout string or mosaic dimensions."""


class DegenerateFrameError(ValueError):
    """Frame content makes the requested quantity meaningless (e.g. S0 == 0)."""


def parse_layout(layout: str) -> dict[int, tuple[int, int]]:
    """Map each polarizer angle to its (row, col) offset inside a superpixel."""
    rows = layout.strip().split("/")
    if len(rows) != 2 or any(len(r.split(",")) != 2 for r in rows):
        raise LayoutError(f"layout must be 'a,b/c,d', got {layout!r}")
    offsets: dict[int, tuple[int, int]] = {}
    for r, row in enumerate(rows):
        for c, cell in enumerate(row.split(",")):
            try:
                angle = int(cell)
            except ValueError:
                raise LayoutError(f"non-integer angle {cell!r} in layout {layout!r}")
            offsets[angle] = (r, c)
    if sorted(offsets) != sorted(POLAR_ANGLES):
        raise LayoutError(
            f"layout {layout!r} must contain each of {POLAR_ANGLES} exactly once")
    return offsets


def angle_map(layout: str, height: int, width: int) -> np.ndarray:
    """Per-pixel polarizer angle (degrees) for a mosaic of the given size."""
    offsets = parse_layout(layout)
    out = np.empty((height, width), dtype=np.int64)
    for angle, (dr, dc) in offsets.items():
        out[dr::2, dc::2] = angle
    return out


@dataclass(frozen=True)
class MosaicFrame:
    """One raw DoFP frame: row-major 16-bit intensities plus its layout."""

    data: np.ndarray
    layout: str = DEFAULT_LAYOUT

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise LayoutError(f"mosaic data must be 2-D, got shape {d.shape}")
        if d.shape[0] % 2 or d.shape[1] % 2:
            raise LayoutError(f"mosaic dimensions must be even, got {d.shape}")
        if d.dtype != np.uint16:
            raise LayoutError(f"mosaic data must be uint16, got {d.dtype}")
        parse_layout(self.layout)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class MosaicStack:
    """Time sequence of mosaic frames with acquisition metadata."""

    frames: np.ndarray  # (n_frames, height, width) uint16
    frame_rate_hz: float
    layout: str = DEFAULT_LAYOUT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = self.frames
        if f.ndim != 3:
            raise LayoutError(f"stack must be (n, h, w), got shape {f.shape}")
        if f.dtype != np.uint16:
            raise LayoutError(f"stack frames must be uint16, got {f.dtype}")
        if f.shape[1] % 2 or f.shape[2] % 2:
            raise LayoutError(f"frame dimensions must be even, got {f.shape[1:]}")
        if not (self.frame_rate_hz > 0):
            raise ValueError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        parse_layout(self.layout)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def frame(self, index: int) -> MosaicFrame:
        return MosaicFrame(self.frames[index], self.layout)


@dataclass(frozen=True)
class PolarChannels:
    """Four full-resolution polarization channels, values >= 0."""

    i0: np.ndarray
    i45: np.ndarray
    i90: np.ndarray
    i135: np.ndarray

    def __post_init__(self):
        shapes = {c.shape for c in self.as_tuple()}
        if len(shapes) != 1:
            raise ValueError(f"channel shapes differ: {shapes}")

    def as_tuple(self):
        return (self.i0, self.i45, self.i90, self.i135)

    def by_angle(self, angle: int) -> np.ndarray:
        return {0: self.i0, 45: self.i45, 90: self.i90, 135: self.i135}[angle]


@dataclass(frozen=True)
class StokesFrame:
    """Per-pixel linear Stokes components (S0 = half the channel sum)."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        if not (self.s0.shape == self.s1.shape == self.s2.shape):
            raise ValueError("Stokes component shapes differ")


@dataclass(frozen=True)
class DolpImage:
    """DoLP image in [0, 1]; ``filtered`` marks guided-filter output."""

    values: np.ndarray
    filtered: bool = False


def _interp_axis_linear(arr: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation along one axis at fractional sample coords (edge clamp)."""
    n = arr.shape[axis]
    i0 = np.floor(coords).astype(np.int64)
    frac = coords - i0
    i0c = np.clip(i0, 0, n - 1)
    i1c = np.clip(i0 + 1, 0, n - 1)
    a = np.take(arr, i0c, axis=axis)
    b = np.take(arr, i1c, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = len(coords)
    f = frac.reshape(shape)
    return a * (1.0 - f) + b * f


def _cubic_weights(frac: np.ndarray):
    """Cubic-convolution (Catmull-Rom, a = -0.5) weights for 4 taps."""
    a = -0.5
    t = frac

    def k(x):
        ax = np.abs(x)
        w = np.where(ax <= 1.0,
                     (a + 2.0) * ax ** 3 - (a + 3.0) * ax ** 2 + 1.0,
                     a * ax ** 3 - 5.0 * a * ax ** 2 + 8.0 * a * ax - 4.0 * a)
        return np.where(ax < 2.0, w, 0.0)

    return [k(t + 1.0), k(t), k(t - 1.0), k(t - 2.0)]


def _interp_axis_cubic(arr: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    i0 = np.floor(coords).astype(np.int64)
    frac = coords - i0
    weights = _cubic_weights(frac)
    shape = [1] * arr.ndim
    shape[axis] = len(coords)
    out = None
    for tap, w in zip((-1, 0, 1, 2), weights):
        idx = np.clip(i0 + tap, 0, n - 1)
        term = np.take(arr, idx, axis=axis) * w.reshape(shape)
        out = term if out is None else out + term
    return out


def _upsample_channel(samples: np.ndarray, offset: tuple[int, int],
                      out_shape: tuple[int, int], method: str) -> np.ndarray:
    """Interpolate a channel's quarter-resolution lattice to full resolution.

    The lattice site (i, j) lives at full-resolution pixel
    (2*i + offset[0], 2*j + offset[1]).
    """
    interp = _interp_axis_linear if method == "bilinear" else _interp_axis_cubic
    rows = (np.arange(out_shape[0]) - offset[0]) / 2.0
    cols = (np.arange(out_shape[1]) - offset[1]) / 2.0
    out = interp(samples, rows, axis=0)
    out = interp(out, cols, axis=1)
    return out


def demosaic(frame: MosaicFrame, method: str = "bilinear") -> PolarChannels:
    """Split a mosaic into four full-resolution channels in [0, 1].

    Each channel is gathered from its superpixel sites, scaled by 1/65535,
    and interpolated back to full resolution on its own sampling lattice.
    Borders use edge-replicated neighborhoods; bicubic output is clipped
    at 0 to keep channels non-negative.
    """
    if method not in ("bilinear", "bicubic"):
        raise ValueError(f"unknown interpolation method {method!r}")
    offsets = parse_layout(frame.layout)
    scaled = frame.data.astype(np.float64) / U16_MAX
    shape = scaled.shape
    channels = {}
    for angle, (dr, dc) in offsets.items():
        samples = scaled[dr::2, dc::2]
        up = _upsample_channel(samples, (dr, dc), shape, method)
        channels[angle] = np.clip(up, 0.0, None) if method == "bicubic" else up
    return PolarChannels(i0=channels[0], i45=channels[45],
                         i90=channels[90], i135=channels[135])


def compute_stokes(channels: PolarChannels) -> StokesFrame:
    """Stokes estimation from the four analyzer intensities."""
    i0, i45, i90, i135 = channels.as_tuple()
    return StokesFrame(
        s0=(i0 + i45 + i90 + i135) / 2.0,
        s1=i0 - i90,
        s2=i45 - i135,
    )


def compute_dolp(stokes: StokesFrame) -> DolpImage:
    """DoLP = sqrt(S1^2 + S2^2) / S0 with a relative S0 floor, clamped to [0, 1]."""
    s0_max = float(np.max(stokes.s0))
    if s0_max <= 0.0:
        raise DegenerateFrameError("S0 is non-positive everywhere")
    floor = 1e-6 * s0_max
    dolp = np.hypot(stokes.s1, stokes.s2) / np.maximum(stokes.s0, floor)
    return DolpImage(values=np.clip(dolp, 0.0, 1.0), filtered=False)


def guidance_image(channels: PolarChannels) -> np.ndarray:
    """Mean of the four channels; iid channel noise std sigma becomes sigma/2."""
    i0, i45, i90, i135 = channels.as_tuple()
    return (i0 + i45 + i90 + i135) / 4.0


def guided_filter(image, guide: np.ndarray, radius: int = 4,
                  eps: float | None = None) -> DolpImage:
    """Edge-preserving smoothing of a DoLP image against a guidance image.

    Local linear model per box window (size ``2*radius + 1``):
    ``a = cov(guide, input) / (var(guide) + eps)``,
    ``b = mean(input) - a * mean(guide)``, output ``mean(a) * guide +
    mean(b)``.  ``eps`` defaults to ``(0.01 * dynamic range of guide)^2``.
    Output is clamped to [0, 1].
    """
    values = image.values if isinstance(image, DolpImage) else np.asarray(image)
    if values.shape != guide.shape:
        raise ValueError(
            f"input shape {values.shape} != guide shape {guide.shape}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if eps is None:
        span = float(np.max(guide) - np.min(guide))
        eps = (0.01 * span) ** 2 if span > 0 else 1e-8
    if not (eps > 0):
        raise ValueError(f"eps must be > 0, got {eps}")

    size = 2 * radius + 1

    def box(a):
        return uniform_filter(a, size=size, mode="nearest")

    guide = guide.astype(np.float64)
    values = values.astype(np.float64)
    mean_g = box(guide)
    mean_v = box(values)
    cov_gv = box(guide * values) - mean_g * mean_v
    var_g = box(guide * guide) - mean_g * mean_g
    a = cov_gv / (var_g + eps)
    b = mean_v - a * mean_g
    out = box(a) * guide + box(b)
    return DolpImage(values=np.clip(out, 0.0, 1.0), filtered=True)


def process_frame(mosaic: np.ndarray, layout: str = DEFAULT_LAYOUT,
                  method: str = "bilinear", guided: bool = False,
                  radius: int = 4, eps: float | None = None):
    """Full per-frame chain: demosaic -> Stokes -> DoLP (optionally guided).

    Returns ``(dolp, s0)`` as float64 arrays.
    """
    channels = demosaic(MosaicFrame(mosaic, layout), method=method)
    stokes = compute_stokes(channels)
    dolp = compute_dolp(stokes)
    if guided:
        dolp = guided_filter(dolp, guidance_image(channels), radius=radius, eps=eps)
    return dolp.values, stokes.s0


def process_stack(stack: MosaicStack, method: str = "bilinear",
                  guided: bool = False, radius: int = 4,
                  eps: float | None = None, threads: int = 1):
    """Process every frame of a mosaic stack.

    Frames are independent, so the work may run on a thread pool; results
    are written by frame index and are identical to the serial order.
    Returns ``(dolp_frames, s0_frames)`` as float32 arrays of shape
    (n_frames, height, width).
    """
    n, h, w = stack.frames.shape
    dolp_out = np.empty((n, h, w), dtype=np.float32)
    s0_out = np.empty((n, h, w), dtype=np.float32)

    def run(i: int) -> None:
        dolp, s0 = process_frame(stack.frames[i], stack.layout, method=method,
                                 guided=guided, radius=radius, eps=eps)
        dolp_out[i] = dolp.astype(np.float32)
        s0_out[i] = s0.astype(np.float32)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))
    else:
        for i in range(n):
            run(i)
    return dolp_out, s0_out
