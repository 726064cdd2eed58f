"""Defect-detection transforms for image stacks.

Works on time sequences of intensity or DoLP images recorded after pulsed
thermal excitation.  Two detection families:

* pulsed-phase analysis: per-pixel DFT (with 1/N normalization) at a chosen
  frequency bin, yielding amplitude and phase images;
* principal-component analysis: per-pixel temporal standardization followed
  by an SVD of the (pixels x frames) matrix, yielding spatial component
  images (left singular vectors) and their singular values.

``detection_report`` assembles the standard presentation set: first frame,
three phase images at bins tracking 0.229 / 2.514 / 4.800 Hz, and the
first two principal components.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# Reference analysis frequencies (Hz): bins 1, 11, 21 of a 175-frame
# sequence recorded at 40 Hz.
DEFAULT_TARGET_HZ = (40.0 / 175.0, 11.0 * 40.0 / 175.0, 21.0 * 40.0 / 175.0)


class DegenerateStackError(ValueError):
    """Stack has no temporal variation anywhere; PCA is undefined."""


@dataclass(frozen=True)
class ImageStack:
    """Float image sequence with acquisition metadata.

    ``origin`` records what the pixels mean ("intensity" or "dolp");
    ``window`` records the frame range retained by truncation, if any.
    """

    frames: np.ndarray  # (n_frames, height, width) float32
    frame_rate_hz: float
    origin: str = "intensity"
    window: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = self.frames
        if f.ndim != 3:
            raise ValueError(f"stack must be (n, h, w), got shape {f.shape}")
        if f.shape[0] < 2:
            raise ValueError(f"stack needs >= 2 frames, got {f.shape[0]}")
        if f.dtype != np.float32:
            object.__setattr__(self, "frames", f.astype(np.float32))
        if not (self.frame_rate_hz > 0):
            raise ValueError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        if self.origin not in ("intensity", "dolp"):
            raise ValueError(f"origin must be 'intensity' or 'dolp', got {self.origin!r}")

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.frames.shape[1]), int(self.frames.shape[2]))


@dataclass(frozen=True)
class PhaseResult:
    """Amplitude/phase images of one frequency bin."""

    amplitude: np.ndarray
    phase: np.ndarray  # in (-pi, pi]; 0 where the amplitude vanishes
    k: int
    frequency_hz: float


@dataclass(frozen=True)
class PcaResult:
    """Leading spatial components of a standardized stack.

    ``components[i]`` is the i-th left singular vector reshaped to the
    image grid (unit Euclidean norm, largest-magnitude element positive);
    ``loadings`` holds the matching temporal right singular vectors.
    ``mu``/``sigma`` are the per-pixel standardization fields.
    """

    components: np.ndarray  # (n_components, height, width)
    singular_values: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    loadings: np.ndarray  # (n_frames, n_components)


@dataclass(frozen=True)
class DetectionMap:
    """One detection image plus provenance metadata."""

    image: np.ndarray
    meta: dict


@dataclass(frozen=True)
class DetectionConfig:
    """Options for ``detection_report``."""

    bins: tuple[int, ...] | None = None  # None -> track DEFAULT_TARGET_HZ
    num_components: int = 2
    window: tuple[int, int] | None = None


def truncate_window(stack: ImageStack, start_frame: int, end_frame: int) -> ImageStack:
    """Contiguous sub-stack [start_frame, end_frame); records the window."""
    n = stack.n_frames
    if not (0 <= start_frame < end_frame <= n):
        raise ValueError(
            f"window [{start_frame}, {end_frame}) invalid for {n}-frame stack")
    return replace(stack, frames=stack.frames[start_frame:end_frame],
                   window=(start_frame, end_frame))


def bin_frequency(k: int, n_frames: int, frame_rate_hz: float) -> float:
    """Physical frequency of DFT bin k: k * frame_rate / n_frames."""
    if not (0 <= k < n_frames):
        raise ValueError(f"bin {k} out of range for {n_frames} frames")
    return k * frame_rate_hz / n_frames


def default_bins(n_frames: int, frame_rate_hz: float,
                 targets: tuple[float, ...] = DEFAULT_TARGET_HZ) -> tuple[int, ...]:
    """Bins whose frequencies are nearest the reference analysis frequencies."""
    bins = []
    for f in targets:
        k = int(round(f * n_frames / frame_rate_hz))
        bins.append(min(max(k, 0), n_frames - 1))
    return tuple(bins)


def fft_phase(stack: ImageStack, k: int) -> PhaseResult:
    """Per-pixel DFT bin k with 1/N normalization.

    ``F(k) = (1/N) sum_n T(n) exp(-2 pi i k n / N)`` over each pixel's time
    series; amplitude is |F(k)| and phase is atan2(Im, Re) mapped into
    (-pi, pi].  Pixels whose amplitude is negligible against their k=0
    (mean) amplitude report phase 0 for deterministic display.
    """
    n = stack.n_frames
    if not (0 <= k < n):
        raise ValueError(f"bin {k} out of range for {n}-frame stack")
    series = stack.frames.astype(np.float64)
    spectrum = np.fft.fft(series, axis=0) / n
    coeff = spectrum[k]
    amplitude = np.abs(coeff)
    phase = np.arctan2(coeff.imag, coeff.real)
    phase = np.where(phase == -np.pi, np.pi, phase)
    mean_amp = np.abs(np.mean(series, axis=0))
    phase = np.where(amplitude <= 1e-12 * np.maximum(mean_amp, amplitude), 0.0, phase)
    return PhaseResult(amplitude=amplitude, phase=phase, k=k,
                       frequency_hz=bin_frequency(k, n, stack.frame_rate_hz))


def pca_components(stack: ImageStack, num_components: int) -> PcaResult:
    """Leading spatial modes of the per-pixel standardized stack.

    Each pixel row of the (pixels x frames) matrix is centered by its
    temporal mean and divided by its sample std (ddof=1); rows with
    negligible std are zeroed rather than divided.  The SVD runs directly
    on the standardized matrix, or through the frames x frames Gram matrix
    when there are many more pixels than frames (identical result).
    """
    n, h, w = stack.frames.shape
    p = h * w
    if not (1 <= num_components <= min(p, n)):
        raise ValueError(
            f"num_components must lie in [1, {min(p, n)}], got {num_components}")
    x = stack.frames.reshape(n, p).T.astype(np.float64)  # (pixels, frames)
    mu = x.mean(axis=1)
    sigma = x.std(axis=1, ddof=1)
    sigma_max = float(sigma.max())
    if sigma_max == 0.0:
        raise DegenerateStackError("every pixel time series is constant")
    live = sigma >= 1e-12 * sigma_max
    xs = np.zeros_like(x)
    xs[live] = (x[live] - mu[live, None]) / sigma[live, None]

    if p > 4 * n:
        gram = xs.T @ xs
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:num_components]
        svals = np.sqrt(np.clip(evals[order], 0.0, None))
        v = evecs[:, order]
        safe = np.where(svals > 0.0, svals, 1.0)
        u = (xs @ v) / safe
        u[:, svals == 0.0] = 0.0
    else:
        u_full, s_full, vt_full = np.linalg.svd(xs, full_matrices=False)
        u = u_full[:, :num_components]
        svals = s_full[:num_components]
        v = vt_full[:num_components].T

    # sign canonicalization: largest-magnitude element of each component positive
    for j in range(u.shape[1]):
        idx = int(np.argmax(np.abs(u[:, j])))
        if u[idx, j] < 0.0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]

    return PcaResult(components=u.T.reshape(num_components, h, w),
                     singular_values=svals,
                     mu=mu.reshape(h, w), sigma=sigma.reshape(h, w),
                     loadings=v)


def _base_meta(stack: ImageStack) -> dict:
    meta = {"origin": stack.origin,
            "window": list(stack.window) if stack.window else None}
    for key in ("observation_angle_deg", "seed"):
        if key in stack.meta:
            meta[key] = stack.meta[key]
    return meta


def detection_report(stack: ImageStack,
                     config: DetectionConfig | None = None) -> list[DetectionMap]:
    """Standard presentation set of detection maps.

    First frame, one phase map per configured bin (defaults track the
    reference frequencies for the stack's length), and the leading
    principal components.  Errors from the constituents propagate.
    """
    config = config or DetectionConfig()
    if config.window is not None:
        stack = truncate_window(stack, *config.window)
    bins = config.bins if config.bins is not None else default_bins(
        stack.n_frames, stack.frame_rate_hz)

    maps = [DetectionMap(image=stack.frames[0].astype(np.float64),
                         meta={**_base_meta(stack), "method": "first_frame",
                               "frame": 0})]
    for k in bins:
        res = fft_phase(stack, k)
        maps.append(DetectionMap(image=res.phase,
                                 meta={**_base_meta(stack), "method": "fft_phase",
                                       "k": int(k),
                                       "frequency_hz": res.frequency_hz}))
    pca = pca_components(stack, config.num_components)
    for j in range(config.num_components):
        maps.append(DetectionMap(image=pca.components[j],
                                 meta={**_base_meta(stack), "method": "pca",
                                       "component": j + 1,
                                       "singular_value": float(pca.singular_values[j])}))
    return maps


def parseval_mismatch(stack: ImageStack) -> float:
    """Max relative gap between sum_k |F(k)|^2 and (1/N) sum_n T(n)^2.

    Diagnostic for the 1/N-normalized transform; ~1e-15 for healthy data.
    """
    n = stack.n_frames
    series = stack.frames.astype(np.float64)
    spectrum = np.fft.fft(series, axis=0) / n
    lhs = np.sum(np.abs(spectrum) ** 2, axis=0)
    rhs = np.sum(series ** 2, axis=0) / n
    scale = np.maximum(np.abs(rhs), 1e-300)
    return float(np.max(np.abs(lhs - rhs) / scale))
