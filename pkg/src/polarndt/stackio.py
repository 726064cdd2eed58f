"""File formats and bundle I/O.

Containers are deliberately plain so any language can read them:

* mosaic frames: headerless little-endian uint16, row-major, byte length
  ``width * height * 2`` (dimensions live in the manifest);
* float stacks (DoLP / intensity): headerless little-endian float32;
* detection maps: 8-byte magic ``PNDTMAP1`` + uint32 width + uint32 height
  (little-endian) + row-major float32 payload, with an 8-bit PGM preview
  (min-max normalized; degenerate maps render mid-gray 128) and a JSON
  provenance sidecar;
* manifests, scene files, sidecars: JSON.

Every write goes to a temp file in the target directory followed by an
atomic rename, and bundle manifests are written last, so an interrupted
write never leaves a readable-but-incomplete bundle behind.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .detection import DetectionMap, ImageStack
from .dofp import DEFAULT_LAYOUT, MosaicStack, parse_layout
from .synthscene import DefectRegion, SpecimenSpec, SynthConfig, TruthBundle

MAP_MAGIC = b"PNDTMAP1"

MANIFEST_NAME = "stack.json"
TRUTH_MANIFEST_NAME = "truth.json"


class SchemaError(ValueError):
    """Manifest or scene file violates the expected schema."""


class MissingFrameError(FileNotFoundError):
    """A frame file referenced by a manifest does not exist."""


class DimensionMismatchError(ValueError):
    """A frame file's byte length disagrees with the declared dimensions."""


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_json(path: Path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n")
                       .encode("utf-8"))


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise SchemaError(f"{context}: missing field {key!r}")
    return obj[key]


@dataclass(frozen=True)
class StackManifest:
    """Declarative description of a frame bundle."""

    width: int
    height: int
    frame_count: int
    frame_rate_hz: float
    bit_depth: int  # 16 (mosaic uint16) or 32 (float32)
    layout: str
    origin: str  # "mosaic" | "intensity" | "dolp"
    frames: tuple[str, ...]
    truth: str | None = None
    created: dict | None = None

    def __post_init__(self):
        if len(self.frames) != self.frame_count:
            raise SchemaError(
                f"manifest declares {self.frame_count} frames but lists "
                f"{len(self.frames)}")
        if self.bit_depth not in (16, 32):
            raise SchemaError(f"unsupported bit_depth {self.bit_depth}")
        if self.origin not in ("mosaic", "intensity", "dolp"):
            raise SchemaError(f"unsupported origin {self.origin!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["frames"] = list(self.frames)
        return d

    @classmethod
    def from_json(cls, obj: dict, context: str = "manifest") -> "StackManifest":
        kwargs = {}
        for key in ("width", "height", "frame_count", "frame_rate_hz",
                    "bit_depth", "layout", "origin", "frames"):
            kwargs[key] = _require(obj, key, context)
        kwargs["frames"] = tuple(kwargs["frames"])
        kwargs["truth"] = obj.get("truth")
        kwargs["created"] = obj.get("created")
        return cls(**kwargs)


def _frame_dtype(bit_depth: int):
    return np.dtype("<u2") if bit_depth == 16 else np.dtype("<f4")


def write_stack(stack, out_dir, truth: TruthBundle | None = None,
                extra_created: dict | None = None) -> Path:
    """Write a MosaicStack or ImageStack bundle; returns the manifest path.

    Frame files land first (each atomically), the truth bundle next, the
    manifest last.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(stack, MosaicStack):
        origin, bit_depth, layout = "mosaic", 16, stack.layout
        frames = stack.frames.astype("<u2")
        meta = dict(stack.meta)
    elif isinstance(stack, ImageStack):
        origin, bit_depth, layout = stack.origin, 32, DEFAULT_LAYOUT
        frames = stack.frames.astype("<f4")
        meta = dict(stack.meta)
    else:
        raise TypeError(f"cannot write stack of type {type(stack).__name__}")

    ext = "u16" if bit_depth == 16 else "f32"
    names = []
    for i in range(frames.shape[0]):
        name = f"frame_{i:06d}.{ext}"
        atomic_write_bytes(out_dir / name, frames[i].tobytes())
        names.append(name)

    truth_name = None
    if truth is not None:
        truth_name = "truth"
        write_truth_bundle(truth, out_dir / truth_name)

    created = {"tool_version": __version__}
    created.update(meta)
    if extra_created:
        created.update(extra_created)
    manifest = StackManifest(
        width=int(frames.shape[2]), height=int(frames.shape[1]),
        frame_count=int(frames.shape[0]),
        frame_rate_hz=float(stack.frame_rate_hz), bit_depth=bit_depth,
        layout=layout, origin=origin, frames=tuple(names),
        truth=truth_name, created=created)
    path = out_dir / MANIFEST_NAME
    atomic_write_json(path, manifest.to_json())
    return path


def read_stack(manifest_path):
    """Load and validate a bundle; returns MosaicStack or ImageStack."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    try:
        obj = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFrameError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{manifest_path}: invalid JSON ({exc})") from None
    manifest = StackManifest.from_json(obj, context=str(manifest_path))

    dtype = _frame_dtype(manifest.bit_depth)
    expected = manifest.width * manifest.height * dtype.itemsize
    frames = np.empty((manifest.frame_count, manifest.height, manifest.width),
                      dtype=dtype)
    base = manifest_path.parent
    for i, name in enumerate(manifest.frames):
        fp = base / name
        if not fp.exists():
            raise MissingFrameError(f"frame file missing: {fp}")
        payload = fp.read_bytes()
        if len(payload) != expected:
            raise DimensionMismatchError(
                f"{fp}: {len(payload)} bytes, expected {expected} for "
                f"{manifest.width}x{manifest.height} at {manifest.bit_depth}-bit")
        frames[i] = np.frombuffer(payload, dtype=dtype).reshape(
            manifest.height, manifest.width)

    meta = dict(manifest.created or {})
    meta.pop("tool_version", None)
    if manifest.origin == "mosaic":
        return MosaicStack(frames=frames.astype(np.uint16),
                           frame_rate_hz=manifest.frame_rate_hz,
                           layout=manifest.layout, meta=meta)
    return ImageStack(frames=frames.astype(np.float32),
                      frame_rate_hz=manifest.frame_rate_hz,
                      origin=manifest.origin, meta=meta)


def manifest_of(bundle_dir) -> StackManifest:
    path = Path(bundle_dir)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return StackManifest.from_json(
        json.loads(path.read_text(encoding="utf-8")), context=str(path))


# ---------------------------------------------------------------------------
# detection maps

def preview_u8(arr: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max normalized 8-bit preview; constant maps become mid-gray 128."""
    lo = float(np.min(arr))
    hi = float(np.max(arr))
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return np.full(arr.shape, 128, dtype=np.uint8), lo, hi
    scaled = np.rint((arr - lo) / (hi - lo) * 255.0)
    return scaled.astype(np.uint8), lo, hi


def _pgm_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def write_map(det_map: DetectionMap, path) -> dict[str, Path]:
    """Write one detection map: raw float container, PGM preview, JSON sidecar.

    ``path`` names the raw map file; the preview and sidecar take the same
    stem with ``.pgm`` and ``.json`` suffixes.  The payload is cast to
    float32.  Returns the written paths keyed by kind.
    """
    path = Path(path)
    img = np.ascontiguousarray(det_map.image, dtype="<f4")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{path}: map contains non-finite values")
    h, w = img.shape
    header = MAP_MAGIC + np.array([w, h], dtype="<u4").tobytes()
    atomic_write_bytes(path, header + img.tobytes())

    preview, lo, hi = preview_u8(img)
    pgm_path = path.with_suffix(".pgm")
    atomic_write_bytes(pgm_path, _pgm_bytes(preview))

    sidecar = dict(det_map.meta)
    sidecar["normalization"] = {"min": lo, "max": hi}
    sidecar["width"] = w
    sidecar["height"] = h
    json_path = path.with_suffix(".json")
    atomic_write_json(json_path, sidecar)
    return {"map": path, "preview": pgm_path, "sidecar": json_path}


def read_map(path) -> DetectionMap:
    """Read a raw float map and its sidecar (if present)."""
    path = Path(path)
    payload = path.read_bytes()
    if len(payload) < 16 or payload[:8] != MAP_MAGIC:
        raise SchemaError(f"{path}: not a float map container")
    w, h = np.frombuffer(payload[8:16], dtype="<u4")
    expected = 16 + int(w) * int(h) * 4
    if len(payload) != expected:
        raise DimensionMismatchError(
            f"{path}: {len(payload)} bytes, expected {expected} for {w}x{h}")
    img = np.frombuffer(payload[16:], dtype="<f4").reshape(int(h), int(w))
    sidecar_path = path.with_suffix(".json")
    meta = {}
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    return DetectionMap(image=img.copy(), meta=meta)


# ---------------------------------------------------------------------------
# truth bundles

def write_truth_bundle(truth: TruthBundle, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(truth.dolp.shape[0]):
        name = f"dolp_{i:06d}.map"
        write_map(DetectionMap(image=truth.dolp[i],
                               meta={"method": "truth_dolp", "frame": i}),
                  out_dir / name)
        names.append(name)
    write_map(DetectionMap(image=truth.mask.astype(np.float32),
                           meta={"method": "truth_mask",
                                 "labels": {str(k): v for k, v in
                                            truth.labels.items()}}),
              out_dir / "mask.map")
    manifest = {
        "dolp_frames": names,
        "mask": "mask.map",
        "labels": {str(k): v for k, v in truth.labels.items()},
        "times_s": [float(t) for t in truth.times_s],
    }
    path = out_dir / TRUTH_MANIFEST_NAME
    atomic_write_json(path, manifest)
    return path


def read_truth_bundle(bundle_dir) -> TruthBundle:
    bundle_dir = Path(bundle_dir)
    path = bundle_dir / TRUTH_MANIFEST_NAME if bundle_dir.is_dir() else bundle_dir
    base = path.parent
    obj = json.loads(path.read_text(encoding="utf-8"))
    names = _require(obj, "dolp_frames", str(path))
    dolp = np.stack([read_map(base / n).image for n in names])
    mask = read_map(base / _require(obj, "mask", str(path))).image.astype(np.int64)
    labels = {int(k): v for k, v in _require(obj, "labels", str(path)).items()}
    times = np.asarray(obj.get("times_s", []), dtype=np.float64)
    return TruthBundle(dolp=dolp, mask=mask, labels=labels, times_s=times)


# ---------------------------------------------------------------------------
# scene files (specimen + synthesis config in one JSON document)

def read_scene_file(path) -> tuple[SpecimenSpec, SynthConfig]:
    """Parse a scene file: specimen geometry plus acquisition settings."""
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    ctx = str(path)
    regions = []
    for i, r in enumerate(_require(obj, "regions", ctx)):
        rctx = f"{ctx}: regions[{i}]"
        regions.append(DefectRegion(
            x=_require(r, "x", rctx), y=_require(r, "y", rctx),
            width=_require(r, "width", rctx), height=_require(r, "height", rctx),
            material=_require(r, "material", rctx),
            tau_s=_require(r, "tau_s", rctx),
            delta_i=_require(r, "delta_i", rctx)))
    background = obj.get("background", {})
    spec = SpecimenSpec(
        width=_require(obj, "width", ctx), height=_require(obj, "height", ctx),
        surface_material=_require(obj, "surface_material", ctx),
        regions=tuple(regions),
        background_tau_s=background.get("tau_s", 1.0),
        background_delta_i=background.get("delta_i", 1.0))
    config = SynthConfig(
        seed=_require(obj, "seed", ctx),
        n_frames=obj.get("frames", 80),
        frame_rate_hz=obj.get("frame_rate_hz", 40.0),
        observation_angle_deg=obj.get("observation_angle_deg", 70.0),
        environment_intensity=obj.get("environment_intensity", 1.0),
        noise_sigma=obj.get("noise_sigma", 0.0),
        aolp_deg=obj.get("aolp_deg", 22.5),
        layout=obj.get("layout", DEFAULT_LAYOUT))
    parse_layout(config.layout)
    return spec, config


def write_scene_file(spec: SpecimenSpec, config: SynthConfig, path) -> Path:
    path = Path(path)
    obj = {
        "width": spec.width, "height": spec.height,
        "surface_material": spec.surface_material,
        "background": {"tau_s": spec.background_tau_s,
                       "delta_i": spec.background_delta_i},
        "regions": [{"x": r.x, "y": r.y, "width": r.width, "height": r.height,
                     "material": r.material, "tau_s": r.tau_s,
                     "delta_i": r.delta_i} for r in spec.regions],
        "seed": config.seed, "frames": config.n_frames,
        "frame_rate_hz": config.frame_rate_hz,
        "observation_angle_deg": config.observation_angle_deg,
        "environment_intensity": config.environment_intensity,
        "noise_sigma": config.noise_sigma, "aolp_deg": config.aolp_deg,
        "layout": config.layout,
    }
    atomic_write_json(path, obj)
    return path
