"""Command line interface.

Subcommands compose the library into the standard workflows:

* ``simulate`` -- radiometry sweeps to CSV (plus a curve figure);
* ``synth``    -- render a synthetic mosaic bundle with ground truth;
* ``process``  -- mosaic bundle to DoLP (or intensity) stack bundle;
* ``detect``   -- stack bundle to detection maps (FFT phase / PCA);
* ``fit``      -- recover alpha from an angle/DoLP CSV;
* ``metrics``  -- CNR / separability / sharpness report for maps vs a mask.

Failures exit non-zero with a single ``error: <Type>: <message>`` line on
stderr.  All delimited outputs are written atomically and use 9 significant
digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import detection, dofp, evaluation, radiometry, stackio, synthscene
from .detection import DetectionConfig, DetectionMap, ImageStack
from .dofp import MosaicStack


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


def _parse_angles(text: str) -> list[float]:
    """Parse 'start:stop:step' in degrees, inclusive of stop when it divides."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"angles must be 'start:stop:step', got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"bad angle range {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def _parse_alphas(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


_PSI_MAX = np.nextafter(math.pi / 2, 0.0)


def _psi_rad(angle_deg: float) -> float:
    # angles at the closed 90 deg end are evaluated just inside the domain
    return min(math.radians(angle_deg), _PSI_MAX)


def _load_materials(path: str | None):
    if path is None:
        return radiometry.MATERIALS
    return radiometry.load_material_table(path)


def cmd_simulate(args) -> int:
    table = _load_materials(args.materials)
    material = radiometry.get_material(args.material, table)
    subsurface = None
    if args.model == "mixture":
        if not args.subsurface:
            raise ValueError("--model mixture requires --subsurface")
        subsurface = radiometry.get_material(args.subsurface, table)
    alphas = _parse_alphas(args.alpha)
    angles = _parse_angles(args.angles)
    quad = radiometry.QuadratureConfig() if args.model == "full" else None

    rows = []
    for alpha in alphas:
        for deg in angles:
            psi = _psi_rad(deg)
            if args.model == "full":
                value = radiometry.dolp_full(material, 1.0, alpha, psi, quad)
            else:
                scene = radiometry.RadiometricScene(alpha=alpha, psi_i=psi)
                value = radiometry.dolp_simplified(material, scene)
                if args.model == "mixture":
                    sub = radiometry.dolp_simplified(subsurface, scene)
                    value = radiometry.dolp_mixture(value, sub, alpha)
            rows.append((deg, alpha, value))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["psi_i_deg", "alpha", "dolp"])
    for deg, alpha, value in rows:
        writer.writerow([_fmt(deg), _fmt(alpha), _fmt(value)])
    if args.out:
        out = Path(args.out)
        stackio.atomic_write_text(out, buf.getvalue())
        print(out)
        if not args.no_figure:
            from . import plotting
            fig_rows = [(material.name, alpha, deg, value)
                        for deg, alpha, value in rows]
            print(plotting.save_sweep_figure(fig_rows, out.with_suffix(".png")))
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_synth(args) -> int:
    if args.scene:
        spec, config = stackio.read_scene_file(args.scene)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.frames is not None:
            overrides["frames"] = args.frames
        if args.noise is not None:
            overrides["noise_sigma"] = args.noise
        if args.angle is not None:
            overrides["observation_angle_deg"] = args.angle
        if overrides:
            config = synthscene.SynthConfig(
                seed=overrides.get("seed", config.seed),
                n_frames=overrides.get("frames", config.n_frames),
                frame_rate_hz=config.frame_rate_hz,
                observation_angle_deg=overrides.get(
                    "observation_angle_deg", config.observation_angle_deg),
                environment_intensity=config.environment_intensity,
                noise_sigma=overrides.get("noise_sigma", config.noise_sigma),
                aolp_deg=config.aolp_deg, layout=config.layout)
    else:
        if args.seed is None:
            raise ValueError("--seed is required when no --scene file is given")
        spec = synthscene.default_specimen()
        config = synthscene.SynthConfig(
            seed=args.seed,
            n_frames=args.frames if args.frames is not None else 80,
            observation_angle_deg=args.angle if args.angle is not None else 70.0,
            noise_sigma=args.noise if args.noise is not None else 0.0)
    stack, truth = synthscene.render_mosaic_sequence(spec, config)
    manifest = stackio.write_stack(stack, args.out, truth=truth)
    print(manifest)
    return 0


def cmd_process(args) -> int:
    stack = stackio.read_stack(args.input)
    if not isinstance(stack, MosaicStack):
        raise ValueError(f"{args.input}: expected a mosaic bundle")
    dolp_frames, s0_frames = dofp.process_stack(
        stack, method=args.method, guided=args.guided, radius=args.radius,
        eps=args.eps, threads=args.threads)
    frames = dolp_frames if args.output_kind == "dolp" else s0_frames
    out_stack = ImageStack(frames=frames, frame_rate_hz=stack.frame_rate_hz,
                           origin=args.output_kind, meta=dict(stack.meta))
    manifest = stackio.write_stack(out_stack, args.out)
    print(manifest)
    return 0


def _parse_window(text: str | None):
    if text is None:
        return None
    a, b = text.split(":")
    return (int(a), int(b))


def cmd_detect(args) -> int:
    stack = stackio.read_stack(args.input)
    if not isinstance(stack, ImageStack):
        raise ValueError(f"{args.input}: expected a float stack bundle "
                         "(run 'process' first)")
    window = _parse_window(args.window)
    if window is not None:
        stack = detection.truncate_window(stack, *window)
    bins = tuple(int(b) for b in args.bins.split(",")) if args.bins else None

    if args.method == "fft":
        use_bins = bins if bins is not None else detection.default_bins(
            stack.n_frames, stack.frame_rate_hz)
        maps = []
        for k in use_bins:
            res = detection.fft_phase(stack, k)
            meta = {"origin": stack.origin, "method": "fft_phase", "k": int(k),
                    "frequency_hz": res.frequency_hz,
                    "window": list(stack.window) if stack.window else None}
            for key in ("observation_angle_deg", "seed"):
                if key in stack.meta:
                    meta[key] = stack.meta[key]
            maps.append(DetectionMap(image=res.phase, meta=meta))
    elif args.method == "pca":
        result = detection.pca_components(stack, args.pcs)
        maps = []
        for j in range(args.pcs):
            meta = {"origin": stack.origin, "method": "pca", "component": j + 1,
                    "singular_value": float(result.singular_values[j]),
                    "window": list(stack.window) if stack.window else None}
            for key in ("observation_angle_deg", "seed"):
                if key in stack.meta:
                    meta[key] = stack.meta[key]
            maps.append(DetectionMap(image=result.components[j], meta=meta))
    else:  # report
        maps = detection.detection_report(
            stack, DetectionConfig(bins=bins, num_components=args.pcs))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, det in enumerate(maps):
        method = det.meta.get("method", "map")
        if method == "fft_phase":
            tag = f"fft_k{det.meta['k']:03d}"
        elif method == "pca":
            tag = f"pca_pc{det.meta['component']}"
        else:
            tag = method
        path = out_dir / f"map_{i:02d}_{tag}.map"
        stackio.write_map(det, path)
        written.append(path)
        print(path)
    if not args.no_figure and maps:
        from . import plotting
        print(plotting.save_maps_figure(maps, out_dir / "maps.png"))
    return 0


def cmd_fit(args) -> int:
    table = _load_materials(args.materials)
    material = radiometry.get_material(args.material, table)
    subsurface = (radiometry.get_material(args.subsurface, table)
                  if args.subsurface else None)
    samples = []
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                not {"psi_i_deg", "dolp"} <= set(reader.fieldnames):
            raise ValueError(
                f"{args.input}: need CSV columns psi_i_deg, dolp")
        for row in reader:
            samples.append((math.radians(float(row["psi_i_deg"])),
                            float(row["dolp"])))
    result = radiometry.fit_dolp_curve(
        samples, material, model=args.model, subsurface=subsurface,
        max_residual=args.max_residual)
    report = {
        "model": result.model,
        "material": material.name,
        "subsurface": subsurface.name if subsurface else None,
        "alpha": float(_fmt(result.alpha)),
        "residual_norm": float(_fmt(result.residual_norm)),
        "weight_surface": float(_fmt(result.weight_surface)),
        "weight_subsurface": float(_fmt(result.weight_subsurface)),
        "n_samples": result.n_samples,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        stackio.atomic_write_text(Path(args.out), text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_metrics(args) -> int:
    mask_map = stackio.read_map(args.mask)
    mask = mask_map.image.astype(np.int64)
    label_names = {int(k): v for k, v in
                   mask_map.meta.get("labels", {}).items()}

    def name_of(label: int) -> str:
        return label_names.get(label, str(label))

    out_rows = []
    fig_rows = []
    for map_path in args.maps:
        det = stackio.read_map(map_path)
        map_id = Path(map_path).stem
        method = det.meta.get("method", "")
        angle = det.meta.get("observation_angle_deg", "")
        sharpness = evaluation.edge_sharpness(det.image, mask)
        labels = [int(v) for v in np.unique(mask) if v != 0]
        for label in labels:
            value = evaluation.cnr(det.image, mask, label)
            pair = f"{name_of(label)}|{name_of(0)}"
            out_rows.append((map_id, method, angle, name_of(label), name_of(0),
                             value, sharpness))
            fig_rows.append((map_id, pair, value))
        matrix, order = evaluation.separability(det.image, mask, labels)
        for i in range(len(order)):
            for j in range(i + 1, len(order)):
                pair = f"{name_of(order[i])}|{name_of(order[j])}"
                out_rows.append((map_id, method, angle, name_of(order[i]),
                                 name_of(order[j]), matrix[i, j], sharpness))
                fig_rows.append((map_id, pair, matrix[i, j]))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["map_id", "method", "angle_deg", "label_a", "label_b",
                     "cnr", "sharpness"])
    for map_id, method, angle, la, lb, value, sharp in out_rows:
        writer.writerow([map_id, method,
                         _fmt(angle) if angle != "" else "",
                         la, lb, _fmt(value), _fmt(sharp)])
    if args.out:
        out = Path(args.out)
        stackio.atomic_write_text(out, buf.getvalue())
        print(out)
        if not args.no_figure:
            from . import plotting
            print(plotting.save_metrics_figure(fig_rows, out.with_suffix(".png")))
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarndt",
        description="Polarimetric infrared NDT toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="radiometry sweeps to CSV + figure")
    p.add_argument("--material", required=True)
    p.add_argument("--alpha", required=True,
                   help="comma-separated alpha values, e.g. 0.2,0.5,0.8")
    p.add_argument("--angles", default="0:90:1",
                   help="start:stop:step in degrees (90 evaluated just inside)")
    p.add_argument("--model", choices=("simplified", "full", "mixture"),
                   default="simplified")
    p.add_argument("--subsurface", help="subsurface material for --model mixture")
    p.add_argument("--materials", help="plain-text material table override")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="render a synthetic mosaic bundle")
    p.add_argument("--scene", help="scene JSON (specimen + config)")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--noise", type=float, help="noise std in digital numbers")
    p.add_argument("--angle", type=float, help="observation angle in degrees")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("process", help="mosaic bundle to float stack bundle")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("bilinear", "bicubic"),
                   default="bilinear")
    p.add_argument("--guided", action="store_true",
                   help="guided-filter the DoLP images")
    p.add_argument("--radius", type=int, default=4)
    p.add_argument("--eps", type=float)
    p.add_argument("--output-kind", choices=("dolp", "intensity"),
                   default="dolp")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("detect", help="stack bundle to detection maps")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("fft", "pca", "report"),
                   default="report")
    p.add_argument("--bins", help="comma-separated DFT bins, e.g. 1,11,21")
    p.add_argument("--pcs", type=int, default=2)
    p.add_argument("--window", help="frame window start:end")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("fit", help="fit alpha to an angle/DoLP CSV")
    p.add_argument("--input", required=True,
                   help="CSV with columns psi_i_deg, dolp")
    p.add_argument("--material", required=True)
    p.add_argument("--model", choices=("simplified", "mixture"),
                   default="simplified")
    p.add_argument("--subsurface")
    p.add_argument("--max-residual", type=float)
    p.add_argument("--materials")
    p.add_argument("--out", help="JSON report path (stdout if omitted)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("metrics", help="region metrics for maps vs a mask")
    p.add_argument("--maps", nargs="+", required=True)
    p.add_argument("--mask", required=True, help="label-mask map file")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # single-line machine-parseable failure
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
