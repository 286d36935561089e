"""Directory-level evaluation, re-filtering and visualisation behind the CLI."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, IndexingMismatchError, UnknownFormatError
from .filtering import SWEEP_THRESHOLDS, FilterConfig, consistency_mask, valid_fraction_sweep
from .flowio import (
    flow_to_color,
    read_flow,
    read_mask,
    read_meta,
    read_triplet,
    robust_max_magnitude,
    sniff_format,
    write_mask,
    write_meta,
)
from .grid import Indexing, read_image, write_image
from .metrics import outlier_mask, psnr, ssim
from .synthesis import reindex_flow
from .warping import backward_warp_image

logger = logging.getLogger(__name__)

FLOW_SUFFIXES = (".flo", ".png", ".npy")
MASK_POLICIES = ("gt", "pred", "both", "all")


@dataclass
class FlowSample:
    data: np.ndarray
    valid: np.ndarray
    indexing: Indexing | None


def _load_flow_sample(path: Path) -> FlowSample:
    if path.is_dir():
        meta = read_meta(path / "meta.txt") if (path / "meta.txt").is_file() else {}
        indexing = Indexing(meta["indexing"]) if "indexing" in meta else None
        flow, _ = read_flow(path / "flow.flo")
        valid = read_mask(path / "mask.png") if (path / "mask.png").is_file() else np.ones(flow.shape, bool)
        return FlowSample(flow.data, valid, indexing)
    flow, valid = read_flow(path)
    return FlowSample(flow.data, valid, None)


def collect_samples(directory, kind="flow") -> dict:
    """Map sample name to path: sub-directories holding a triplet, else loose files by stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(directory)
    root = directory / "samples" if (directory / "samples").is_dir() else directory
    member = "flow.flo" if kind == "flow" else "frame_t1.png"
    found = {p.name: p for p in sorted(root.iterdir()) if p.is_dir() and (p / member).is_file()}
    if found:
        return found
    suffixes = FLOW_SUFFIXES if kind == "flow" else (".png", ".jpg", ".jpeg")
    return {p.stem: p for p in sorted(root.iterdir()) if p.is_file() and p.suffix.lower() in suffixes}


def _eval_mask(policy, pred: FlowSample, gt: FlowSample):
    if policy == "gt":
        return gt.valid
    if policy == "pred":
        return pred.valid
    if policy == "both":
        return gt.valid & pred.valid
    return np.ones(gt.valid.shape, bool)


def evaluate_flow_dirs(pred_dir, gt_dir, mask_policy: str) -> dict:
    """EPE / Fl-all per sample plus pixel-pooled aggregates.

    Samples missing from the prediction are listed and left out of the
    aggregate; a disagreement in indexing convention raises.
    """
    if mask_policy not in MASK_POLICIES:
        raise ValueError(f"mask policy must be one of {MASK_POLICIES}")
    preds = collect_samples(pred_dir, "flow")
    gts = collect_samples(gt_dir, "flow")
    per_sample = {}
    missing = []
    err_sum = 0.0
    outliers = 0
    pixels = 0
    for name, gt_path in gts.items():
        if name not in preds:
            missing.append(name)
            logger.warning("sample %s missing from predictions", name)
            continue
        gt = _load_flow_sample(gt_path)
        pred = _load_flow_sample(preds[name])
        if gt.indexing and pred.indexing and gt.indexing != pred.indexing:
            raise IndexingMismatchError(
                f"{name}: prediction is {pred.indexing.value}-indexed, ground truth {gt.indexing.value}-indexed"
            )
        if gt.data.shape != pred.data.shape:
            raise DimensionError(f"{name}: shapes differ {pred.data.shape} vs {gt.data.shape}")
        mask = _eval_mask(mask_policy, pred, gt)
        n = int(mask.sum())
        if n == 0:
            per_sample[name] = {"epe": None, "fl_all": None, "evaluated_pixels": 0}
            continue
        diff = pred.data[mask] - gt.data[mask]
        err = np.hypot(diff[:, 0], diff[:, 1])
        mag = np.hypot(gt.data[mask, 0], gt.data[mask, 1])
        out = outlier_mask(err, mag)
        per_sample[name] = {
            "epe": float(err.mean()),
            "fl_all": 100.0 * float(out.mean()),
            "evaluated_pixels": n,
        }
        err_sum += float(err.sum())
        outliers += int(out.sum())
        pixels += n
    aggregate = {
        "epe": err_sum / pixels if pixels else None,
        "fl_all": 100.0 * outliers / pixels if pixels else None,
        "evaluated_pixels": pixels,
        "samples": len(per_sample),
        "missing": len(missing),
    }
    return {"kind": "flow", "mask_policy": mask_policy, "aggregate": aggregate, "per_sample": per_sample, "missing": missing}


def _load_frame(path: Path):
    return read_image(path / "frame_t1.png" if path.is_dir() else path)


def evaluate_image_dirs(pred_dir, gt_dir) -> dict:
    preds = collect_samples(pred_dir, "image")
    gts = collect_samples(gt_dir, "image")
    per_sample = {}
    missing = []
    for name, gt_path in gts.items():
        if name not in preds:
            missing.append(name)
            logger.warning("sample %s missing from predictions", name)
            continue
        a = _load_frame(preds[name])
        b = _load_frame(gt_path)
        per_sample[name] = {"psnr": psnr(a, b), "ssim": ssim(a, b)}
    finite_psnr = [m["psnr"] for m in per_sample.values()]
    aggregate = {
        "psnr": float(np.mean(finite_psnr)) if finite_psnr else None,
        "ssim": float(np.mean([m["ssim"] for m in per_sample.values()])) if per_sample else None,
        "samples": len(per_sample),
        "missing": len(missing),
    }
    return {"kind": "image", "aggregate": aggregate, "per_sample": per_sample, "missing": missing}


def _text_value(v):
    if v is None:
        return "nan"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6f}"
    return str(v)


def report_to_text(report: dict) -> str:
    """Line-oriented ``key=value`` rendering of an evaluation report."""
    lines = [f"kind={report['kind']}"]
    if "mask_policy" in report:
        lines.append(f"mask_policy={report['mask_policy']}")
    for name, metrics in report["per_sample"].items():
        lines.append(" ".join([f"sample={name}"] + [f"{k}={_text_value(v)}" for k, v in metrics.items()]))
    for name in report["missing"]:
        lines.append(f"sample={name} status=missing")
    lines.append(" ".join(["aggregate"] + [f"{k}={_text_value(v)}" for k, v in report["aggregate"].items()]))
    return "\n".join(lines) + "\n"


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def write_report(report: dict, out_dir, stem="report", figure=True) -> None:
    from .plotting import plot_eval_report

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.txt").write_text(report_to_text(report))
    (out_dir / f"{stem}.json").write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
    if figure and report["per_sample"]:
        plot_eval_report(out_dir / f"{stem}.png", report["per_sample"], report["kind"])


# --------------------------------------------------------------------------
# Re-filtering
# --------------------------------------------------------------------------


def triplet_dirs(directory) -> list[Path]:
    directory = Path(directory)
    if (directory / "meta.txt").is_file():
        return [directory]
    root = directory / "samples" if (directory / "samples").is_dir() else directory
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.txt").is_file())


def _target_view(record):
    """Target-indexed flow and geometric validity for a stored triplet."""
    geo = record.geometric_mask if record.geometric_mask is not None else record.mask
    if record.flow.indexing == Indexing.TARGET:
        return record.flow, geo
    return reindex_flow(record.flow, geo, Indexing.TARGET)


def refilter_triplet(record, z: float):
    """Recompute the photometric mask of a stored triplet at threshold ``z``.

    Returns:
        ``(mask, diff_inputs)`` where the mask is expressed in the stored
        flow's indexing and ``diff_inputs`` is ``(frame_t1, warped, warp_valid)``
        on the target grid.
    """
    flow_t, geo_t = _target_view(record)
    warped, warp_valid = backward_warp_image(record.frame_t, flow_t, geo_t)
    mask_t = consistency_mask(record.frame_t1, warped, warp_valid, FilterConfig(z))
    if record.flow.indexing == Indexing.TARGET:
        mask = mask_t
    else:
        _, mask = reindex_flow(flow_t, mask_t, Indexing.SOURCE)
    return mask, (record.frame_t1, warped, warp_valid)


def filter_dataset(directory, z: float, sweep=False, thresholds=SWEEP_THRESHOLDS, dry_run=False) -> dict:
    """Rewrite every triplet's ``mask.png`` at threshold ``z``; optionally tabulate kept fractions."""
    rows = {}
    pooled = {float(t): [] for t in thresholds}
    for d in triplet_dirs(directory):
        record = read_triplet(d)
        mask, diff_inputs = refilter_triplet(record, z)
        row = {"valid_fraction": float(mask.mean())}
        if sweep:
            fr = valid_fraction_sweep(*diff_inputs, thresholds=thresholds)
            for t, f in fr.items():
                pooled[t].append(f)
                row[f"z{t:g}"] = f
        rows[d.name] = row
        if not dry_run:
            write_mask(d / "mask.png", mask)
            meta = dict(record.metadata)
            meta["z_threshold"] = float(z)
            write_meta(d / "meta.txt", meta)
    result = {"z_threshold": float(z), "per_sample": rows}
    if sweep:
        result["sweep"] = {f"{t:g}": float(np.mean(v)) if v else None for t, v in pooled.items()}
    return result


def filter_report_text(result: dict) -> str:
    lines = [f"z_threshold={result['z_threshold']:g}"]
    for name, row in result["per_sample"].items():
        lines.append(" ".join([f"sample={name}"] + [f"{k}={_text_value(v)}" for k, v in row.items()]))
    for z, frac in result.get("sweep", {}).items():
        lines.append(f"sweep z={z} valid_fraction={_text_value(frac)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Visualisation
# --------------------------------------------------------------------------


def visualize(path, out_dir, max_magnitude=None) -> dict:
    """Render a flow file or a triplet folder to PNGs.

    Writes ``flow_color.png`` and ``flow_legend.png``; triplets additionally
    get ``panels.png`` (frame_t | flow | frame_t1, ``3W x H``) and
    ``mask_overlay.png``.
    """
    from .plotting import plot_flow_legend

    path = Path(path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = sniff_format(path)
    record = None
    if kind == "triplet":
        record = read_triplet(path)
        flow, valid = record.flow, record.mask
    elif kind in ("flo", "npy", "kitti"):
        flow, valid = read_flow(path)
    else:
        raise UnknownFormatError(f"{path} is not a flow file or triplet ({kind})")
    if max_magnitude is None:
        max_magnitude = robust_max_magnitude(flow, valid)
    color = flow_to_color(flow, max_magnitude, valid=None if valid.all() else valid)
    write_image(out_dir / "flow_color.png", color)
    plot_flow_legend(out_dir / "flow_legend.png", max_magnitude)
    written = ["flow_color.png", "flow_legend.png"]
    if record is not None:
        panels = np.concatenate([record.frame_t, _rgb(color), _rgb(record.frame_t1)], axis=1)
        write_image(out_dir / "panels.png", panels)
        overlay = _rgb(record.frame_t1).copy()
        bad = ~np.asarray(valid, bool)
        overlay[bad] = 0.5 * overlay[bad] + 0.5 * np.array([255.0, 0.0, 0.0])
        write_image(out_dir / "mask_overlay.png", overlay)
        written += ["panels.png", "mask_overlay.png"]
    info = {"source": str(path), "kind": kind, "max_magnitude": float(max_magnitude), "files": written}
    (out_dir / "viz.txt").write_text(
        f"source={path}\nkind={kind}\nmax_magnitude={float(max_magnitude)!r}\nfiles={','.join(written)}\n"
    )
    return info


def _rgb(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def describe(path) -> dict:
    """Summary of any supported file or triplet folder (``info`` subcommand)."""
    path = Path(path)
    kind = sniff_format(path)
    info = {"path": str(path), "format": kind}
    if kind == "triplet":
        rec = read_triplet(path)
        flow, valid = rec.flow, rec.mask
        info.update({k: v for k, v in rec.metadata.items()})
    elif kind in ("flo", "npy", "kitti"):
        flow, valid = read_flow(path)
    elif kind == "pfm":
        from .grid import read_pfm

        data = read_pfm(path)
        info.update({"height": data.shape[0], "width": data.shape[1], "min": float(np.nanmin(data)), "max": float(np.nanmax(data))})
        return info
    else:
        img = read_image(path)
        info.update({"height": img.shape[0], "width": img.shape[1], "channels": img.shape[2]})
        return info
    mag = np.hypot(flow.data[..., 0], flow.data[..., 1])[valid]
    info.update(
        {
            "height": flow.height,
            "width": flow.width,
            "valid_fraction": float(np.mean(valid)),
            "mean_magnitude": float(mag.mean()) if mag.size else 0.0,
            "max_magnitude": float(mag.max()) if mag.size else 0.0,
        }
    )
    return info
