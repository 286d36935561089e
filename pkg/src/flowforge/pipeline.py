"""Per-sample triplet synthesis and the parallel dataset writer."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import SE3Pose, intrinsics_from_fovy, relative_transform
from .config import SynthConfig
from .errors import FlowForgeError
from .filtering import FilterConfig, consistency_mask
from .flowio import TripletRecord, write_triplet
from .grid import (
    DepthMap,
    Indexing,
    center_crop_resize,
    center_crop_resize_depth,
    read_depth,
    read_image,
)
from .render import FusionParams, fill_holes_nearest, fuse, fusion_weights, render_next_frame
from .synthesis import (
    DROPOUT_SALT,
    draw_translation,
    drop_flow_points,
    reindex_flow,
    sample_rng,
    stream_seed,
    synthesize_flow,
)
from .warping import backward_warp_image

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DEPTH_SUFFIXES = (".pfm", ".npy", ".png")


@dataclass
class SampleResult:
    record: TripletRecord
    target_flow: object
    target_valid: np.ndarray
    stats: dict


def render_triplet(frame, depth: DepthMap, cfg: SynthConfig, sample_index: int) -> SampleResult:
    """Run the full synthesis chain for one already-preprocessed frame/depth pair.

    ``frame`` and ``depth`` must share their spatial size; the frame is
    quantised to 8 bits first so the stored triplet is self-consistent.
    """
    frame = np.rint(np.clip(np.asarray(frame, dtype=np.float64), 0, 255))
    h, w = depth.shape
    intr = intrinsics_from_fovy(cfg.fovy, w, h)

    if cfg.identity_motion:
        translation = np.zeros(3)
    else:
        translation = draw_translation(cfg.motion, sample_index)
    v_t = SE3Pose.identity()
    v_t1 = SE3Pose.from_camera_position(translation)
    v_rel = relative_transform(v_t, v_t1)

    flow_t, corr, geo_valid = synthesize_flow(depth, intr, v_rel)
    rendered = render_next_frame(frame, corr)
    if rendered.hole_mask.any():
        generated = fill_holes_nearest(rendered)
    else:
        generated = np.zeros_like(rendered.image)
    params = FusionParams.mask_gate(frame.shape[2])
    weights = fusion_weights(generated, rendered.image, rendered.hole_mask, params)
    next_frame = np.rint(np.clip(fuse(generated, rendered.image, weights), 0, 255))

    warped, warp_valid = backward_warp_image(frame, flow_t, geo_valid)
    mask_t = consistency_mask(next_frame, warped, warp_valid, FilterConfig(cfg.z_threshold))

    if cfg.indexing == Indexing.SOURCE:
        flow_out, mask_out = reindex_flow(flow_t, mask_t, Indexing.SOURCE)
        _, geo_out = reindex_flow(flow_t, geo_valid, Indexing.SOURCE)
    else:
        flow_out, mask_out, geo_out = flow_t, mask_t, geo_valid
    if cfg.dropout_rate > 0:
        mask_out = drop_flow_points(mask_out, cfg.dropout_rate, sample_rng(cfg.seed, sample_index, DROPOUT_SALT))

    kept = flow_out.data[mask_out]
    stats = {
        "valid_fraction": float(mask_out.mean()),
        "geometric_fraction": float(geo_valid.mean()),
        "mean_u": float(kept[:, 0].mean()) if kept.size else float("nan"),
        "mean_v": float(kept[:, 1].mean()) if kept.size else float("nan"),
        "max_abs_flow": float(np.abs(kept).max()) if kept.size else 0.0,
    }
    meta = {
        "sample_index": sample_index,
        "seed": cfg.seed,
        "stream": f"0x{stream_seed(cfg.seed, sample_index):016x}",
        "tx": float(translation[0]),
        "ty": float(translation[1]),
        "tz": float(translation[2]),
        "fovy": float(cfg.fovy),
        "fx": float(intr.fx),
        "width": w,
        "height": h,
        "max_depth": float(depth.max_depth),
        "z_threshold": float(cfg.z_threshold),
        "dropout_rate": float(cfg.dropout_rate),
        "indexing": flow_out.indexing.value,
        "flow_units": "pixel",
    }
    record = TripletRecord(frame, flow_out, next_frame, mask_out, meta, geometric_mask=geo_out)
    return SampleResult(record, flow_t, mask_t, stats)


def load_pair(frame_path, depth_path, cfg: SynthConfig):
    frame = read_image(frame_path)
    depth = read_depth(depth_path, cfg.max_depth, cfg.depth_png_scale)
    frame = center_crop_resize(frame, cfg.resolution)
    depth = center_crop_resize_depth(depth, cfg.resolution)
    return frame, depth


def find_pairs(frames_dir, depth_dir):
    """Frames sorted by name, each paired with the sibling depth file of the same stem (or None)."""
    frames_dir, depth_dir = Path(frames_dir), Path(depth_dir)
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    pairs = []
    for frame in frames:
        depth = next((depth_dir / (frame.stem + s) for s in DEPTH_SUFFIXES if (depth_dir / (frame.stem + s)).is_file()), None)
        pairs.append((frame, depth))
    return pairs


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _manifest_line(fields: dict) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


def _run_sample(args):
    cfg, index, frame_path, depth_path = args
    name = f"{index:06d}"
    base = {"sample": name, "frame": frame_path.name}
    if depth_path is None:
        return index, _manifest_line({**base, "status": "skipped", "reason": "missing_depth"})
    try:
        frame, depth = load_pair(frame_path, depth_path, cfg)
        result = render_triplet(frame, depth, cfg, index)
    except (FlowForgeError, OSError) as exc:
        reason = type(exc).__name__
        logger.warning("sample %s skipped: %s", name, exc)
        return index, _manifest_line({**base, "status": "skipped", "reason": reason})
    out_dir = Path(cfg.out) / "samples" / name
    result.record.metadata["frame"] = frame_path.name
    result.record.metadata["depth"] = depth_path.name
    write_triplet(
        out_dir,
        result.record,
        export_npy=cfg.export_npy,
        export_kitti=cfg.export_kitti,
        normalized_npy=cfg.npy_normalized,
    )
    meta = result.record.metadata
    line = _manifest_line(
        {
            **base,
            "status": "ok",
            "depth": depth_path.name,
            "dir": f"samples/{name}",
            "stream": meta["stream"],
            "tx": meta["tx"],
            "ty": meta["ty"],
            "tz": meta["tz"],
            **result.stats,
        }
    )
    return index, line


def synthesize_dataset(cfg: SynthConfig) -> list[str]:
    """Write ``cfg.n_samples`` triplets plus ``manifest.txt`` under ``cfg.out``.

    Sample ``i`` uses frame ``i mod n_frames``; its motion and dropout streams
    depend only on ``(seed, i)``, so the output does not depend on ``workers``.
    """
    cfg.validate()
    pairs = find_pairs(cfg.frames, cfg.depth)
    if not pairs:
        raise FileNotFoundError(f"no frames found in {cfg.frames}")
    out = Path(cfg.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, i, *pairs[i % len(pairs)]) for i in range(cfg.n_samples)]
    if cfg.workers == 1:
        results = [_run_sample(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_sample, jobs, chunksize=1))
    lines = [line for _, line in sorted(results)]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    # Run-local settings stay out so the dataset bytes do not depend on them.
    (out / "config.txt").write_text(cfg.to_text(exclude=("out", "workers")))
    return lines
