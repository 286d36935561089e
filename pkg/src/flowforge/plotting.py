"""Matplotlib figures written next to the text/JSON reports."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .flowio import flow_to_color  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

params = {
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "font.size": 8,
    "font.family": "sans-serif",
    "font.sans-serif": ["DejaVu Sans"],
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.dpi": 100,
    "savefig.dpi": 120,
}

# Keeps PNG bytes reproducible between runs.
_SAVE_META = {"Software": None}


def _figure(width=fig_width, height=None):
    plt.rcParams.update(params)
    height = height or width * golden_mean
    return plt.subplots(figsize=(width, height))


def _save(fig, path):
    fig.savefig(path, metadata=_SAVE_META)
    plt.close(fig)


def plot_flow_legend(path, max_magnitude: float, size: int = 201):
    """Colour-wheel key whose rim corresponds to ``max_magnitude`` pixels."""
    r = max(float(max_magnitude), np.finfo(float).eps)
    ax_vals = np.linspace(-r, r, size)
    u, v = np.meshgrid(ax_vals, ax_vals)
    wheel = flow_to_color(np.dstack([u, v]), max_magnitude=r)
    wheel[np.hypot(u, v) > r] = 255.0
    fig, ax = _figure(3.2, 3.2)
    ax.imshow(wheel.astype(np.uint8), extent=(-r, r, r, -r))
    ax.set_xlabel("u [px]")
    ax.set_ylabel("v [px]")
    ax.set_title(f"max |flow| = {max_magnitude:.3f} px")
    fig.tight_layout()
    _save(fig, path)


def plot_eval_report(path, per_sample: dict, kind: str = "flow"):
    """Per-sample bar chart: EPE and Fl-all for flow, PSNR and SSIM for images."""
    names = list(per_sample)
    keys = ("epe", "fl_all") if kind == "flow" else ("psnr", "ssim")
    labels = {"epe": "EPE [px]", "fl_all": "Fl-all [%]", "psnr": "PSNR [dB]", "ssim": "SSIM"}
    fig, axes = plt.subplots(2, 1, figsize=(fig_width, fig_width * 0.8), sharex=True)
    plt.rcParams.update(params)
    x = np.arange(len(names))
    for ax, key in zip(axes, keys):
        vals = [per_sample[n].get(key, np.nan) for n in names]
        vals = [v if v is not None and np.isfinite(v) else np.nan for v in vals]
        ax.bar(x, vals, color="#2b8cbe")
        ax.set_ylabel(labels[key])
    axes[-1].set_xticks(x)
    axes[-1].set_xticklabels(names, rotation=90)
    fig.tight_layout()
    _save(fig, path)


def plot_filter_sweep(path, fractions: dict):
    """Kept-pixel fraction against the photometric threshold."""
    zs = sorted(fractions)
    fig, ax = _figure()
    ax.plot(zs, [100.0 * fractions[z] for z in zs], "o-", color="#08589e")
    ax.set_xlabel("threshold Z (intensity)")
    ax.set_ylabel("valid pixels [%]")
    ax.set_xticks(zs)
    fig.tight_layout()
    _save(fig, path)


def plot_synth_summary(path, translations, valid_fractions):
    """Histograms of the drawn camera translations and per-sample valid fractions."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(fig_width * 1.4, fig_width * golden_mean))
    plt.rcParams.update(params)
    ax0.hist(translations, bins=20, color="#4eb3d3")
    ax0.set_xlabel("camera translation [m]")
    ax0.set_ylabel("samples")
    ax1.hist(valid_fractions, bins=20, range=(0, 1), color="#2b8cbe")
    ax1.set_xlabel("valid fraction")
    fig.tight_layout()
    _save(fig, path)
