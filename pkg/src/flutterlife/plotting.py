"""SVG figures rendered from stage artifacts (no recomputation of results)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trend import FluctuationModel  # noqa: E402

# fixed salt and no timestamp so repeated renders are byte-identical
matplotlib.rcParams["svg.hashsalt"] = "flutterlife"
SVG_META = {"Date": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def plot_failure_curves(curves, path):
    """P_f against year for each damping scenario; ``curves`` maps label -> (years, p_f)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (years, pf) in curves.items():
        ax.plot(years, pf, label=label)
    ax.set_xlabel("year")
    ax.set_ylabel("annual flutter failure probability")
    ax.ticklabel_format(axis="y", style="sci", scilimits=(-2, 2))
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_trend(t, values, a, b, path, ylabel="frequency (Hz)", horizon_months=1200):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, values, "o", ms=3, label="monthly mean")
    tt = np.linspace(0, max(np.max(t), horizon_months), 400)
    ax.plot(tt, a * np.exp(b * tt), "-", label=f"{a:.5g} exp({b:.3e} t)")
    ax.set_xlabel("months since first record")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_fluctuation(samples, model, path, xlabel="value"):
    """Histogram and empirical CDF of ``samples`` with every candidate family overlaid."""
    samples = np.sort(np.asarray(samples, dtype=float))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.hist(samples, bins="auto", density=True, alpha=0.4, color="0.5")
    ax2.step(samples, np.arange(1, samples.size + 1) / samples.size, where="post",
             color="0.3", label="empirical")
    pad = 0.25 * np.ptp(samples)
    x = np.linspace(samples[0] - pad, samples[-1] + pad, 400)
    for name, cand in model.candidates.items():
        if cand.get("p") is None:
            continue
        dist = FluctuationModel(name, cand["params"], cand["p"]).distribution()
        label = f"{name} (p={cand['p']:.3f})" + (" *" if name == model.family else "")
        ax1.plot(x, dist.pdf(x), label=label)
        ax2.plot(x, dist.cdf(x), label=label)
    for ax in (ax1, ax2):
        ax.set_xlabel(xlabel)
        ax.grid(True, alpha=0.3)
    ax1.set_ylabel("PDF")
    ax2.set_ylabel("CDF")
    ax2.legend(fontsize=7)
    _save(fig, path)


def plot_critical_speed(pdfs, path):
    """Critical-speed densities; ``pdfs`` maps label -> (x, density)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, d) in pdfs.items():
        ax.plot(x, d, label=label)
    ax.set_xlabel("flutter critical wind speed (m/s)")
    ax.set_ylabel("PDF")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)
