"""Figure rendering for the report path: NMSE sweep curves and the
coherence-kernel heatmap, saved next to the delimited output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import ResultRow

_AXIS_LABELS = {
    "distance": "link distance (m)",
    "bandwidth": "bandwidth (Hz)",
    "snr": "SNR (dB)",
    "pilots": "pilot slots P",
}

_MARKERS = ("o", "s", "^", "v", "d", "x", "*")


def render_sweep_figure(rows: list[ResultRow], path) -> None:
    """One NMSE-vs-sweep-value line per estimator, error bars from the std column."""
    if not rows:
        raise ValueError("no rows to plot")
    axis = rows[0].sweep_axis
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    estimators = sorted({r.estimator for r in rows})
    for i, name in enumerate(estimators):
        own = sorted((r for r in rows if r.estimator == name),
                     key=lambda r: r.sweep_value)
        x = [r.sweep_value for r in own]
        y = [r.nmse_db_mean for r in own]
        err = [r.nmse_db_std for r in own]
        ax.errorbar(x, y, yerr=err, label=name, marker=_MARKERS[i % len(_MARKERS)],
                    capsize=2, linewidth=1.2, markersize=4)
    if axis == "bandwidth":
        ax.set_xscale("log")
    ax.set_xlabel(_AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_coherence_heatmap(gamma_values: np.ndarray, zeta_values: np.ndarray,
                             values: np.ndarray, path) -> None:
    """Heatmap of the chirp-coherence kernel over the (gamma, zeta) plane."""
    fig, ax = plt.subplots(figsize=(5.6, 4.4))
    mesh = ax.pcolormesh(gamma_values, zeta_values, values, shading="auto",
                         cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(mesh, ax=ax, label="coherence")
    ax.set_xlabel("gamma")
    ax.set_ylabel("zeta")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
