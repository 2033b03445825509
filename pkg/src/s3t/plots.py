"""Figure rendering for reports; all functions write a file and return its path.

Uses the Agg backend so figures render in headless runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_arl_curve(path, b_values, analytic, simulated=None, sim_se=None) -> str:
    """Analytic ARL versus threshold, with simulated points when given."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(b_values, analytic, "o-", label="analytic")
    if simulated is not None:
        if sim_se is not None:
            ax.errorbar(
                b_values, simulated, yerr=2 * np.asarray(sim_se),
                fmt="s--", capsize=3, label="simulated (2 se)",
            )
        else:
            ax.semilogy(b_values, simulated, "s--", label="simulated")
    ax.set_xlabel("threshold b")
    ax.set_ylabel("average run length")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_per_tau_contributions(path, contributions, b, achieved) -> str:
    """Per-window-length contributions to the analytic false-alarm level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    taus = np.arange(1, len(contributions) + 1)
    ax.plot(taus, contributions, "o-", ms=3)
    ax.set_xlabel("window length tau")
    ax.set_ylabel("contribution to significance level")
    ax.set_title(f"b = {b:g}, total = {achieved:.4g}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_detection_heatmap(path, grid, theta_grid, b, tau_hat, theta_hat) -> str:
    """Offline statistic over the (tau, theta) search grid with the argmax."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(
        grid,
        aspect="auto",
        origin="lower",
        extent=(theta_grid[0], theta_grid[-1], 1, grid.shape[0]),
        cmap="viridis",
    )
    ax.plot([theta_hat], [tau_hat], "r*", ms=12, label=f"argmax (tau={tau_hat})")
    fig.colorbar(im, ax=ax, label="W(tau, theta)")
    ax.set_xlabel("theta")
    ax.set_ylabel("window length tau")
    ax.set_title(f"max = {grid.max():.3f}, threshold = {b:g}")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_monitor_trace(path, times, stats, b, alarm_time=None) -> str:
    """Online statistic trace with the alarm threshold."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, stats, lw=1)
    ax.axhline(b, color="r", ls="--", label=f"threshold {b:g}")
    if alarm_time is not None:
        ax.axvline(alarm_time, color="k", ls=":", label=f"alarm at t={alarm_time}")
    ax.set_xlabel("t")
    ax.set_ylabel("statistic")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_delay_histogram(path, delays, title="") -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(delays), bins=40, color="steelblue", edgecolor="white")
    ax.set_xlabel("stopping time")
    ax.set_ylabel("replications")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_covariance_matrix(path, cov, title="tail-up covariance") -> str:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(cov, cmap="magma")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_xlabel("location")
    ax.set_ylabel("location")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
