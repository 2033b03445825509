"""Offline and online change detection procedures and baseline charts.

The offline detector evaluates the signal-magnitude score W over every
trailing window tau = 1..N and every theta in the search grid and alarms
when the maximum crosses the threshold. The online monitor slides a fixed
window of length omega over a stream and alarms at the first crossing;
quadratic-score, MCUSUM and Hotelling variants share the same interface.
``patch_scan`` runs a monitor per image patch and reports the per-time
maximum over patches.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._engine import offline_w_grid, sliding_w_stats
from .errors import ParameterDomainError, ShapeError
from .score import (
    ModelSpec,
    SpatialGram,
    precompute_spatial,
    quadratic_score,
    s3t_statistic,
    trace_constants,
)
from .temporal import TemporalGram, temporal_gram

METHODS = ("s3t", "quadratic-score", "mcusum", "hotelling-t2")


@dataclass(frozen=True)
class BaselineParams:
    """Tuning constants of the baseline charts."""

    mcusum_k: float = 0.5  # reference value of the cumulative-sum recursion
    t2_window: int = 1  # the Hotelling statistic is per-observation

    def __post_init__(self):
        if self.mcusum_k < 0:
            raise ParameterDomainError("mcusum reference k must be nonnegative")
        if self.t2_window < 1:
            raise ParameterDomainError("t2 window must be >= 1")


@dataclass(frozen=True)
class OfflineDecision:
    """Result of one offline pass over a fixed sample."""

    detected: bool
    max_stat: float
    tau_hat: int
    theta_hat: float
    threshold: float
    change_index: int  # estimated change point N - tau_hat
    per_cell_stats: np.ndarray | None = field(default=None, repr=False)


def offline_detect(
    y_series: np.ndarray,
    spec: ModelSpec,
    b: float,
    keep_grid: bool = False,
) -> OfflineDecision:
    """Scan all trailing windows of ``y_series`` (N x p) for a signal.

    Ties in the argmax resolve to the smallest tau, then the smallest theta.
    """
    Y = np.asarray(y_series, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[1] != spec.p:
        raise ShapeError(f"series has shape {Y.shape}, expected (N, {spec.p})")
    gram = precompute_spatial(spec)
    grid = offline_w_grid(Y, gram, spec.temporal, spec.theta_grid)
    # row-major argmax: first hit is the smallest tau, then smallest theta
    flat = int(np.argmax(grid))
    tau_idx, theta_idx = divmod(flat, grid.shape[1])
    max_stat = float(grid[tau_idx, theta_idx])
    tau_hat = tau_idx + 1
    return OfflineDecision(
        detected=max_stat >= b,
        max_stat=max_stat,
        tau_hat=tau_hat,
        theta_hat=float(spec.theta_grid[theta_idx]),
        threshold=b,
        change_index=Y.shape[0] - tau_hat,
        per_cell_stats=grid if keep_grid else None,
    )


class Monitor:
    """Sequential monitor over a stream of p-vectors.

    Feed observations one at a time with :meth:`step`; the monitor keeps a
    ring buffer of the last ``omega`` samples and, once full, evaluates its
    statistic and latches the alarm at the first threshold crossing. Before
    the buffer fills no statistic is emitted (warm-up). A single monitor is
    single-owner mutable; run one per stream.
    """

    def __init__(
        self,
        spec: ModelSpec,
        omega: int,
        b: float,
        method: str = "s3t",
        baseline: BaselineParams = BaselineParams(),
    ):
        if method not in METHODS:
            raise ParameterDomainError(f"unknown method {method!r}; expected {METHODS}")
        if omega < 1:
            raise ParameterDomainError("window omega must be >= 1")
        self.spec = spec
        self.omega = omega
        self.b = b
        self.method = method
        self.baseline = baseline
        self.gram: SpatialGram = precompute_spatial(spec)
        self.buffer: deque = deque(maxlen=omega)
        self.t = 0
        self.alarm_time: int | None = None
        self.cusum = 0.0
        if method in ("s3t", "quadratic-score"):
            self._cells: list[tuple[float, TemporalGram, float, float]] = []
            for th in spec.theta_grid:
                R = temporal_gram(spec.temporal.with_theta(float(th)), omega)
                c, d = trace_constants(self.gram, R)
                self._cells.append((float(th), R, c, d))

    @property
    def alarmed(self) -> bool:
        return self.alarm_time is not None

    def step(self, y_t: np.ndarray) -> dict | None:
        """Advance one observation; returns the evaluation record or None
        during warm-up. The record carries t, stat, theta and method; the
        alarm latches at the first crossing and never unsets."""
        y = np.asarray(y_t, dtype=float).ravel()
        if y.size != self.spec.p:
            raise ShapeError(f"observation has dim {y.size}, expected {self.spec.p}")
        self.t += 1
        self.buffer.append(y)
        if self.method == "hotelling-t2":
            stat = float(y @ self.gram.sigma_inv @ y)
            theta = float("nan")
        elif self.method == "mcusum":
            t2 = float(y @ self.gram.sigma_inv @ y)
            self.cusum = max(0.0, self.cusum + t2 - self.spec.p - self.baseline.mcusum_k)
            stat = self.cusum
            theta = float("nan")
        else:
            if len(self.buffer) < self.omega:
                return None
            window = np.asarray(self.buffer)
            stat = -np.inf
            theta = float("nan")
            for th, R, c, d in self._cells:
                if self.method == "s3t":
                    val = s3t_statistic(window, self.gram, R, c, d).value
                else:
                    val = quadratic_score(window, self.gram, R, c, d)[1].value
                if val > stat:
                    stat = val
                    theta = th
        if self.alarm_time is None and stat >= self.b:
            self.alarm_time = self.t
        return {"t": self.t, "stat": stat, "theta": theta, "method": self.method}


def monitor_step(state: Monitor, y_t: np.ndarray) -> Monitor:
    """Functional wrapper around :meth:`Monitor.step` for callers that
    prefer passing state explicitly."""
    state.step(y_t)
    return state


def mcusum_step(state: Monitor, y_t: np.ndarray) -> Monitor:
    if state.method != "mcusum":
        raise ParameterDomainError("monitor was not configured for mcusum")
    state.step(y_t)
    return state


def hotelling_step(state: Monitor, y_t: np.ndarray) -> Monitor:
    if state.method != "hotelling-t2":
        raise ParameterDomainError("monitor was not configured for hotelling-t2")
    state.step(y_t)
    return state


@dataclass(frozen=True)
class PatchScanResult:
    """Per-time maxima of patch-wise monitors over a frame stream."""

    max_stat: np.ndarray  # (T_eval,)
    argmax_patch: np.ndarray  # (T_eval,) index into patch_origins
    patch_origins: list  # (row, col) of each patch's top-left pixel
    eval_times: np.ndarray  # frame index of each evaluated step (0-based)
    alarm_time: int | None  # frame index of the first crossing
    alarm_patch: int | None


def patch_scan(
    frames: np.ndarray,
    patch: tuple[int, int, int],
    spec_per_patch: ModelSpec,
    b: float,
    omega: int,
    train_prefix: int = 50,
) -> PatchScanResult:
    """Scan a (T, H, W) frame stream with overlapping patch monitors.

    Each patch of shape (h, w), stepped by ``stride``, is vectorized into a
    p = h*w series, standardized per pixel by the mean and standard
    deviation of the first ``train_prefix`` frames (skipped when zero), and
    monitored with the windowed score statistic. The per-time statistic is
    the maximum over patches.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3:
        raise ShapeError("frames must be a (T, H, W) array")
    h, w, stride = patch
    T, H, W = frames.shape
    if h > H or w > W:
        raise ShapeError(f"patch ({h}, {w}) larger than frame ({H}, {W})")
    if stride < 1:
        raise ParameterDomainError("stride must be >= 1")
    if spec_per_patch.p != h * w:
        raise ShapeError(f"per-patch model has p={spec_per_patch.p}, expected {h * w}")
    if train_prefix >= T:
        raise ShapeError("training prefix consumes the whole stream")

    if train_prefix > 0:
        mean = frames[:train_prefix].mean(axis=0)
        std = frames[:train_prefix].std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        series = (frames[train_prefix:] - mean) / std
    else:
        series = frames
    t_offset = train_prefix

    origins = [
        (r, c)
        for r in range(0, H - h + 1, stride)
        for c in range(0, W - w + 1, stride)
    ]
    gram = precompute_spatial(spec_per_patch)
    stats = []
    for r, c in origins:
        patch_series = series[:, r : r + h, c : c + w].reshape(len(series), h * w)
        vals = sliding_w_stats(
            patch_series[None], gram, spec_per_patch.temporal,
            spec_per_patch.theta_grid, omega,
        )[0]
        stats.append(vals.max(axis=1))
    stacked = np.column_stack(stats)  # (T_eval, n_patches)
    max_stat = stacked.max(axis=1)
    argmax_patch = stacked.argmax(axis=1)
    eval_times = np.arange(omega - 1, len(series)) + t_offset
    crossed = np.nonzero(max_stat >= b)[0]
    alarm_i = int(crossed[0]) if crossed.size else None
    return PatchScanResult(
        max_stat=max_stat,
        argmax_patch=argmax_patch,
        patch_origins=origins,
        eval_times=eval_times,
        alarm_time=int(eval_times[alarm_i]) if alarm_i is not None else None,
        alarm_patch=int(argmax_patch[alarm_i]) if alarm_i is not None else None,
    )
