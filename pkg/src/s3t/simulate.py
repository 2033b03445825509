"""Seeded Monte Carlo harness: generators and false-alarm / delay estimators.

Every replication owns an independent RNG stream derived from
``SeedSequence((seed, rep_index))``, so estimates are bitwise reproducible
and independent of chunking or thread count. Replications are evaluated in
vectorized chunks; per-chunk results land in disjoint slices of
preallocated arrays and are reduced in fixed order.

Conventions shared with the detection procedures:

* offline significance level -- fraction of replications whose max over
  (tau, theta) of W crosses b on an N-sample null series;
* average run length -- the online statistic is evaluated on full windows
  from step 1 (the stream carries omega - 1 in-control samples of history),
  and the stopping time is the first crossing, censored at ``max_horizon``;
* detection delay -- the change occurs at step 1 with in-control history
  filling the window, and the delay is the raw stopping time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._engine import (
    first_crossing,
    mcusum_series,
    sliding_quadratic_stats,
    sliding_w_stats,
    offline_w_grid,
    t2_series,
)
from .detectors import METHODS, BaselineParams
from .errors import ParameterDomainError, ShapeError
from .score import ModelSpec, precompute_spatial
from .temporal import TemporalModel

_DEFAULT_BURN_IN = 200


@dataclass(frozen=True)
class SignalParams:
    """Out-of-control signal description for the generators."""

    gamma: float = 0.0  # signal covariance magnitude; Var(x) = gamma * lam
    mu: float = 0.0  # common mean level, E[x] = mu * 1
    temporal: TemporalModel = TemporalModel("var1", 0.5)
    lam: np.ndarray = field(default=None, repr=False)
    change_time: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterDomainError("gamma must be nonnegative")
        if self.change_time < 0:
            raise ParameterDomainError("change time must be nonnegative")

    @property
    def is_null(self) -> bool:
        return self.gamma == 0.0 and self.mu == 0.0


@dataclass
class ExperimentReport:
    """Replication summary of one Monte Carlo experiment."""

    n_reps: int
    estimate: float
    std_error: float
    seed: int
    config: dict = field(default_factory=dict)
    n_censored: int = 0
    warnings: list = field(default_factory=list)
    per_rep: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "n_reps": self.n_reps,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "seed": self.seed,
            "config": self.config,
            "n_censored": self.n_censored,
            "warnings": list(self.warnings),
        }
        return out


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Counter-style stream for one replication."""
    return np.random.default_rng(np.random.SeedSequence((seed, rep)))


def _chol_psd(mat: np.ndarray) -> np.ndarray:
    """Cholesky-like factor tolerating semidefinite input."""
    mat = np.asarray(mat, dtype=float)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        evals, evecs = np.linalg.eigh(0.5 * (mat + mat.T))
        evals = np.clip(evals, 0.0, None)
        return evecs * np.sqrt(evals)


def gen_null(p: int, n: int, sigma: np.ndarray, seed: int, rep: int = 0) -> np.ndarray:
    """n i.i.d. rows from N(0, Sigma) via a square-root factor of Sigma."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (p, p):
        raise ShapeError(f"sigma has shape {sigma.shape}, expected ({p}, {p})")
    if np.min(np.linalg.eigvalsh(sigma)) <= 0:
        raise ParameterDomainError("sigma must be positive definite")
    rng = rep_rng(seed, rep)
    return rng.standard_normal((n, p)) @ np.linalg.cholesky(sigma).T


def _signal_path(
    params: SignalParams, n: int, rng: np.random.Generator, burn_in: int
) -> np.ndarray:
    """Zero-mean signal path with stationary covariance gamma * lam."""
    lam = np.atleast_2d(np.asarray(params.lam, dtype=float))
    p = lam.shape[0]
    model = params.temporal
    if params.gamma == 0.0:
        return np.zeros((n, p))
    th = model.theta
    if model.kind == "var1":
        innov_cov = params.gamma * (1.0 - th**2) * lam
        L = _chol_psd(innov_cov)
        eps = rng.standard_normal((burn_in + n, p)) @ L.T
        x = np.zeros(p)
        out = np.empty((burn_in + n, p))
        for t in range(burn_in + n):
            x = th * x + eps[t]
            out[t] = x
        return out[burn_in:]
    # varma11: x_t = phi x_{t-1} + e_t - eta e_{t-1}; innovations scaled so the
    # stacked covariance is gamma * (R kron lam) with R's stated diagonal
    eta = model.eta
    innov_cov = params.gamma * (1.0 - th**2) * lam
    L = _chol_psd(innov_cov)
    eps = rng.standard_normal((burn_in + n + 1, p)) @ L.T
    x = np.zeros(p)
    out = np.empty((burn_in + n, p))
    for t in range(burn_in + n):
        x = th * x + eps[t + 1] - eta * eps[t]
        out[t] = x
    return out[burn_in:]


def gen_signal(
    params: SignalParams,
    n: int,
    seed: int,
    rep: int = 0,
    burn_in: int = _DEFAULT_BURN_IN,
) -> np.ndarray:
    """n samples of the signal process with E[x] = mu * 1 and
    Var(x) = gamma * lam.

    The recursion is started at zero and burned in; the constant mean is
    added after generation so the expectation is exact at every step.
    """
    if params.lam is None:
        raise ParameterDomainError("signal parameters need a spatial matrix lam")
    rng = rep_rng(seed, rep)
    x = _signal_path(params, n, rng, burn_in)
    return x + params.mu


def _chunks(n: int, size: int):
    for s in range(0, n, size):
        yield s, min(s + size, n)


def _run_chunked(worker, n_reps: int, chunk: int, threads: int):
    spans = list(_chunks(n_reps, chunk))
    if threads <= 1:
        for span in spans:
            worker(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(worker, spans))


def offline_max_stats(
    N: int,
    spec: ModelSpec,
    n_reps: int,
    seed: int,
    chunk: int = 250,
    threads: int = 1,
) -> np.ndarray:
    """Per-replication max over (tau, theta) of W on null series of length N."""
    gram = precompute_spatial(spec)
    chol = np.linalg.cholesky(spec.sigma)
    out = np.empty(n_reps)

    def worker(span):
        s, e = span
        Y = np.stack(
            [rep_rng(seed, r).standard_normal((N, spec.p)) @ chol.T for r in range(s, e)]
        )
        for i in range(e - s):
            grid = offline_w_grid(Y[i], gram, spec.temporal, spec.theta_grid)
            out[s + i] = grid.max()

    _run_chunked(worker, n_reps, chunk, threads)
    return out


def estimate_sl(
    b: float,
    N: int,
    spec: ModelSpec,
    n_reps: int,
    seed: int,
    threads: int = 1,
) -> ExperimentReport:
    """Simulated offline significance level with binomial standard error."""
    stats = offline_max_stats(N, spec, n_reps, seed, threads=threads)
    hits = float((stats >= b).mean())
    se = float(np.sqrt(hits * (1.0 - hits) / n_reps))
    return ExperimentReport(
        n_reps=n_reps,
        estimate=hits,
        std_error=se,
        seed=seed,
        config={"kind": "sl", "b": b, "N": N},
        per_rep=stats,
    )


def _stat_trajectories(
    spec: ModelSpec,
    omega: int,
    n_evals: int,
    seed: int,
    span: tuple[int, int],
    method: str,
    signal: SignalParams | None,
    baseline: BaselineParams,
    burn_in: int,
) -> np.ndarray:
    """Statistic trajectories for replications ``span``; shape (B, n_evals).

    The windowed methods consume omega - 1 leading in-control samples so
    every evaluation uses a full window; evaluation i (1-based) is the i-th
    monitored step. Draw order per replication is fixed: noise first, then
    the signal innovations.
    """
    s, e = span
    gram = precompute_spatial(spec)
    chol = np.linalg.cholesky(spec.sigma)
    windowed = method in ("s3t", "quadratic-score")
    lead = omega - 1 if windowed else 0
    T = lead + n_evals
    noise = np.empty((e - s, T, spec.p))
    rngs = [rep_rng(seed, r) for r in range(s, e)]
    for i, rng in enumerate(rngs):
        noise[i] = rng.standard_normal((T, spec.p)) @ chol.T
    if signal is not None and not signal.is_null:
        X = np.empty((e - s, n_evals, spec.p))
        for i, rng in enumerate(rngs):
            X[i] = _signal_path(signal, n_evals, rng, burn_in)
        noise[:, lead:] += X + signal.mu
    elif signal is not None and signal.mu != 0.0:
        noise[:, lead:] += signal.mu

    if method == "s3t":
        stats = sliding_w_stats(noise, gram, spec.temporal, spec.theta_grid, omega)
        return stats.max(axis=2)
    if method == "quadratic-score":
        stats = sliding_quadratic_stats(noise, gram, spec.temporal, spec.theta_grid, omega)
        return stats.max(axis=2)
    if method == "mcusum":
        return mcusum_series(noise, gram, baseline.mcusum_k)
    if method == "hotelling-t2":
        return t2_series(noise, gram)
    raise ParameterDomainError(f"unknown method {method!r}; expected {METHODS}")


def stopping_times(
    spec: ModelSpec,
    omega: int,
    b: float,
    n_reps: int,
    max_horizon: int,
    seed: int,
    method: str = "s3t",
    signal: SignalParams | None = None,
    baseline: BaselineParams = BaselineParams(),
    burn_in: int = _DEFAULT_BURN_IN,
    chunk: int = 200,
    threads: int = 1,
) -> np.ndarray:
    """First-crossing times of the online statistic; 0 marks a censored run."""
    out = np.empty(n_reps, dtype=np.int64)

    def worker(span):
        stats = _stat_trajectories(
            spec, omega, max_horizon, seed, span, method, signal, baseline, burn_in
        )
        out[span[0] : span[1]] = first_crossing(stats, b)

    _run_chunked(worker, n_reps, chunk, threads)
    return out


def _censored_report(
    times: np.ndarray, max_horizon: int, seed: int, config: dict
) -> ExperimentReport:
    censored = times == 0
    n_cens = int(censored.sum())
    capped = np.where(censored, max_horizon, times).astype(float)
    mean = float(capped.mean())
    se = float(capped.std(ddof=1) / np.sqrt(len(capped))) if len(capped) > 1 else 0.0
    warnings = []
    if n_cens > 0.05 * len(times):
        warnings.append(
            f"{n_cens}/{len(times)} runs censored at horizon {max_horizon}; "
            "estimate is biased low and its uncertainty is wider than the "
            "reported standard error"
        )
    return ExperimentReport(
        n_reps=len(times),
        estimate=mean,
        std_error=se,
        seed=seed,
        config=config,
        n_censored=n_cens,
        warnings=warnings,
        per_rep=capped,
    )


def estimate_arl(
    b: float,
    omega: int,
    spec: ModelSpec,
    n_reps: int,
    max_horizon: int,
    seed: int,
    method: str = "s3t",
    baseline: BaselineParams = BaselineParams(),
    threads: int = 1,
) -> ExperimentReport:
    """Simulated average run length under the null, censored at the horizon."""
    times = stopping_times(
        spec, omega, b, n_reps, max_horizon, seed,
        method=method, baseline=baseline, threads=threads,
    )
    return _censored_report(
        times, max_horizon, seed,
        {"kind": "arl", "b": b, "omega": omega, "method": method},
    )


def estimate_edd(
    method: str,
    b: float,
    omega: int,
    spec: ModelSpec,
    params: SignalParams,
    n_reps: int,
    seed: int,
    max_horizon: int = 2000,
    baseline: BaselineParams = BaselineParams(),
    burn_in: int = _DEFAULT_BURN_IN,
    threads: int = 1,
) -> ExperimentReport:
    """Simulated expected detection delay with the change at step 1."""
    times = stopping_times(
        spec, omega, b, n_reps, max_horizon, seed,
        method=method, signal=params, baseline=baseline,
        burn_in=burn_in, threads=threads,
    )
    return _censored_report(
        times, max_horizon, seed,
        {
            "kind": "edd", "b": b, "omega": omega, "method": method,
            "gamma": params.gamma, "mu": params.mu,
        },
    )


def calibrate_threshold_sim(
    method: str,
    arl_target: float,
    omega: int,
    spec: ModelSpec,
    n_reps: int,
    seed: int,
    max_horizon: int | None = None,
    baseline: BaselineParams = BaselineParams(),
    tol_frac: float = 0.02,
    chunk: int = 200,
    threads: int = 1,
) -> tuple[float, float]:
    """Threshold whose simulated ARL hits the target; returns (b, achieved).

    The statistic trajectories do not depend on b, so they are simulated
    once and the capped mean first-crossing time is bisected in b.
    """
    if arl_target < 1:
        raise ParameterDomainError("ARL target must be >= 1")
    horizon = max_horizon or max(int(15 * arl_target), 10 * omega)
    trajs = np.empty((n_reps, horizon))

    def worker(span):
        trajs[span[0] : span[1]] = _stat_trajectories(
            spec, omega, horizon, seed, span, method, None, baseline, _DEFAULT_BURN_IN
        )

    _run_chunked(worker, n_reps, chunk, threads)

    def arl_of(b: float) -> float:
        times = first_crossing(trajs, b)
        return float(np.where(times == 0, horizon, times).mean())

    lo, hi = 0.0, float(trajs.max()) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if arl_of(mid) < arl_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    b = 0.5 * (lo + hi)
    return b, arl_of(b)
