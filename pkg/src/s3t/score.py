"""Score statistics for a spatio-temporal signal in Gaussian noise.

Observations are p-dimensional; a window of the most recent tau samples is
tested for an added signal with covariance gamma * (R_tau kron Lambda) on
top of i.i.d. N(0, Sigma) noise. All quantities are evaluated through the
Kronecker factorization, so nothing of size (p*tau) x (p*tau) is ever formed:

* trace constants   c = tr(R) tr(M),  d = 2 tr(R^2) tr(M^2),  M = Sigma^-1 Lambda
* signal-magnitude score statistic  W = (q - c) / sqrt(d)  with
  q = sum_{ij} R[i,j] * (Sigma^-1 y_i)' Lambda (Sigma^-1 y_j)
* the full efficient score vector and its quadratic (Rao) form S with the
  standardized version S~.

Windows are stacked time-major: the oldest sample of the window first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateVarianceError,
    IllConditionedError,
    ParameterDomainError,
    ShapeError,
)
from .temporal import TemporalGram, TemporalModel

_MIN_SIGMA_EIG = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    """Complete in-control model: noise covariance, signal structure, search grid."""

    sigma: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    temporal: TemporalModel = TemporalModel("var1", 0.5)
    theta_grid: np.ndarray = field(default_factory=lambda: np.arange(1, 10) * 0.1)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        if sigma.shape[0] != sigma.shape[1] or sigma.shape != lam.shape:
            raise ShapeError("sigma and lambda must be square matrices of equal size")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ParameterDomainError("sigma must be symmetric")
        if np.min(np.linalg.eigvalsh(sigma)) <= _MIN_SIGMA_EIG:
            raise ParameterDomainError("sigma must be positive definite")
        if np.min(np.linalg.eigvalsh(0.5 * (lam + lam.T))) < -1e-8:
            raise ParameterDomainError("lambda must be positive semidefinite")
        grid = np.asarray(self.theta_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ParameterDomainError("theta grid must be a non-empty 1-D array")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ParameterDomainError("theta grid must be strictly increasing")
        if np.any(np.abs(grid) >= 1.0):
            raise ParameterDomainError("theta grid values must lie in (-1, 1)")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta_grid", grid)

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    def gram_for(self, theta: float, tau: int) -> TemporalGram:
        """Temporal matrix of the search cell (tau, theta)."""
        from .temporal import temporal_gram

        return temporal_gram(self.temporal.with_theta(theta), tau)


@dataclass(frozen=True)
class SpatialGram:
    """Cached spatial factor quantities shared by every (tau, theta) cell."""

    lam: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)  # Sigma^-1 Lambda
    Msym: np.ndarray = field(repr=False)  # Sigma^-1/2 Lambda Sigma^-1/2
    Msym_eigs: np.ndarray  # descending
    M1trace: float
    M2trace: float
    M3trace: float
    M4trace: float
    sigma_inv: np.ndarray = field(repr=False)
    sigma_inv_sqrt: np.ndarray = field(repr=False)
    p: int


@dataclass(frozen=True)
class StatValue:
    """One evaluated detection statistic."""

    value: float
    tau_or_window: int
    theta: float
    kind: str  # "s3t" | "quadratic-score"


def precompute_spatial(spec: ModelSpec) -> SpatialGram:
    """Invert Sigma once and cache the spatial traces and eigenvalues.

    Uses a symmetric eigendecomposition (rather than Cholesky) so the
    eigenvalues of Sigma^-1/2 Lambda Sigma^-1/2 fall out for free; threshold
    calibration consumes them. Cost O(p^3), paid once per model.
    """
    sigma, lam = spec.sigma, spec.lam
    evals, evecs = np.linalg.eigh(sigma)
    cond = evals[-1] / evals[0] if evals[0] > 0 else np.inf
    if evals[0] <= _MIN_SIGMA_EIG:
        raise IllConditionedError(
            f"sigma is numerically singular (condition estimate {cond:.3e})",
            condition=cond,
        )
    sigma_inv = (evecs / evals) @ evecs.T
    sigma_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    M = sigma_inv @ lam
    Msym = sigma_inv_sqrt @ lam @ sigma_inv_sqrt
    Msym = 0.5 * (Msym + Msym.T)
    m = np.sort(np.linalg.eigvalsh(Msym))[::-1]
    return SpatialGram(
        lam=lam,
        M=M,
        Msym=Msym,
        Msym_eigs=m,
        M1trace=float(m.sum()),
        M2trace=float((m**2).sum()),
        M3trace=float((m**3).sum()),
        M4trace=float((m**4).sum()),
        sigma_inv=sigma_inv,
        sigma_inv_sqrt=sigma_inv_sqrt,
        p=spec.p,
    )


def trace_constants(gram: SpatialGram, R: TemporalGram) -> tuple[float, float]:
    """Centering and scaling constants (c, d) of the signal-magnitude score.

    The Kronecker identity tr((R kron M)^k) = tr(R^k) tr(M^k) reduces both
    to products of small traces.
    """
    trR = float(np.trace(R.R))
    trR2 = float((R.R * R.R).sum())
    return trR * gram.M1trace, 2.0 * trR2 * gram.M2trace


def _window_matrix(y: np.ndarray, tau: int, p: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        if y.size != tau * p:
            raise ShapeError(f"stacked window has length {y.size}, expected {tau * p}")
        y = y.reshape(tau, p)
    elif y.shape != (tau, p):
        raise ShapeError(f"window has shape {y.shape}, expected ({tau}, {p})")
    return y


def _quad_form(yw: np.ndarray, gram: SpatialGram, R: TemporalGram) -> float:
    # q in O(tau p^2 + tau^2 p); fsum because q - c cancels to O(sqrt(d))
    u = yw @ gram.sigma_inv
    G = u @ gram.lam @ u.T
    return math.fsum((R.R * G).ravel())


def _primary_theta(R: TemporalGram) -> float:
    return float(R.R[0, 1]) if R.tau > 1 else float("nan")


def s3t_statistic(
    y: np.ndarray, gram: SpatialGram, R: TemporalGram, c: float, d: float
) -> StatValue:
    """Signal-magnitude score statistic W = (q - c) / sqrt(d) on one window.

    ``y`` is the stacked window, oldest sample first, as a (tau, p) array or
    a flat vector of length tau*p. W has null mean 0 and variance 1.
    """
    yw = _window_matrix(y, R.tau, gram.p)
    q = _quad_form(yw, gram, R)
    return StatValue(
        value=(q - c) / math.sqrt(d),
        tau_or_window=R.tau,
        theta=_primary_theta(R),
        kind="s3t",
    )


def efficient_score(y: np.ndarray, gram: SpatialGram, R: TemporalGram) -> np.ndarray:
    """Efficient score vector of length 1 + p*tau.

    First entry is the signal-magnitude component (q - c)/2 evaluated at the
    null; the remainder is Sigma_tau^-1 y applied block by block.
    """
    yw = _window_matrix(y, R.tau, gram.p)
    c, _ = trace_constants(gram, R)
    q = _quad_form(yw, gram, R)
    u = yw @ gram.sigma_inv
    return np.concatenate([[0.5 * (q - c)], u.ravel()])


def quad_score_variance(gram: SpatialGram, R: TemporalGram, c: float, d: float) -> float:
    """Null variance of the quadratic score statistic S.

    From the chi-square moments of S = (q - c)^2 / d + y' Sigma_tau^-1 y:
    Var[S] = 2 p tau + 10 + 48 tr(R^4) tr(M^4) / d^2.
    """
    trR4 = float(np.trace(np.linalg.matrix_power(R.R, 4)))
    var = 2.0 * gram.p * R.tau + 10.0 + 48.0 / d**2 * trR4 * gram.M4trace
    if var <= 0.0:
        raise DegenerateVarianceError(
            f"variance of the quadratic score is non-positive ({var})"
        )
    return var


def quadratic_score(
    y: np.ndarray, gram: SpatialGram, R: TemporalGram, c: float, d: float
) -> tuple[StatValue, StatValue]:
    """Quadratic (Rao) score S and its standardized version S~.

    S = (q - c)^2 / d + y' Sigma_tau^-1 y has null mean p*tau + 1; the
    standardized statistic subtracts that mean and divides by sqrt(Var[S]).
    Returns (S, S~).
    """
    yw = _window_matrix(y, R.tau, gram.p)
    q = _quad_form(yw, gram, R)
    u = yw @ gram.sigma_inv
    quad_noise = math.fsum((u * yw).ravel())
    s = (q - c) ** 2 / d + quad_noise
    var_s = quad_score_variance(gram, R, c, d)
    s_std = (s - (gram.p * R.tau + 1.0)) / math.sqrt(var_s)
    theta = _primary_theta(R)
    return (
        StatValue(value=s, tau_or_window=R.tau, theta=theta, kind="quadratic-score"),
        StatValue(value=s_std, tau_or_window=R.tau, theta=theta, kind="quadratic-score"),
    )
