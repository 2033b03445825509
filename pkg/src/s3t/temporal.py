"""Temporal correlation structure of the signal and its parameter derivatives.

Two stationary families are supported. For a window of length tau the
signal's temporal matrix R is Toeplitz:

* ``var1``    -- R[i, j] = theta^|i-j|, |theta| < 1.
* ``varma11`` -- diagonal 1 + eta^2 - 2*phi*eta and off-diagonal
  phi^(|i-j|-1) (phi - eta)(1 - phi*eta), |phi| < 1.

``temporal_gram`` also returns the elementwise derivative of R with respect
to the primary parameter (theta, or phi for varma11), which drives the
curvature terms in threshold calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterDomainError


@dataclass(frozen=True)
class TemporalModel:
    """Signal time-series family with its primary parameter.

    ``theta`` is the autoregressive coefficient; for ``varma11`` it plays the
    role of phi and ``eta`` is the moving-average coefficient. Grid searches
    substitute the primary parameter via :meth:`with_theta`.
    """

    kind: str  # "var1" | "varma11"
    theta: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("var1", "varma11"):
            raise ParameterDomainError(f"unknown temporal model kind: {self.kind!r}")
        if not abs(self.theta) < 1.0:
            raise ParameterDomainError(
                f"stationarity requires |{'theta' if self.kind == 'var1' else 'phi'}| < 1, "
                f"got {self.theta}"
            )

    def with_theta(self, theta: float) -> "TemporalModel":
        return replace(self, theta=theta)


@dataclass(frozen=True)
class TemporalGram:
    """R, its primary-parameter derivative and (varma only) the eta partial."""

    R: np.ndarray
    dR: np.ndarray
    tau: int
    dR_eta: np.ndarray | None = None
    first_row: np.ndarray | None = None  # Toeplitz generator r_0..r_{tau-1}


def _toeplitz_rows(model: TemporalModel, tau: int):
    """First rows of R and dR as functions of the lag h = 0..tau-1."""
    h = np.arange(tau, dtype=float)
    th = model.theta
    if model.kind == "var1":
        r = th**h
        # d/dtheta theta^h, with 0^0 := 1 so the h=1 entry is well defined at theta=0
        dr = np.where(h >= 1, h * _safe_pow(th, h - 1), 0.0)
        return r, dr, None
    eta = model.eta
    r = np.empty(tau)
    r[0] = 1.0 + eta**2 - 2.0 * th * eta
    dr = np.empty(tau)
    dr[0] = -2.0 * eta
    dre = np.empty(tau)
    dre[0] = 2.0 * eta - 2.0 * th
    if tau > 1:
        hh = h[1:]
        base = _safe_pow(th, hh - 1.0)
        r[1:] = base * (th - eta) * (1.0 - th * eta)
        dr[1:] = (
            np.where(hh >= 2, (hh - 1.0) * _safe_pow(th, hh - 2.0), 0.0)
            * (th - eta) * (1.0 - th * eta)
            + base * (1.0 - th * eta)
            + base * (th - eta) * (-eta)
        )
        dre[1:] = base * (2.0 * th * eta - 1.0 - th**2)
    return r, dr, dre


def _safe_pow(x: float, e: np.ndarray) -> np.ndarray:
    """x**e with the convention 0**0 = 1 and 0**positive = 0."""
    e = np.asarray(e, dtype=float)
    if x == 0.0:
        return np.where(e == 0.0, 1.0, 0.0)
    return x**e


def temporal_gram(model: TemporalModel, tau: int) -> TemporalGram:
    """Build the tau x tau temporal matrix R and its parameter derivative."""
    if tau < 1:
        raise ParameterDomainError(f"window length must be >= 1, got {tau}")
    r, dr, dre = _toeplitz_rows(model, tau)
    lag = np.abs(np.subtract.outer(np.arange(tau), np.arange(tau)))
    R = r[lag]
    dR = dr[lag]
    dR_eta = dre[lag] if dre is not None else None
    return TemporalGram(R=R, dR=dR, tau=tau, dR_eta=dR_eta, first_row=r)


def stacked_signal_cov(
    model: TemporalModel, tau: int, lam: np.ndarray, gamma: float
) -> np.ndarray:
    """Full covariance gamma * (R kron Lambda) of tau stacked signal vectors.

    Materializes the (p*tau) x (p*tau) matrix; intended as a test oracle
    against the empirical covariance of simulated signal paths, not for use
    in the statistic itself.
    """
    if gamma < 0:
        raise ParameterDomainError("signal magnitude gamma must be nonnegative")
    R = temporal_gram(model, tau).R
    return gamma * np.kron(R, np.asarray(lam, dtype=float))
