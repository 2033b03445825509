"""Batched evaluation of windowed score statistics.

R is Toeplitz for every supported temporal family, so the quadratic form of
a window decomposes over lags:

    q(tau, theta) = sum_h w_h(theta) * s_h(tau),
    s_h(tau) = sum of u_i' Lambda u_{i+h} over pairs inside the window,

with w_0 = r_0 and w_h = 2 r_h for h >= 1. The lag sums are shared by every
theta, which turns a grid evaluation into one cumulative sum per lag plus a
single matrix product. Used by the offline detector (all trailing windows
of one series) and the online simulator (all sliding windows of many series
at once).
"""

from __future__ import annotations

import numpy as np

from .score import SpatialGram
from .temporal import TemporalModel, temporal_gram


def lag_weight_matrix(model: TemporalModel, theta_grid: np.ndarray, n_lags: int) -> np.ndarray:
    """(n_lags, K) matrix of Toeplitz lag weights w_h(theta_k)."""
    cols = []
    for th in np.asarray(theta_grid, dtype=float):
        r = temporal_gram(model.with_theta(th), n_lags).first_row
        w = r.copy()
        w[1:] *= 2.0
        cols.append(w)
    return np.column_stack(cols)


def trace_profiles(
    model: TemporalModel, theta_grid: np.ndarray, taus: np.ndarray, gram: SpatialGram
) -> tuple[np.ndarray, np.ndarray]:
    """c(tau, theta) and d(tau, theta) over a tau vector and theta grid.

    Shapes (len(taus), K). Uses the Toeplitz first row: tr(R_tau) = tau r_0
    and tr(R_tau^2) = tau r_0^2 + 2 sum_h (tau - h) r_h^2.
    """
    taus = np.asarray(taus)
    t_max = int(taus.max())
    K = len(theta_grid)
    c = np.empty((len(taus), K))
    d = np.empty((len(taus), K))
    for k, th in enumerate(np.asarray(theta_grid, dtype=float)):
        r = temporal_gram(model.with_theta(th), t_max).first_row
        h = np.arange(t_max)
        for i, tau in enumerate(taus):
            hh = h[1:tau]
            tr_r = tau * r[0]
            tr_r2 = tau * r[0] ** 2 + 2.0 * float(((tau - hh) * r[hh] ** 2).sum())
            c[i, k] = tr_r * gram.M1trace
            d[i, k] = 2.0 * tr_r2 * gram.M2trace
    return c, d


def _pair_products(Y: np.ndarray, gram: SpatialGram) -> np.ndarray:
    """u_i' Lambda u_j seeds: returns (U, V) with g_h = sum_p U[..., i, p] V[..., i+h, p]."""
    U = Y @ gram.sigma_inv
    V = U @ gram.lam
    return U, V


def offline_w_grid(
    Y: np.ndarray, gram: SpatialGram, model: TemporalModel, theta_grid: np.ndarray
) -> np.ndarray:
    """W(tau, theta) over all trailing windows tau = 1..N of one series.

    ``Y`` is (N, p); the window of length tau is the last tau rows. Returns
    an (N, K) grid, rows indexed by tau - 1.
    """
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0]
    U, V = _pair_products(Y, gram)
    S = np.zeros((N, N))  # S[tau-1, h]
    for h in range(N):
        g = (U[: N - h] * V[h:]).sum(axis=1)
        rc = np.cumsum(g[::-1])[::-1]
        taus = np.arange(h + 1, N + 1)
        S[taus - 1, h] = rc[N - taus]
    wlag = lag_weight_matrix(model, theta_grid, N)
    q = S @ wlag
    c, d = trace_profiles(model, theta_grid, np.arange(1, N + 1), gram)
    return (q - c) / np.sqrt(d)


def sliding_w_stats(
    Y: np.ndarray,
    gram: SpatialGram,
    model: TemporalModel,
    theta_grid: np.ndarray,
    omega: int,
) -> np.ndarray:
    """W_t(omega, theta) for every full window of a batch of series.

    ``Y`` is (B, T, p); windows end at t = omega-1 .. T-1. Returns
    (B, T - omega + 1, K).
    """
    Y = np.asarray(Y, dtype=float)
    B, T, _ = Y.shape
    if T < omega:
        raise ValueError(f"series length {T} shorter than window {omega}")
    K = len(theta_grid)
    wlag = lag_weight_matrix(model, theta_grid, omega)
    ends = np.arange(omega - 1, T)
    q = np.zeros((B, len(ends), K))
    U, V = _pair_products(Y, gram)
    for h in range(omega):
        g = (U[:, : T - h] * V[:, h:]).sum(axis=2)  # (B, T-h)
        cs = np.cumsum(g, axis=1)
        hi = ends - h
        lo = ends - omega
        s = cs[:, hi] - np.where(lo >= 0, cs[:, np.maximum(lo, 0)], 0.0)
        q += s[:, :, None] * wlag[h][None, None, :]
    c, d = trace_profiles(model, theta_grid, np.array([omega]), gram)
    return (q - c[0]) / np.sqrt(d[0])


def sliding_quadratic_stats(
    Y: np.ndarray,
    gram: SpatialGram,
    model: TemporalModel,
    theta_grid: np.ndarray,
    omega: int,
) -> np.ndarray:
    """Standardized quadratic score over sliding windows; shape like
    :func:`sliding_w_stats`."""
    from .score import quad_score_variance
    from .temporal import temporal_gram as _tg

    Y = np.asarray(Y, dtype=float)
    B, T, _ = Y.shape
    W = sliding_w_stats(Y, gram, model, theta_grid, omega)  # (q-c)/sqrt(d)
    c, d = trace_profiles(model, theta_grid, np.array([omega]), gram)
    # (q - c)^2 / d recovered from W; add the noise quadratic term
    U = Y @ gram.sigma_inv
    t2 = (U * Y).sum(axis=2)
    cs = np.cumsum(t2, axis=1)
    ends = np.arange(omega - 1, T)
    lo = ends - omega
    t2win = cs[:, ends] - np.where(lo >= 0, cs[:, np.maximum(lo, 0)], 0.0)
    s = W**2 + t2win[:, :, None]
    p = gram.p
    var_s = np.array(
        [
            quad_score_variance(gram, _tg(model.with_theta(th), omega), c[0, k], d[0, k])
            for k, th in enumerate(theta_grid)
        ]
    )
    return (s - (p * omega + 1.0)) / np.sqrt(var_s)[None, None, :]


def t2_series(Y: np.ndarray, gram: SpatialGram) -> np.ndarray:
    """Per-observation Hotelling statistic y' Sigma^-1 y; (B, T)."""
    Y = np.asarray(Y, dtype=float)
    return ((Y @ gram.sigma_inv) * Y).sum(axis=2)


def mcusum_series(Y: np.ndarray, gram: SpatialGram, k: float) -> np.ndarray:
    """Cumulative-sum chart on the Hotelling statistic.

    C_t = max(0, C_{t-1} + T2_t - p - k), started at zero; (B, T).
    """
    t2 = t2_series(Y, gram)
    drift = t2 - gram.p - k
    out = np.empty_like(drift)
    running = np.zeros(drift.shape[0])
    for t in range(drift.shape[1]):
        running = np.maximum(0.0, running + drift[:, t])
        out[:, t] = running
    return out


def first_crossing(stats: np.ndarray, b: float) -> np.ndarray:
    """1-based index of the first entry >= b along the last axis; 0 when the
    threshold is never crossed."""
    crossed = stats >= b
    any_cross = crossed.any(axis=-1)
    idx = np.argmax(crossed, axis=-1) + 1
    return np.where(any_cross, idx, 0)
