"""Analytic false-alarm calibration for the max-score detection procedures.

The offline procedure alarms when max over (tau, theta) of W(tau, theta)
crosses b; the online procedure maxes over theta at a fixed window. Both
tail probabilities are approximated by a change-of-measure argument whose
ingredients are computed here per search cell:

* ``nu``            -- the discrete-overshoot correction function
* ``mu_drift``      -- time-direction drift of the local random walk
* ``curvature``     -- parameter-direction curvature gamma(tau, theta)
* ``h_term``        -- negated second derivative of the cell correlation,
                       equal to 2 * curvature^2
* ``psi`` / ``solve_xi0`` -- cumulant generating function of W and the
                       exponential tilt that recenters it at b

``significance_level`` sums the cell approximation over tau = 1..N and
integrates over the theta grid (trapezoid); ``arl`` inverts the per-step
rate at the monitoring window. All spectra factor through the Kronecker
structure: the eigenvalues of the standardized signal-to-noise matrix are
the pairwise products of the temporal and spatial eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf, ndtr

from .errors import ParameterDomainError, SaturationError
from .score import ModelSpec, SpatialGram, precompute_spatial
from .temporal import TemporalGram, temporal_gram

_XI_EDGE = 1.0 - 1e-10  # root bracket stops this close to the psi pole
_SMALL_X = 1e-8


@dataclass(frozen=True)
class ChangeOfMeasure:
    """Exponential tilt of one search cell, solved so the tilted mean is b."""

    xi0: float
    psi_at_xi0: float
    sigma2_xi0: float
    g: float
    tau: int
    theta: float
    b: float


@dataclass(frozen=True)
class CalibrationResult:
    """Threshold with its achieved false-alarm quantity."""

    threshold: float
    achieved: float  # significance level, or average run length
    per_tau_contributions: list


def nu(x) -> np.ndarray | float:
    """Overshoot correction nu(x) for discrete-time boundary crossing.

    nu(0+) = 1 and nu(x) ~ 2/x^2 as x -> inf. Evaluated through erf so the
    x -> 0 cancellation is benign; below 1e-8 the two-term expansion is used.
    """
    x_arr = np.asarray(x, dtype=float)
    out = np.empty_like(x_arr)
    tiny = x_arr < _SMALL_X
    xs = np.where(tiny, 1.0, x_arr)
    num = erf(xs / (2.0 * np.sqrt(2.0))) / xs
    den = (xs / 2.0) * ndtr(xs / 2.0) + np.exp(-(xs**2) / 8.0) / np.sqrt(2.0 * np.pi)
    out = num / den
    out = np.where(tiny, 1.0 - x_arr * np.sqrt(np.pi / 2.0) / 2.0, out)
    return out if out.ndim else float(out)


def _trR2(model_gram: TemporalGram) -> float:
    return float((model_gram.R * model_gram.R).sum())


def mu_drift(spec: ModelSpec, tau: int, theta: float) -> float:
    """Per-unit-tau drift mu(tau, theta) of the cell correlation in time.

    Equals tau * [tr(R_{tau+1}^2) / tr(R_tau^2) - 1]; the spatial factor of
    the defining trace ratio cancels through the Kronecker identity.
    """
    if tau < 1:
        raise ParameterDomainError("tau must be >= 1")
    model = spec.temporal.with_theta(theta)
    r_now = temporal_gram(model, tau)
    r_next = temporal_gram(model, tau + 1)
    return tau * (_trR2(r_next) / _trR2(r_now) - 1.0)


def curvature(spec: ModelSpec, tau: int, theta: float) -> float:
    """Parameter-direction curvature gamma(tau, theta) = tr(dR R) / tr(R R)."""
    g = temporal_gram(spec.temporal.with_theta(theta), tau)
    return float((g.dR * g.R).sum() / _trR2(g))


def h_term(spec: ModelSpec, tau: int, theta: float) -> float:
    """Negated second derivative of the cell correlation in the parameter.

    The local expansion of the correlation is 1 - gamma^2 * delta^2, so the
    second-derivative term is 2 * gamma^2.
    """
    return 2.0 * curvature(spec, tau, theta) ** 2


def cell_eigenvalues(gram: SpatialGram, R: TemporalGram) -> np.ndarray:
    """Eigenvalues of the standardized signal matrix for one (tau, theta) cell:
    all pairwise products of temporal and spatial eigenvalues."""
    r = np.linalg.eigvalsh(R.R)
    return np.outer(r, gram.Msym_eigs).ravel()


def psi(xi: float, lam_eigs: np.ndarray, c: float, d: float) -> float:
    """Cumulant generating function of W at tilt xi.

    psi(xi) = -xi c / sqrt(d) - 1/2 sum log(1 - 2 xi lam_k / sqrt(d)) over
    the cell eigenvalues. Domain: xi < sqrt(d) / (2 max(lam)).
    """
    sd = math.sqrt(d)
    args = 2.0 * xi * lam_eigs / sd
    if np.any(args >= 1.0):
        raise ParameterDomainError("xi outside the domain of the cumulant function")
    return -xi * c / sd - 0.5 * float(np.log1p(-args).sum())


def psi_prime(xi: float, lam_eigs: np.ndarray, d: float) -> float:
    """Derivative of psi; vanishes identically at xi = 0.

    Written per-eigenvalue as lam/(1 - 2 xi lam / sqrt(d)) - lam so the
    xi = 0 cancellation is exact in floating point.
    """
    sd = math.sqrt(d)
    denom = 1.0 - 2.0 * xi * lam_eigs / sd
    return float((lam_eigs / denom - lam_eigs).sum()) / sd


def psi_second(xi: float, lam_eigs: np.ndarray, d: float) -> float:
    """Second derivative of psi (the tilted variance of W)."""
    sd = math.sqrt(d)
    denom = 1.0 - 2.0 * xi * lam_eigs / sd
    return 2.0 / d * float((lam_eigs**2 / denom**2).sum())


def solve_xi0(
    b: float,
    tau: int,
    theta: float,
    gram: SpatialGram,
    spec: ModelSpec,
) -> ChangeOfMeasure:
    """Solve psi'(xi0) = b and assemble the tilted-cell quantities.

    psi' is strictly increasing from 0 toward +inf on the domain, so the
    root is bracketed between 0 and the pole; a bracketed solver keeps the
    search robust where psi' blows up. The tilted variance sigma^2 = psi''
    and the local density factor g = exp(psi(xi0) - xi0 b) / (sigma sqrt(2 pi))
    are filled in.
    """
    if b <= 0:
        raise ParameterDomainError("threshold b must be positive")
    from .score import trace_constants

    R = spec.gram_for(theta, tau)
    lam_eigs = cell_eigenvalues(gram, R)
    c, d = trace_constants(gram, R)
    sd = math.sqrt(d)
    lam_max = float(lam_eigs.max())
    if lam_max <= 0:
        raise ParameterDomainError("cell has no positive signal eigenvalue")
    hi = _XI_EDGE * sd / (2.0 * lam_max)
    f = lambda xi: psi_prime(xi, lam_eigs, d) - b
    f_hi = f(hi)
    if f_hi < 0.0:
        raise SaturationError(
            f"no tilt reaches b={b} within the cumulant domain "
            f"(tau={tau}, theta={theta}, eigenvalue bound {sd / (2 * lam_max):.6g})"
        )
    xi0 = brentq(f, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
    # polish: psi'' is exact, so one or two Newton steps pin the residual
    for _ in range(3):
        resid = psi_prime(xi0, lam_eigs, d) - b
        if abs(resid) <= 1e-12 * max(1.0, b):
            break
        step = resid / psi_second(xi0, lam_eigs, d)
        cand = xi0 - step
        if not 0.0 < cand < hi:
            break
        xi0 = cand
    psi0 = psi(xi0, lam_eigs, c, d)
    sigma2 = psi_second(xi0, lam_eigs, d)
    g = math.exp(-xi0 * b + psi0) / (math.sqrt(sigma2) * math.sqrt(2.0 * math.pi))
    return ChangeOfMeasure(
        xi0=xi0, psi_at_xi0=psi0, sigma2_xi0=sigma2, g=g, tau=tau, theta=theta, b=b
    )


def _cell_intensity(
    b: float,
    tau: int,
    theta: float,
    gram: SpatialGram,
    spec: ModelSpec,
    riemann_form: bool = False,
) -> float:
    """Tail intensity of one (tau, theta) cell, before theta integration.

    The default form carries the tilt-dependent prefactor
    (2 pi)^(-1/2) sqrt(b xi0)/xi0 * |H|^(1/2); the alternative drops it for
    the asymptotically equal sqrt(2) gamma / sqrt(2 pi) (the two coincide as
    xi0/b -> 1) and is kept as a cross-check.
    """
    gam = curvature(spec, tau, theta)
    if gam == 0.0:
        return 0.0
    mu = mu_drift(spec, tau, theta)
    if mu <= 0.0:
        return 0.0
    cm = solve_xi0(b, tau, theta, gram, spec)
    walk = (b**2 * mu / (2.0 * tau)) * nu(math.sqrt(b**2 * mu / tau))
    if riemann_form:
        prefac = abs(gam) / math.sqrt(math.pi)
        return prefac * cm.g * walk
    prefac = math.sqrt(b * cm.xi0) / cm.xi0 * math.sqrt(h_term(spec, tau, theta))
    return prefac / math.sqrt(2.0 * math.pi) * cm.g * walk


def _theta_weights(grid: np.ndarray, singleton_width: float = 1.0) -> np.ndarray:
    """Trapezoid quadrature weights over the theta grid; a single-point grid
    carries the nominal cell width."""
    if grid.size == 1:
        return np.array([singleton_width])
    w = np.empty_like(grid)
    w[0] = (grid[1] - grid[0]) / 2.0
    w[-1] = (grid[-1] - grid[-2]) / 2.0
    w[1:-1] = (grid[2:] - grid[:-2]) / 2.0
    return w


def significance_level(
    b: float,
    N: int,
    spec: ModelSpec,
    riemann_form: bool = False,
    theta_cell_width: float = 1.0,
) -> CalibrationResult:
    """Approximate P(max over tau <= N and theta in the grid of W >= b | null).

    Sums the per-cell intensity over tau = 1..N with trapezoid integration
    over the theta grid. Returns the per-tau contributions alongside the
    total.
    """
    if N < 1:
        raise ParameterDomainError("N must be >= 1")
    gram = precompute_spatial(spec)
    grid = spec.theta_grid
    weights = _theta_weights(grid, theta_cell_width)
    contribs = []
    for tau in range(1, N + 1):
        vals = np.array(
            [
                _cell_intensity(b, tau, th, gram, spec, riemann_form=riemann_form)
                for th in grid
            ]
        )
        contribs.append(float(vals @ weights))
    return CalibrationResult(
        threshold=b, achieved=float(math.fsum(contribs)), per_tau_contributions=contribs
    )


def arl(
    b: float,
    omega: int,
    spec: ModelSpec,
    riemann_form: bool = False,
    theta_cell_width: float = 1.0,
) -> CalibrationResult:
    """Approximate average run length of the windowed online procedure.

    The stopping time is asymptotically exponential with per-step rate equal
    to the theta-integrated cell intensity at tau = omega; the ARL is its
    reciprocal.
    """
    if omega < 1:
        raise ParameterDomainError("window omega must be >= 1")
    gram = precompute_spatial(spec)
    grid = spec.theta_grid
    weights = _theta_weights(grid, theta_cell_width)
    vals = np.array(
        [
            _cell_intensity(b, omega, th, gram, spec, riemann_form=riemann_form)
            for th in grid
        ]
    )
    rate = float(vals @ weights)
    if rate <= 0.0:
        raise SaturationError("per-step alarm rate is zero; ARL is unbounded")
    return CalibrationResult(
        threshold=b, achieved=1.0 / rate, per_tau_contributions=[rate]
    )


def find_threshold(
    spec: ModelSpec,
    alpha: float | None = None,
    N: int | None = None,
    arl_target: float | None = None,
    omega: int | None = None,
    b_lo: float = 0.1,
    b_hi: float = 50.0,
    rel_tol: float = 1e-3,
) -> float:
    """Invert the analytic approximation for the threshold b.

    Exactly one target must be given: a significance level ``alpha`` with
    horizon ``N``, or an average run length ``arl_target`` with window
    ``omega``. A bracket is grown by doubling inside [b_lo, b_hi]; failure
    to bracket raises :class:`SaturationError`.
    """
    want_sl = alpha is not None
    if want_sl == (arl_target is not None):
        raise ParameterDomainError("specify exactly one of alpha or arl_target")
    if want_sl:
        if not 0.0 < alpha < 1.0:
            raise ParameterDomainError("alpha must lie in (0, 1)")
        if N is None or N < 1:
            raise ParameterDomainError("significance-level target requires N >= 1")
        achieved_at = lambda b: significance_level(b, N, spec).achieved
        # positive left of the root on the decreasing branch
        f = lambda b: achieved_at(b) - alpha
        target = alpha
    else:
        if arl_target < 1.0:
            raise ParameterDomainError("ARL target must be >= 1")
        if omega is None or omega < 1:
            raise ParameterDomainError("ARL target requires a window omega >= 1")
        achieved_at = lambda b: arl(b, omega, spec).achieved
        f = lambda b: arl_target - achieved_at(b)
        target = arl_target

    # The asymptotic approximation is only valid (and monotone) to the right
    # of its interior maximum; it decays again as b -> 0. Scan a geometric
    # grid for the rightmost sign change from + to - and bracket there.
    n_scan = 40
    grid = np.geomspace(b_lo, b_hi, n_scan)
    vals = [f(b) for b in grid]
    bracket = None
    for i in range(n_scan - 1):
        if vals[i] > 0.0 >= vals[i + 1]:
            bracket = (grid[i], grid[i + 1])
    if bracket is None:
        raise SaturationError(
            f"threshold target not attainable for b in [{b_lo}, {b_hi}]"
        )
    root = float(brentq(f, *bracket, xtol=1e-10, rtol=1e-12))
    achieved = achieved_at(root)
    if abs(achieved - target) > rel_tol * abs(target):
        raise SaturationError(
            f"threshold inversion did not converge: achieved {achieved}, target {target}"
        )
    return root


def cell_correlation(spec: ModelSpec, tau: int, params1, params2) -> float:
    """Null correlation of W at two parameter points of the same window.

    Equals tr(R(p1) R(p2)) / sqrt(tr(R(p1)^2) tr(R(p2)^2)); the spatial
    factor cancels. ``params1``/``params2`` are scalars for a var1 model and
    (phi, eta) pairs for varma11. Used to cross-check the curvature and
    second-derivative terms and to build the 2-D determinant below.
    """

    def _gram(params) -> TemporalGram:
        if np.isscalar(params):
            return temporal_gram(spec.temporal.with_theta(float(params)), tau)
        phi, eta = params
        from dataclasses import replace

        return temporal_gram(replace(spec.temporal, theta=float(phi), eta=float(eta)), tau)

    R1 = _gram(params1).R
    R2 = _gram(params2).R
    return float((R1 * R2).sum() / math.sqrt((R1 * R1).sum() * (R2 * R2).sum()))


def h_matrix_2d(spec: ModelSpec, tau: int, phi: float, eta: float, step: float = 1e-3) -> np.ndarray:
    """Negated Hessian of the cell correlation in (phi, eta) by central
    differences; the 2-parameter analogue of :func:`h_term`."""
    base = (phi, eta)

    def corr(dp: float, de: float) -> float:
        return cell_correlation(spec, tau, base, (phi + dp, eta + de))

    h = step
    d_pp = (corr(h, 0) - 2.0 * corr(0, 0) + corr(-h, 0)) / h**2
    d_ee = (corr(0, h) - 2.0 * corr(0, 0) + corr(0, -h)) / h**2
    d_pe = (corr(h, h) - corr(h, -h) - corr(-h, h) + corr(-h, -h)) / (4.0 * h**2)
    return -np.array([[d_pp, d_pe], [d_pe, d_ee]])


def significance_level_2d(
    b: float,
    N: int,
    spec: ModelSpec,
    phi_grid: np.ndarray,
    eta_grid: np.ndarray,
) -> CalibrationResult:
    """Two-parameter (varma11) version of :func:`significance_level`.

    Integrates over a rectangular (phi, eta) grid; the parameter-direction
    factor becomes (2 pi)^-1 * b xi0 / xi0 * |H|^(1/2) with H the negated
    2 x 2 Hessian of the cell correlation.
    """
    if spec.temporal.kind != "varma11":
        raise ParameterDomainError("2-D calibration requires a varma11 model")
    phi_grid = np.asarray(phi_grid, dtype=float)
    eta_grid = np.asarray(eta_grid, dtype=float)
    gram = precompute_spatial(spec)
    w_phi = _theta_weights(phi_grid)
    w_eta = _theta_weights(eta_grid)
    from dataclasses import replace

    contribs = []
    for tau in range(1, N + 1):
        total = 0.0
        for i, phi in enumerate(phi_grid):
            for j, eta in enumerate(eta_grid):
                cell_spec = ModelSpec(
                    sigma=spec.sigma,
                    lam=spec.lam,
                    temporal=replace(spec.temporal, theta=phi, eta=eta),
                    theta_grid=spec.theta_grid,
                )
                mu = mu_drift(cell_spec, tau, phi)
                if mu <= 0.0:
                    continue
                H = h_matrix_2d(cell_spec, tau, phi, eta)
                det_h = float(np.linalg.det(H))
                if det_h <= 0.0:
                    continue
                cm = solve_xi0(b, tau, phi, gram, cell_spec)
                walk = (b**2 * mu / (2.0 * tau)) * nu(math.sqrt(b**2 * mu / tau))
                val = (
                    (b * cm.xi0)
                    / cm.xi0
                    * cm.g
                    * math.sqrt(det_h)
                    * walk
                    / (2.0 * math.pi)
                )
                total += val * w_phi[i] * w_eta[j]
        contribs.append(total)
    return CalibrationResult(
        threshold=b, achieved=float(math.fsum(contribs)), per_tau_contributions=contribs
    )
