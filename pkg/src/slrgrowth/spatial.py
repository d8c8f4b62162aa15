"""
Spatial lag, spatial error and combined models.

Maximum likelihood for

    y = rho W y + X beta + u,    u = lam W u + e,    e ~ N(0, sigma2 I)

with the lag-only (SAR), error-only (SEM) and combined (SAC) special cases,
generalized spatial two-stage least squares with a White covariance, the
Anselin LM diagnostics and the LeSage direct/indirect/total impacts.

The log-determinant ``log|I - rho W|`` is evaluated exactly as
``sum(log(1 - rho * omega))`` over the eigenvalues ``omega`` of ``W``, which
are computed once per weights object and shared by all fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, stats

from .regression import OlsFit, _as_design, _names, _qr_checked, stars
from .weights import ContiguityWeights

__all__ = [
    "SpatialFit",
    "LmReport",
    "ImpactMeasures",
    "SpatialConvergenceError",
    "ConditioningError",
    "log_det",
    "parameter_bounds",
    "sar_concentrated_loglik",
    "fit_sar",
    "fit_sem",
    "fit_sac",
    "fit_gs2sls_white",
    "lm_tests",
    "lm_residual_autocorr",
    "impact_measures",
    "impacts",
]

EPS = 1e-6
GRID_POINTS = 101
XATOL = 1e-8


class SpatialConvergenceError(RuntimeError):
    """Likelihood maximization failed; ``trace`` holds the search history."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class ConditioningError(np.linalg.LinAlgError):
    """Instrument matrix is numerically singular."""


def parameter_bounds(W: ContiguityWeights) -> tuple[float, float]:
    """Feasible open interval ``(1/omega_min, 1/omega_max)`` shrunk by ``EPS``."""
    omega = W.eigenvalues
    return 1.0 / omega[0] + EPS, 1.0 / omega[-1] - EPS


def log_det(W: ContiguityWeights, rho: float) -> float:
    """``log|I - rho W|`` from the cached spectrum of ``W``."""
    if rho == 0.0:
        return 0.0
    arg = 1.0 - rho * W.eigenvalues
    if np.any(arg <= 0):
        raise ValueError(f"rho={rho} outside the feasible interval")
    return float(np.sum(np.log(arg)))


def _check_inputs(y, X, W: ContiguityWeights):
    y = np.asarray(y, dtype=float)
    X = _as_design(X)
    if y.shape != (W.n,) or X.shape[0] != W.n:
        raise ValueError(f"dimension mismatch: W is {W.n}x{W.n}, y {y.shape}, X {X.shape}")
    if np.any(W.degree == 0):
        raise ValueError("weights have empty rows")
    return y, X


@dataclass(frozen=True, eq=False)
class SpatialFit:
    """Estimates from one spatial model.

    Attributes
    ----------
    kind : {"SAR", "SEM", "SAC", "GS2SLS_WHITE"}
    names : tuple of str
        Labels of the ``beta`` columns.
    beta, beta_se : ndarray
    rho, rho_se : float or None
        Spatial lag parameter; ``None`` for SEM.
    lam, lam_se : float or None
        Spatial error parameter; ``None`` for SAR and GS2SLS.
    sigma2 : float
        Innovation variance (ML estimate ``e'e / n``).
    log_likelihood : float or None
        ``None`` for GS2SLS.
    resid : ndarray
        Innovations ``(I - lam W)((I - rho W) y - X beta)``.
    cov : ndarray
        Covariance of ``(beta, rho, lam)`` over the parameters present.
    converged : bool
    trace : tuple
        Optimizer diagnostics: (parameters, objective) pairs.
    """

    kind: str
    names: tuple[str, ...]
    beta: np.ndarray
    beta_se: np.ndarray
    rho: float | None
    rho_se: float | None
    lam: float | None
    lam_se: float | None
    sigma2: float
    log_likelihood: float | None
    resid: np.ndarray
    cov: np.ndarray
    converged: bool = True
    trace: tuple = ()
    y: np.ndarray = field(default=None, repr=False)
    X: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.resid.size

    def __getitem__(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def p_values(self) -> np.ndarray:
        """Two-sided normal p-values for ``beta``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.beta / self.beta_se
        return 2.0 * stats.norm.sf(np.abs(z))

    def table(self) -> list[dict]:
        """Rows for every coefficient plus the spatial parameters."""
        rows = []
        ests = list(zip(self.names, self.beta, self.beta_se))
        if self.rho is not None:
            ests.append(("rho", self.rho, self.rho_se))
        if self.lam is not None:
            ests.append(("lambda", self.lam, self.lam_se))
        for nm, b, s in ests:
            z = b / s if s and s > 0 else np.nan
            p = float(2.0 * stats.norm.sf(abs(z))) if np.isfinite(z) else np.nan
            rows.append(
                {"name": nm, "estimate": float(b), "se": float(s), "z": float(z), "p": p, "stars": stars(p)}
            )
        return rows


def _gls_beta(ystar: np.ndarray, Xstar: np.ndarray, names) -> tuple[np.ndarray, np.ndarray]:
    Q, R = _qr_checked(Xstar, names)
    beta = linalg.solve_triangular(R, Q.T @ ystar)
    return beta, ystar - Xstar @ beta


def _profile(y, X, W, rho: float, lam: float, names):
    """beta, innovations and full log-likelihood at ``(rho, lam)``."""
    n = y.size
    Wy = W.sparse @ y
    ay = y - rho * Wy
    if lam == 0.0:
        ys, Xs = ay, X
    else:
        ys = ay - lam * (W.sparse @ ay)
        Xs = X - lam * (W.sparse @ X)
    beta, e = _gls_beta(ys, Xs, names)
    sigma2 = float(e @ e) / n
    ll = (
        -0.5 * n * (np.log(2 * np.pi) + np.log(sigma2) + 1.0)
        + log_det(W, rho)
        + log_det(W, lam)
    )
    return beta, e, sigma2, float(ll)


def _information(y, X, W, beta, rho, lam, sigma2, use_rho: bool, use_lam: bool):
    """Observed information of ``(beta, rho?, lam?, sigma2)`` at the estimates.

    Analytic second derivatives of the full log-likelihood, including the
    ``sum(omega^2 / (1 - rho omega)^2)`` log-determinant curvature.
    """
    Ws = W.sparse
    omega = W.eigenvalues
    n, k = X.shape
    Wy = Ws @ y
    u = y - rho * Wy - X @ beta
    Wu = Ws @ u

    def B(v):
        return v - lam * (Ws @ v)

    e = B(u)
    BX = B(X)
    BWy = B(Wy)
    s2, s4 = sigma2, sigma2 * sigma2

    blocks = [BX]
    if use_rho:
        blocks.append(BWy[:, None])
    if use_lam:
        blocks.append(Wu[:, None])
    G = np.hstack(blocks)  # -de/dtheta columns
    m = G.shape[1]
    info = np.zeros((m + 1, m + 1))
    info[:m, :m] = G.T @ G / s2

    # e' d2e terms
    WX = Ws @ X
    j = k
    if use_rho:
        ir = j
        info[ir, ir] += np.sum(omega**2 / (1.0 - rho * omega) ** 2)
        j += 1
    if use_lam:
        il = j
        info[il, il] += np.sum(omega**2 / (1.0 - lam * omega) ** 2)
        info[:k, il] += WX.T @ e / s2
        info[il, :k] += WX.T @ e / s2
        if use_rho:
            cross = (Ws @ Wy) @ e / s2
            info[ir, il] += cross
            info[il, ir] += cross
    info[:m, m] = G.T @ e / s4
    info[m, :m] = info[:m, m]
    info[m, m] = -n / (2 * s4) + float(e @ e) / (s4 * s2)
    return info


def _covariance(info: np.ndarray, kind: str, trace=()) -> np.ndarray:
    try:
        c = linalg.cho_factor(info)
    except linalg.LinAlgError:
        raise SpatialConvergenceError(
            f"{kind}: information matrix is not positive definite "
            "(likelihood ridge or boundary solution)",
            trace,
        ) from None
    return linalg.cho_solve(c, np.eye(info.shape[0]))


def sar_concentrated_loglik(y, X, W: ContiguityWeights, rho):
    """Concentrated log-likelihood of the lag model, up to a constant.

    ``-n/2 log(e(rho)'e(rho) / n) + log|I - rho W|`` with
    ``e(rho) = e0 - rho e1`` the residuals of ``y`` and ``Wy`` on ``X``.
    Vectorized over ``rho``.
    """
    y, X = _check_inputs(y, X, W)
    Q, _ = _qr_checked(X, _names(X.shape[1], None))
    e0 = y - Q @ (Q.T @ y)
    Wy = W.sparse @ y
    e1 = Wy - Q @ (Q.T @ Wy)
    return _sar_lc_factory(e0, e1, W)(rho)


def _sar_lc_factory(e0, e1, W):
    a, b, c = e0 @ e0, e0 @ e1, e1 @ e1
    n = e0.size
    omega = W.eigenvalues

    def lc(rho):
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        ss = a - 2 * r * b + r * r * c
        ld = np.log1p(-np.outer(r, omega)).sum(axis=1)
        out = -0.5 * n * np.log(ss / n) + ld
        return out if np.ndim(rho) else float(out[0])

    return lc


def _bounded_max(f, lo: float, hi: float, label: str):
    """Grid scan then bounded Brent inside the best bracket."""
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = np.asarray([f(g) for g in grid])
    if not np.all(np.isfinite(vals)):
        raise SpatialConvergenceError(f"{label}: non-finite likelihood on grid", zip(grid, vals))
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    trace = [(float(grid[i]), float(vals[i]))]
    res = optimize.minimize_scalar(
        lambda r: -f(r), bounds=(a, b), method="bounded", options={"xatol": XATOL, "maxiter": 500}
    )
    trace.append((float(res.x), float(-res.fun)))
    if not res.success:
        raise SpatialConvergenceError(
            f"{label}: bounded search failed in bracket [{a:.6g}, {b:.6g}]: {res.message}", trace
        )
    if -res.fun >= vals[i]:
        return float(res.x), tuple(trace)
    return float(grid[i]), tuple(trace)


def _finish(kind, y, X, W, names, rho, lam, trace, use_rho, use_lam):
    beta, e, sigma2, ll = _profile(y, X, W, rho, lam, names)
    info = _information(y, X, W, beta, rho, lam, sigma2, use_rho, use_lam)
    cov_full = _covariance(info, kind, trace)
    m = info.shape[0] - 1
    cov = cov_full[:m, :m]
    se = np.sqrt(np.diag(cov))
    k = X.shape[1]
    j = k
    rho_se = lam_se = None
    if use_rho:
        rho_se = float(se[j])
        j += 1
    if use_lam:
        lam_se = float(se[j])
    return SpatialFit(
        kind=kind,
        names=tuple(names),
        beta=beta,
        beta_se=se[:k],
        rho=float(rho) if use_rho else None,
        rho_se=rho_se,
        lam=float(lam) if use_lam else None,
        lam_se=lam_se,
        sigma2=sigma2,
        log_likelihood=ll,
        resid=e,
        cov=cov,
        converged=True,
        trace=tuple(trace),
        y=y,
        X=X,
    )


def fit_sar(
    y,
    X,
    W: ContiguityWeights,
    names: Sequence[str] | None = None,
    fixed_rho: float | None = None,
) -> SpatialFit:
    """Spatial lag model by maximum likelihood.

    ``rho`` maximizes the concentrated likelihood over
    ``(1/omega_min + eps, 1 - eps)``: a 101-point grid locates the basin and
    a bounded Brent search refines it to ``1e-8``. ``beta`` then follows by
    least squares of ``(I - rho W) y`` on ``X``. Standard errors come from the
    inverse observed information of ``(beta, rho, sigma2)``.

    Parameters
    ----------
    fixed_rho : float, optional
        Skip the search and evaluate at this ``rho``; ``beta`` and its
        standard errors are then conditional on it. ``fixed_rho=0`` is OLS
        with ML variance.

    Raises
    ------
    SpatialConvergenceError
        The 1-D search fails, with the bracket trace attached.
    """
    y, X = _check_inputs(y, X, W)
    names = _names(X.shape[1], names)
    if fixed_rho is not None:
        lo, hi = parameter_bounds(W)
        if not lo - EPS < fixed_rho < hi + EPS:
            raise ValueError(f"rho={fixed_rho} outside the feasible interval")
        fit = _finish("SAR", y, X, W, names, float(fixed_rho), 0.0, (), False, False)
        return SpatialFit(**{**fit.__dict__, "rho": float(fixed_rho), "rho_se": 0.0})
    Q, _ = _qr_checked(X, names)
    e0 = y - Q @ (Q.T @ y)
    Wy = W.sparse @ y
    e1 = Wy - Q @ (Q.T @ Wy)
    lc = _sar_lc_factory(e0, e1, W)
    lo, hi = parameter_bounds(W)
    rho, trace = _bounded_max(lc, lo, hi, "SAR")
    return _finish("SAR", y, X, W, names, rho, 0.0, trace, True, False)


def fit_sem(y, X, W: ContiguityWeights, names: Sequence[str] | None = None) -> SpatialFit:
    """Spatial error model by maximum likelihood.

    ``lam`` maximizes ``-n/2 log(e'e/n) + log|I - lam W|`` where ``e`` are the
    GLS residuals of ``(I - lam W) y`` on ``(I - lam W) X``.
    """
    y, X = _check_inputs(y, X, W)
    names = _names(X.shape[1], names)
    n = y.size
    Wy = W.sparse @ y
    WX = W.sparse @ X

    def lc(lam):
        _, e = _gls_beta(y - lam * Wy, X - lam * WX, names)
        return -0.5 * n * np.log(e @ e / n) + log_det(W, lam)

    lo, hi = parameter_bounds(W)
    lam, trace = _bounded_max(lc, lo, hi, "SEM")
    return _finish("SEM", y, X, W, names, 0.0, lam, trace, False, True)


def fit_sac(
    y,
    X,
    W: ContiguityWeights,
    names: Sequence[str] | None = None,
    starts: Sequence[tuple[float, float]] | None = None,
) -> SpatialFit:
    """Combined lag and error model by 2-D bounded maximum likelihood.

    The concentrated likelihood in ``(rho, lam)`` is maximized by L-BFGS-B
    from several starts: the SAR solution with ``lam = 0``, the SEM solution
    with ``rho = 0`` and the origin. Start points count as candidates, so the
    result never has a lower likelihood than either nested model.

    Raises
    ------
    SpatialConvergenceError
        If the information matrix at the optimum is not positive definite,
        which happens on likelihood ridges where ``rho`` and ``lam`` are not
        separately identified.
    """
    y, X = _check_inputs(y, X, W)
    names = _names(X.shape[1], names)
    lo, hi = parameter_bounds(W)

    def negll(p):
        return -_profile(y, X, W, p[0], p[1], names)[3]

    if starts is None:
        sar = fit_sar(y, X, W, names)
        sem = fit_sem(y, X, W, names)
        starts = [(sar.rho, 0.0), (0.0, sem.lam), (0.0, 0.0)]
    best_p, best_v = None, np.inf
    trace = []
    for s in starts:
        s = np.clip(np.asarray(s, dtype=float), lo, hi)
        v0 = negll(s)
        trace.append((tuple(s), -v0))
        if v0 < best_v:
            best_p, best_v = s, v0
        res = optimize.minimize(
            negll, s, method="L-BFGS-B", bounds=[(lo, hi), (lo, hi)],
            options={"ftol": 1e-13, "gtol": 1e-9, "maxiter": 500},
        )
        trace.append((tuple(res.x), -float(res.fun)))
        if res.fun < best_v:
            best_p, best_v = res.x, float(res.fun)
    rho, lam = (float(v) for v in best_p)
    return _finish("SAC", y, X, W, names, rho, lam, trace, True, True)


def fit_gs2sls_white(
    y,
    X,
    W: ContiguityWeights,
    names: Sequence[str] | None = None,
    w2x: bool = False,
    cond_limit: float = 1e10,
) -> SpatialFit:
    """Spatial two-stage least squares with a White sandwich covariance.

    Regressors are ``[X, Wy]``; instruments ``[X, WX]`` (plus ``W^2 X`` when
    ``w2x``), where lags of constant columns are omitted since they duplicate
    the constant. The covariance is
    ``(H'H)^-1 H' diag(e^2) H (H'H)^-1`` with ``H`` the projected regressors.

    Raises
    ------
    ConditioningError
        If the instrument or projected-regressor matrix is too ill-conditioned.
    """
    y, X = _check_inputs(y, X, W)
    names = _names(X.shape[1], names)
    n, k = X.shape
    Ws = W.sparse
    varying = ~np.all(X == X[0], axis=0)
    WX = Ws @ X[:, varying]
    blocks = [X, WX]
    if w2x:
        blocks.append(Ws @ WX)
    Z = np.hstack(blocks)
    scale = np.linalg.norm(Z, axis=0)
    scale[scale == 0] = 1.0
    cond = np.linalg.cond(Z / scale)
    if not np.isfinite(cond) or cond > cond_limit:
        raise ConditioningError(f"instrument matrix condition number {cond:.3g} exceeds {cond_limit:.3g}")
    Wy = Ws @ y
    H = np.column_stack([X, Wy])
    Qz, _ = linalg.qr(Z, mode="economic")
    H_hat = Qz @ (Qz.T @ H)
    H_hat[:, :k] = X
    hs = np.linalg.norm(H_hat, axis=0)
    cond_h = np.linalg.cond(H_hat / hs)
    if not np.isfinite(cond_h) or cond_h > cond_limit:
        raise ConditioningError(f"weak instruments: projected regressors condition {cond_h:.3g}")
    Qh, Rh = linalg.qr(H_hat, mode="economic")
    delta = linalg.solve_triangular(Rh, Qh.T @ y)
    e = y - H @ delta
    Rinv = linalg.solve_triangular(Rh, np.eye(k + 1))
    bread = Rinv @ Rinv.T
    meat = (H_hat * (e**2)[:, None]).T @ H_hat
    cov = bread @ meat @ bread
    se = np.sqrt(np.diag(cov))
    return SpatialFit(
        kind="GS2SLS_WHITE",
        names=tuple(names),
        beta=delta[:k],
        beta_se=se[:k],
        rho=float(delta[k]),
        rho_se=float(se[k]),
        lam=None,
        lam_se=None,
        sigma2=float(e @ e) / n,
        log_likelihood=None,
        resid=e,
        cov=cov,
        y=y,
        X=X,
    )


@dataclass(frozen=True)
class LmReport:
    """Four LM statistics, each as ``(stat, p)`` with chi-squared(1) p."""

    lm_error: tuple[float, float]
    lm_lag: tuple[float, float]
    robust_lm_error: tuple[float, float]
    robust_lm_lag: tuple[float, float]

    def rows(self) -> list[tuple[str, float, float]]:
        return [
            ("LM error", *self.lm_error),
            ("LM lag", *self.lm_lag),
            ("Robust LM error", *self.robust_lm_error),
            ("Robust LM lag", *self.robust_lm_lag),
        ]


def _chi1(stat: float) -> tuple[float, float]:
    stat = max(float(stat), 0.0)
    return stat, float(stats.chi2.sf(stat, 1))


def _traces(W: ContiguityWeights) -> float:
    """``tr(W'W + WW)``."""
    Ws = W.sparse
    return float(Ws.multiply(Ws).sum() + Ws.multiply(Ws.T).sum())


def lm_tests(ols_fit: OlsFit, W: ContiguityWeights) -> LmReport:
    """LM tests for a spatial error process and an omitted spatial lag.

    Computed from an OLS fit (its residuals, regressors, ``y`` and
    coefficients), with the robust versions of Anselin, Bera, Florax and
    Yoon (1996). The robust statistics are NaN when ``W X b`` lies in the
    column space of ``X``, as with an intercept-only design.
    """
    e = ols_fit.resid
    if e.shape != (W.n,):
        raise ValueError(f"dimension mismatch: W is {W.n}x{W.n}, residuals {e.shape}")
    X, y = ols_fit.X, ols_fit.y
    n = e.size
    Ws = W.sparse
    s2 = float(e @ e) / n
    T = _traces(W)
    We = Ws @ e
    Wy = Ws @ y
    WXb = Ws @ (X @ ols_fit.coef)
    Q, _ = linalg.qr(X, mode="economic")
    mwxb = WXb - Q @ (Q.T @ WXb)
    nJ = float(mwxb @ mwxb) / s2 + T
    d_err = float(e @ We) / s2
    d_lag = float(e @ Wy) / s2
    lm_err = d_err**2 / T
    lm_lag = d_lag**2 / nJ
    # W X b inside the column space of X leaves the robust forms undefined
    if nJ - T <= 1e-12 * T:
        robust = (float("nan"), float("nan"))
        return LmReport(_chi1(lm_err), _chi1(lm_lag), robust, robust)
    rlm_err = (d_err - T * d_lag / nJ) ** 2 / (T * (1.0 - T / nJ))
    rlm_lag = (d_lag - d_err) ** 2 / (nJ - T)
    return LmReport(
        lm_error=_chi1(lm_err),
        lm_lag=_chi1(lm_lag),
        robust_lm_error=_chi1(rlm_err),
        robust_lm_lag=_chi1(rlm_lag),
    )


def lm_residual_autocorr(sar_fit: SpatialFit, W: ContiguityWeights) -> tuple[float, float]:
    """LM test for remaining error autocorrelation in a spatial lag model.

    ``(e'We / s2)^2 / (T22 - T21^2 var(rho))`` with ``T22 = tr(W'W + WW)``,
    ``T21 = tr(W A + W'A)`` for ``A = W (I - rho W)^-1`` and ``var(rho)``
    from the lag model's information matrix (Anselin 1988).
    """
    if sar_fit.rho is None or sar_fit.lam is not None:
        raise ValueError("needs a spatial lag fit without an error process")
    e = sar_fit.resid
    if e.shape != (W.n,):
        raise ValueError("dimension mismatch between fit and weights")
    n = e.size
    s2 = float(e @ e) / n
    Wd = W.dense()
    A = linalg.solve((np.eye(n) - sar_fit.rho * Wd).T, Wd.T).T  # W (I - rho W)^-1
    T22 = _traces(W)
    T21 = float(np.sum(Wd.T * A) + np.sum(Wd * A))
    var_rho = sar_fit.rho_se**2
    denom = T22 - T21**2 * var_rho
    if denom <= 0:
        raise SpatialConvergenceError("non-positive variance term in residual LM test")
    stat = (float(e @ (W.sparse @ e)) / s2) ** 2 / denom
    return _chi1(stat)


@dataclass(frozen=True)
class ImpactMeasures:
    """Average direct, indirect and total impacts per covariate."""

    names: tuple[str, ...]
    direct: np.ndarray
    indirect: np.ndarray
    total: np.ndarray

    def __getitem__(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return float(self.direct[i]), float(self.indirect[i]), float(self.total[i])

    def to_tsv(self) -> str:
        lines = ["variable\tdirect\tindirect\ttotal"]
        for i, nm in enumerate(self.names):
            lines.append(f"{nm}\t{self.direct[i]:.6f}\t{self.indirect[i]:.6f}\t{self.total[i]:.6f}")
        return "\n".join(lines) + "\n"


def impact_measures(
    beta,
    rho: float,
    W: ContiguityWeights,
    names: Sequence[str],
    method: str = "dense",
) -> ImpactMeasures:
    """LeSage-Pace summary impacts for the lag model.

    With ``S = (I - rho W)^-1``: direct ``= beta tr(S) / n``, total
    ``= beta 1'S1 / n`` and indirect ``= total - direct``.

    Parameters
    ----------
    method : {"dense", "eigen"}
        ``"dense"`` forms ``S`` explicitly. ``"eigen"`` uses
        ``tr(S) = sum(1 / (1 - rho omega))`` and ``S 1 = 1 / (1 - rho)``,
        both exact for a row-standardized ``W``.
    """
    beta = np.asarray(beta, dtype=float)
    if not abs(rho) < 1:
        raise np.linalg.LinAlgError(f"|rho| = {abs(rho)} >= 1 makes I - rho W singular")
    n = W.n
    if method == "dense":
        S = linalg.inv(np.eye(n) - rho * W.dense())
        tr = float(np.trace(S))
        one_s_one = float(S.sum())
    elif method == "eigen":
        tr = float(np.sum(1.0 / (1.0 - rho * W.eigenvalues)))
        one_s_one = n / (1.0 - rho)
    else:
        raise ValueError(f"unknown method {method!r}")
    direct = beta * tr / n
    total = beta * one_s_one / n
    return ImpactMeasures(names=tuple(names), direct=direct, indirect=total - direct, total=total)


def impacts(
    fit: SpatialFit,
    W: ContiguityWeights,
    exclude: Sequence[str] = ("const",),
    method: str = "dense",
) -> ImpactMeasures:
    """Impacts for every covariate of a lag-type fit (constant excluded)."""
    if fit.rho is None:
        raise ValueError(f"{fit.kind} fit has no spatial lag parameter")
    keep = [i for i, nm in enumerate(fit.names) if nm not in set(exclude)]
    return impact_measures(
        fit.beta[keep], fit.rho, W, [fit.names[i] for i in keep], method=method
    )
