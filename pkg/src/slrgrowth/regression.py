"""
Classical growth-regression estimators.

OLS, two-stage least squares, the three-stage convergence procedure of
Evans, the Sargan and Wu-Hausman instrument diagnostics, and the
convergence-rate transform. All solves go through QR factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

__all__ = [
    "SingularDesignError",
    "OlsFit",
    "IvFit",
    "ThreeSlsFit",
    "ols",
    "iv_2sls",
    "three_sls",
    "sargan_test",
    "wu_hausman",
    "convergence_rate",
    "stars",
]


class SingularDesignError(np.linalg.LinAlgError):
    """Design matrix is rank deficient."""


def stars(p: float) -> str:
    """Significance band: *** p<0.001, ** p<0.01, * p<0.05, • p<0.1."""
    if not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "•"
    return ""


def _names(k: int, names: Sequence[str] | None) -> tuple[str, ...]:
    if names is None:
        return tuple(f"x{j}" for j in range(k))
    if len(names) != k:
        raise ValueError(f"{len(names)} names for {k} columns")
    return tuple(names)


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix has missing or non-finite cells")
    return X


def _qr_checked(X: np.ndarray, names: Sequence[str]):
    """Economic QR of ``X``; raise naming the columns that break full rank."""
    n, k = X.shape
    if n <= k:
        raise SingularDesignError(f"need more rows than columns, got n={n}, k={k}")
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    # pivoted QR on column-scaled X finds the dependent columns
    _, R, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * (diag[0] if diag.size else 1.0) * 1e3
    rank = int(np.sum(diag > tol))
    if rank < k:
        bad = [names[j] for j in piv[rank:]]
        raise SingularDesignError(
            "design matrix is rank deficient; collinear columns: " + ", ".join(bad)
        )
    Q, R = linalg.qr(X, mode="economic")
    return Q, R


def _has_intercept(X: np.ndarray) -> bool:
    return bool(np.any(np.all(X == X[0], axis=0) & (X[0] != 0)))


@dataclass(frozen=True, eq=False)
class OlsFit:
    """Least-squares fit with classical (homoscedastic) inference.

    Attributes
    ----------
    names : tuple of str
    coef, se, t, p : ndarray
        Estimates, standard errors, t-values and two-sided Student-t p-values.
    resid : ndarray
    sigma2 : float
        ``e'e / (n - k)``.
    r2, r2_adj : float
    f_stat, f_p : float
        Joint test of all slopes (all coefficients without an intercept).
    cov : ndarray
    y, X : ndarray
        The data the fit was computed on.
    """

    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    resid: np.ndarray
    sigma2: float
    r2: float
    r2_adj: float
    f_stat: float
    f_p: float
    cov: np.ndarray
    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def dof(self) -> int:
        return self.n - self.k

    @property
    def fitted(self) -> np.ndarray:
        return self.y - self.resid

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def table(self) -> list[dict]:
        """Rows of name, estimate, se, t, p, stars."""
        return [
            {
                "name": nm,
                "estimate": float(b),
                "se": float(s),
                "t": float(t),
                "p": float(p),
                "stars": stars(p),
            }
            for nm, b, s, t, p in zip(self.names, self.coef, self.se, self.t, self.p)
        ]


def _inference(y, X, coef, resid, dof, cov, names):
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tval = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.inf))
    p = 2.0 * stats.t.sf(np.abs(tval), dof)
    n, k = X.shape
    rss = float(resid @ resid)
    intercept = _has_intercept(X)
    tss = float(((y - y.mean()) ** 2).sum()) if intercept else float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    df_model = k - 1 if intercept else k
    r2_adj = 1.0 - (1.0 - r2) * (n - (1 if intercept else 0)) / dof
    if df_model > 0 and rss > 0:
        f_stat = ((tss - rss) / df_model) / (rss / dof)
        f_p = float(stats.f.sf(f_stat, df_model, dof))
    elif df_model > 0:
        f_stat, f_p = np.inf, 0.0
    else:
        f_stat, f_p = np.nan, np.nan
    return dict(
        names=tuple(names),
        coef=coef,
        se=se,
        t=tval,
        p=p,
        resid=resid,
        r2=float(r2),
        r2_adj=float(r2_adj),
        f_stat=float(f_stat),
        f_p=float(f_p),
        cov=cov,
        y=y,
        X=X,
    )


def ols(y, X, names: Sequence[str] | None = None) -> OlsFit:
    """Ordinary least squares via QR.

    Parameters
    ----------
    y : array_like, shape (n,)
    X : array_like, shape (n, k)
        Regressors; include a column of ones for an intercept.
    names : sequence of str, optional

    Raises
    ------
    SingularDesignError
        If ``X`` lacks full column rank; the message names the columns that
        are linear combinations of the others.
    """
    y = np.asarray(y, dtype=float)
    X = _as_design(X)
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, X has {X.shape[0]} rows")
    names = _names(X.shape[1], names)
    Q, R = _qr_checked(X, names)
    coef = linalg.solve_triangular(R, Q.T @ y)
    resid = y - X @ coef
    dof = X.shape[0] - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    cov = sigma2 * (Rinv @ Rinv.T)
    return OlsFit(sigma2=sigma2, **_inference(y, X, coef, resid, dof, cov, names))


@dataclass(frozen=True, eq=False)
class IvFit(OlsFit):
    """Two-stage least-squares fit.

    ``resid`` are structural residuals ``y - X b``. ``Z`` is the full
    instrument matrix, ``X_hat`` its projection of ``X``, and ``endogenous``
    the indices of columns of ``X`` not spanned by ``Z``.
    """

    Z: np.ndarray = field(default=None, repr=False)
    X_hat: np.ndarray = field(default=None, repr=False)
    endogenous: tuple[int, ...] = ()
    se_kind: str = "structural"


def _project(Q: np.ndarray, A: np.ndarray) -> np.ndarray:
    return Q @ (Q.T @ A)


def iv_2sls(
    y,
    X,
    Z,
    names: Sequence[str] | None = None,
    se_kind: str = "structural",
) -> IvFit:
    """Two-stage least squares.

    Parameters
    ----------
    y : array_like, shape (n,)
    X : array_like, shape (n, k)
        Regressors, exogenous and endogenous.
    Z : array_like, shape (n, m)
        All instruments, including the exogenous regressors. ``m >= k``.
    se_kind : {"structural", "sequential"}
        ``"structural"`` scales the covariance with the structural residuals
        ``y - X b``. ``"sequential"`` reproduces a plain second-stage OLS of
        ``y`` on the fitted regressors, whose residuals are ``y - X_hat b``.

    Notes
    -----
    With ``Z = X`` the projection is the identity and the result is OLS.
    """
    y = np.asarray(y, dtype=float)
    X = _as_design(X)
    Z = _as_design(Z)
    n, k = X.shape
    if Z.shape[0] != n or y.shape != (n,):
        raise ValueError("y, X and Z must have the same number of rows")
    if Z.shape[1] < k:
        raise ValueError(
            f"under-identified: {Z.shape[1]} instruments for {k} regressors"
        )
    if se_kind not in ("structural", "sequential"):
        raise ValueError(f"unknown se_kind {se_kind!r}")
    names = _names(k, names)
    Qz, _ = _qr_checked(Z, [f"z{j}" for j in range(Z.shape[1])])
    X_hat = _project(Qz, X)
    resid_first = X - X_hat
    tol = 1e-10 * np.maximum(np.linalg.norm(X, axis=0), 1.0)
    endog = tuple(int(j) for j in np.flatnonzero(np.linalg.norm(resid_first, axis=0) > tol))
    # exogenous columns of X lie in span(Z); keep them exact
    exog = [j for j in range(k) if j not in endog]
    X_hat[:, exog] = X[:, exog]

    Qh, Rh = _qr_checked(X_hat, names)
    coef = linalg.solve_triangular(Rh, Qh.T @ y)
    resid = y - X @ coef
    dof = n - k
    if se_kind == "structural":
        sigma2 = float(resid @ resid) / dof
    else:
        r2 = y - X_hat @ coef
        sigma2 = float(r2 @ r2) / dof
    Rinv = linalg.solve_triangular(Rh, np.eye(k))
    cov = sigma2 * (Rinv @ Rinv.T)
    return IvFit(
        sigma2=sigma2,
        Z=Z,
        X_hat=X_hat,
        endogenous=endog,
        se_kind=se_kind,
        **_inference(y, X, coef, resid, dof, cov, names),
    )


def sargan_stat(resid, Z, n_regressors: int) -> tuple[float, float]:
    """Sargan statistic from residuals, instruments and the regressor count."""
    resid = np.asarray(resid, dtype=float)
    Z = _as_design(Z)
    dof = Z.shape[1] - n_regressors
    if dof <= 0:
        raise ValueError(
            "Sargan test needs over-identification; "
            f"{Z.shape[1]} instruments for {n_regressors} regressors"
        )
    aux = ols(resid, Z)
    stat = max(0.0, resid.size * aux.r2)
    return float(stat), float(stats.chi2.sf(stat, dof))


def sargan_for(fit: IvFit) -> tuple[float, float]:
    return sargan_stat(fit.resid, fit.Z, fit.k)


def sargan_test(fit_or_resid, Z=None, n_regressors: int | None = None):
    """Sargan test of over-identifying restrictions.

    Accepts either an :class:`IvFit` or ``(resid, Z, n_regressors)``.

    Returns
    -------
    stat, p : float
        ``n R^2`` from regressing the residuals on ``Z`` and its chi-squared
        p-value with ``m - k`` degrees of freedom.

    Raises
    ------
    ValueError
        If the system is exactly identified.
    """
    if isinstance(fit_or_resid, IvFit):
        return sargan_for(fit_or_resid)
    if Z is None or n_regressors is None:
        raise TypeError("pass an IvFit, or residuals with Z and n_regressors")
    return sargan_stat(fit_or_resid, Z, n_regressors)


def wu_hausman(ols_fit: OlsFit, iv_fit: IvFit) -> tuple[float, float]:
    """Wu-Hausman exogeneity test in control-function form.

    The OLS regression is augmented with the first-stage residuals of the
    endogenous regressors; the Wald statistic on their coefficients is
    chi-squared with one degree of freedom per endogenous regressor.

    Raises
    ------
    ValueError
        If the two fits were not computed on the same ``y`` and ``X``.
    """
    if ols_fit.y.shape != iv_fit.y.shape or not np.array_equal(ols_fit.y, iv_fit.y):
        raise ValueError("OLS and IV fits use different samples")
    if ols_fit.X.shape != iv_fit.X.shape or not np.array_equal(ols_fit.X, iv_fit.X):
        raise ValueError("OLS and IV fits use different regressors")
    endog = list(iv_fit.endogenous)
    if not endog:
        return 0.0, 1.0
    V = iv_fit.X[:, endog] - iv_fit.X_hat[:, endog]
    aug = np.column_stack([ols_fit.X, V])
    names = list(ols_fit.names) + [f"v{j}" for j in endog]
    try:
        fit = ols(ols_fit.y, aug, names)
    except SingularDesignError:
        return 0.0, 1.0
    idx = np.arange(ols_fit.k, aug.shape[1])
    b = fit.coef[idx]
    C = fit.cov[np.ix_(idx, idx)]
    stat = float(b @ np.linalg.solve(C, b))
    stat = max(stat, 0.0)
    return stat, float(stats.chi2.sf(stat, len(endog)))


def convergence_rate(beta: float, T: float) -> float:
    """Annual convergence speed ``1 - (1 + T beta) ** (1 / T)``."""
    base = 1.0 + T * beta
    if not base > 0:
        raise ValueError(f"1 + T*beta must be positive, got {base}")
    return float(1.0 - base ** (1.0 / T))


@dataclass(frozen=True, eq=False)
class ThreeSlsFit:
    """Result of the three-stage convergence regression.

    Attributes
    ----------
    stage1 : OlsFit
        Differenced initial income on a constant and the instruments.
    stage2 : IvFit
        Differenced growth on the instrumented differenced initial income.
    beta : float
        Convergence coefficient from stage 2.
    pi : ndarray
        ``g - beta * y0``, the dependent variable of stage 3.
    stage3 : OlsFit
        ``pi`` on the controls.
    sargan, wu_hausman : (float, float)
        Statistic and p-value; ``sargan`` is ``(nan, nan)`` when exactly
        identified.
    T : int
        Period length in years.
    """

    stage1: OlsFit
    stage2: IvFit
    beta: float
    pi: np.ndarray
    stage3: OlsFit
    sargan: tuple[float, float]
    wu_hausman: tuple[float, float]
    T: int

    @property
    def convergence_rate(self) -> float:
        return convergence_rate(self.beta, self.T)

    @property
    def first_stage_f(self) -> float:
        return self.stage1.f_stat


def three_sls(
    g,
    y0,
    g_prev,
    y0_prev,
    Z,
    X,
    T: int,
    names: Sequence[str] | None = None,
    instrument_names: Sequence[str] | None = None,
    stage2_se: str = "sequential",
) -> ThreeSlsFit:
    """Three-stage estimator of conditional convergence.

    Parameters
    ----------
    g : array_like
        Average growth over the period of interest (e.g. 1990 to T).
    y0 : array_like
        Log income at the start of that period.
    g_prev : array_like
        Average growth over the preceding decade (1980 to 1990).
    y0_prev : array_like
        Log income at the start of the preceding decade.
    Z : array_like, shape (n, m)
        Instruments for the differenced initial income, without a constant.
    X : array_like, shape (n, k)
        Controls for stage 3, including the constant.
    T : int
        Length of the period of interest.
    stage2_se : {"sequential", "structural"}
        See :func:`iv_2sls`.

    Notes
    -----
    Stage 1 regresses ``dy0 = y0 - y0_prev`` on ``[1, Z]``. Stage 2 obtains
    ``beta`` by instrumenting ``dy0`` in the regression of
    ``dg = g - g_prev`` on ``[1, dy0]``. Stage 3 regresses
    ``pi = g - beta * y0`` on ``X``. Stage-2 standard errors ignore the
    estimation noise of stage 1.
    """
    g = np.asarray(g, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    dy0 = y0 - np.asarray(y0_prev, dtype=float)
    dg = g - np.asarray(g_prev, dtype=float)
    Z = _as_design(Z)
    n = g.size
    if Z.shape[1] < 1:
        raise ValueError("under-identified: no instruments for initial income")
    ones = np.ones((n, 1))
    Zc = np.hstack([ones, Z])
    znames = ["const"] + list(instrument_names or [f"z{j}" for j in range(Z.shape[1])])

    stage1 = ols(dy0, Zc, znames)
    D = np.column_stack([ones[:, 0], dy0])
    stage2 = iv_2sls(dg, D, Zc, names=("const", "dy0"), se_kind=stage2_se)
    beta = float(stage2.coef[1])
    pi = g - beta * y0
    stage3 = ols(pi, X, names)

    if Zc.shape[1] > D.shape[1]:
        sarg = sargan_stat(stage2.resid, Zc, D.shape[1])
    else:
        sarg = (np.nan, np.nan)
    wh = wu_hausman(ols(dg, D, ("const", "dy0")), stage2)
    return ThreeSlsFit(
        stage1=stage1,
        stage2=stage2,
        beta=beta,
        pi=pi,
        stage3=stage3,
        sargan=sarg,
        wu_hausman=wh,
        T=int(T),
    )
