"""
Propensity-score matching.

Scores come from a logit or probit fitted by iteratively reweighted least
squares, or from a linear probability model. Treated units are matched
greedily, in a seeded random order, to their nearest controls on the score
within a caliper. The effect on the treated is the mean matched difference;
its standard error follows Abadie and Imbens (2006).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .regression import _as_design, _names, _qr_checked, ols

__all__ = [
    "SeparationWarning",
    "PropensityModel",
    "MatchConfig",
    "Matching",
    "MatchResult",
    "BalanceRow",
    "BalanceReport",
    "fit_propensity",
    "match_units",
    "att",
    "balance",
    "ks_bootstrap",
    "run_matching",
]

MAX_ITER = 50
DEV_TOL = 1e-10
PROB_EPS = 1e-12


class SeparationWarning(RuntimeWarning):
    """Fitted probabilities are driven to 0 or 1."""


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Fitted treatment model.

    Attributes
    ----------
    kind : {"logit", "probit", "lpm"}
    coef, se : ndarray
    scores : ndarray
        Fitted probabilities; for ``lpm`` clipped into [0, 1].
    converged : bool
    n_iter : int
    deviance : float
    separated : bool
        Fitted probabilities collapsed onto 0/1 with diverging coefficients.
    clipped : bool
        ``lpm`` only: some fitted values fell outside [0, 1].
    diagnostic : str
    """

    kind: str
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    scores: np.ndarray
    converged: bool
    n_iter: int
    deviance: float
    separated: bool = False
    clipped: bool = False
    diagnostic: str = ""


def _link(kind: str):
    if kind == "logit":
        def mu(eta):
            return stats.logistic.cdf(eta)

        def dmu(eta):
            p = stats.logistic.cdf(eta)
            return p * (1.0 - p)
    else:
        def mu(eta):
            return stats.norm.cdf(eta)

        def dmu(eta):
            return stats.norm.pdf(eta)
    return mu, dmu


def _derivs(kind: str, d, eta):
    """Per-unit score and negative second derivative of the log-likelihood
    with respect to the linear index."""
    if kind == "logit":
        p = stats.logistic.cdf(eta)
        return d - p, np.maximum(p * (1.0 - p), PROB_EPS)
    # probit: inverse Mills ratios from log densities for stability
    lam1 = np.exp(stats.norm.logpdf(eta) - stats.norm.logcdf(eta))
    lam0 = np.exp(stats.norm.logpdf(eta) - stats.norm.logsf(eta))
    score = np.where(d == 1, lam1, -lam0)
    curv = np.where(d == 1, lam1 * (lam1 + eta), lam0 * (lam0 - eta))
    return score, np.maximum(curv, PROB_EPS)


def _deviance(d, p):
    p = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    return float(-2.0 * np.sum(d * np.log(p) + (1 - d) * np.log1p(-p)))


def fit_propensity(d, X, kind: str = "logit", names: Sequence[str] | None = None) -> PropensityModel:
    """Fit ``P(d = 1 | X)``.

    Logit and probit use Newton-Raphson written as iteratively reweighted
    least squares (observed information; for the logit this is Fisher
    scoring) with step halving whenever the deviance rises, and stop once the deviance changes by less than ``1e-10`` and
    the coefficient step is below ``1e-10``, or after 50 iterations. Perfect
    or quasi-perfect separation is flagged with a :class:`SeparationWarning`
    rather than returned silently. ``lpm`` is OLS with scores clipped into
    [0, 1].

    Raises
    ------
    ValueError
        If ``d`` is not a non-constant 0/1 vector.
    """
    d = np.asarray(d, dtype=float)
    X = _as_design(X)
    if d.shape != (X.shape[0],):
        raise ValueError("d and X have different lengths")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("treatment indicator must be 0/1")
    if d.min() == d.max():
        raise ValueError("treatment indicator is constant")
    names = _names(X.shape[1], names)
    if kind == "lpm":
        fit = ols(d, X, names)
        raw = fit.fitted
        scores = np.clip(raw, 0.0, 1.0)
        return PropensityModel(
            kind="lpm",
            names=names,
            coef=fit.coef,
            se=fit.se,
            scores=scores,
            converged=True,
            n_iter=1,
            deviance=float(fit.resid @ fit.resid),
            clipped=bool(np.any(scores != raw)),
        )
    if kind not in ("logit", "probit"):
        raise ValueError(f"unknown propensity model {kind!r}")
    _qr_checked(X, names)
    mu, dmu = _link(kind)
    beta = np.zeros(X.shape[1])
    eta = X @ beta
    dev = _deviance(d, mu(eta))
    norms = []
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        score, curv = _derivs(kind, d, eta)
        sc = np.sqrt(curv)
        step, *_ = np.linalg.lstsq(X * sc[:, None], score / sc, rcond=None)
        new = beta + step
        new_dev = _deviance(d, mu(X @ new))
        for _ in range(30):
            if new_dev <= dev + 1e-12 * (1 + abs(dev)):
                break
            step = 0.5 * step
            new = beta + step
            new_dev = _deviance(d, mu(X @ new))
        beta = new
        eta = X @ beta
        norms.append(float(np.linalg.norm(beta)))
        done = abs(new_dev - dev) < DEV_TOL and np.max(np.abs(step)) < DEV_TOL * (1 + np.max(np.abs(beta)))
        dev = new_dev
        if done:
            converged = True
            break
    p = mu(eta)
    extreme = (p < 1e-8) | (p > 1 - 1e-8)
    separated = bool(extreme.any() and (dev < 1e-6 * d.size or not converged or np.max(np.abs(eta)) > 15))
    diagnostic = ""
    if separated or not converged:
        diagnostic = (
            f"coefficient norm over iterations: {norms[0]:.3g} -> {norms[-1]:.3g}; "
            f"{int(extreme.sum())} fitted probabilities at 0/1; deviance {dev:.3g}"
        )
        warnings.warn(
            f"{kind} propensity model: possible separation ({diagnostic})",
            SeparationWarning,
            stacklevel=2,
        )
        converged = converged and not separated
    w = np.maximum(dmu(eta), PROB_EPS) ** 2 / np.clip(p * (1 - p), PROB_EPS, None)
    try:
        cov = np.linalg.inv((X * w[:, None]).T @ X)
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(X.shape[1], np.nan)
    return PropensityModel(
        kind=kind,
        names=names,
        coef=beta,
        se=se,
        scores=np.clip(p, PROB_EPS, 1 - PROB_EPS),
        converged=converged,
        n_iter=it,
        deviance=dev,
        separated=separated,
        diagnostic=diagnostic,
    )


@dataclass(frozen=True)
class MatchConfig:
    """Matching options.

    Attributes
    ----------
    caliper : float
        Maximum pair distance in standard deviations.
    controls_per_treated : int
    replace : bool
        Whether a control may serve more than one treated unit.
    seed : int
        Drives the treated order and the tie-break keys.
    caliper_scale : {"score_sd", "covariate_sd"}
        ``"score_sd"``: ``|score_t - score_c| <= caliper * sd(score)``.
        ``"covariate_sd"``: additionally every covariate must satisfy
        ``|x_t - x_c| <= caliper * sd(x)``; candidates are still ranked by
        score distance.
    """

    caliper: float = 0.25
    controls_per_treated: int = 1
    replace: bool = False
    seed: int = 0
    caliper_scale: str = "score_sd"

    def __post_init__(self):
        if not self.caliper > 0:
            raise ValueError("caliper must be positive")
        if self.controls_per_treated < 1:
            raise ValueError("controls_per_treated must be at least 1")
        if self.caliper_scale not in ("score_sd", "covariate_sd"):
            raise ValueError(f"unknown caliper scale {self.caliper_scale!r}")


@dataclass(frozen=True)
class Matching:
    """Treated index -> matched control indices (row positions)."""

    pairs: Mapping[int, tuple[int, ...]]
    scores: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def treated(self) -> list[int]:
        return sorted(self.pairs)

    @property
    def controls(self) -> list[int]:
        return sorted({j for cs in self.pairs.values() for j in cs})


def match_units(
    scores,
    d,
    config: MatchConfig,
    X=None,
) -> Matching:
    """Greedy nearest-neighbour caliper matching on the propensity score.

    Treated units are visited in a random order drawn from ``config.seed``.
    Each takes up to ``controls_per_treated`` of the nearest eligible
    controls; equal distances are ordered by random keys from the same
    generator. Treated units with no control inside the caliper stay
    unmatched.
    """
    scores = np.asarray(scores, dtype=float)
    d = np.asarray(d).astype(bool)
    if scores.shape != d.shape:
        raise ValueError("scores and d have different lengths")
    rng = np.random.default_rng(config.seed)
    treated = np.flatnonzero(d)
    controls = np.flatnonzero(~d)
    order = rng.permutation(treated)
    tie = rng.random(controls.size)
    width = config.caliper * float(np.std(scores, ddof=1)) if scores.size > 1 else 0.0
    box = None
    if config.caliper_scale == "covariate_sd":
        if X is None:
            raise ValueError("covariate_sd calipers need the covariate matrix")
        X = _as_design(X)
        box = config.caliper * X.std(axis=0, ddof=1)
    available = np.ones(controls.size, dtype=bool)
    pairs: dict[int, tuple[int, ...]] = {}
    for t in order:
        dist = np.abs(scores[controls] - scores[t])
        ok = available & (dist <= width)
        if box is not None:
            ok &= np.all(np.abs(X[controls] - X[t]) <= box, axis=1)
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            continue
        ranked = cand[np.lexsort((tie[cand], dist[cand]))][: config.controls_per_treated]
        pairs[int(t)] = tuple(int(controls[j]) for j in ranked)
        if not config.replace:
            available[ranked] = False
    return Matching(pairs=pairs, scores=scores, d=d)


def att(matching: Matching, y) -> tuple[float, float, float]:
    """Effect on the matched treated with an Abadie-Imbens standard error.

    The estimate averages ``y_i - mean(y_j, j in C_i)`` over matched treated
    units. The variance is

        (1/N^2) [ sum_i (y_i - mean_C_i - tau)^2
                  + sum_j (K_j^2 - K'_j) s_j^2 ]

    where ``K_j = sum_i 1{j in C_i} / |C_i|``, ``K'_j`` the same sum of
    squared weights and ``s_j^2`` a conditional variance from the nearest
    other control on the score. Without replacement ``K_j^2 = K'_j`` and the
    second term vanishes.

    Returns
    -------
    estimate, se, p : float
        ``p`` is two-sided from the normal distribution.
    """
    if matching.n_matched == 0:
        raise ValueError("no matched treated units")
    y = np.asarray(y, dtype=float)
    t_idx = matching.treated
    diffs = np.array([y[i] - y[list(matching.pairs[i])].mean() for i in t_idx])
    tau = float(diffs.mean())
    N = diffs.size
    K, K2 = {}, {}
    for i in t_idx:
        cs = matching.pairs[i]
        for j in cs:
            K[j] = K.get(j, 0.0) + 1.0 / len(cs)
            K2[j] = K2.get(j, 0.0) + 1.0 / len(cs) ** 2
    extra = 0.0
    reuse = {j: K[j] ** 2 - K2[j] for j in K if K[j] ** 2 - K2[j] > 1e-15}
    if reuse:
        ctrl = np.flatnonzero(~matching.d)
        s = matching.scores[ctrl]
        for j, kk in reuse.items():
            dist = np.abs(s - matching.scores[j])
            dist[ctrl == j] = np.inf
            nn = ctrl[int(np.argmin(dist))]
            extra += kk * 0.5 * (y[j] - y[nn]) ** 2
    var = (np.sum((diffs - tau) ** 2) + extra) / N**2
    se = float(np.sqrt(var))
    if se > 0:
        p = float(2.0 * stats.norm.sf(abs(tau) / se))
    else:
        p = 1.0 if tau == 0 else 0.0
    return tau, se, p


def ks_bootstrap(a, b, n_boot: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Two-sample KS statistic with a bootstrap p-value.

    Both samples are redrawn with replacement from the pooled sample, which
    imposes the null of equal distributions and remains valid with ties.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    D = _ks_stat(a, b)
    rng = np.random.default_rng(seed)
    pooled = np.concatenate([a, b])
    hits = 0
    for _ in range(n_boot):
        ra = rng.choice(pooled, a.size, replace=True)
        rb = rng.choice(pooled, b.size, replace=True)
        if _ks_stat(ra, rb) >= D - 1e-12:
            hits += 1
    return D, hits / n_boot


def _ks_stat(a, b) -> float:
    a = np.sort(a)
    b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class BalanceRow:
    name: str
    mean_treated: float
    mean_control: float
    t_p: float
    ks_d: float
    ks_p: float
    ks_boot_p: float
    flag: str = ""


@dataclass(frozen=True)
class BalanceReport:
    rows: tuple[BalanceRow, ...]

    def balanced(self, alpha: float = 0.05) -> bool:
        """No covariate rejects equality at ``alpha`` on any of the three tests."""
        return all(min(r.t_p, r.ks_p, r.ks_boot_p) > alpha for r in self.rows)

    def to_tsv(self) -> str:
        lines = ["variable\tmean_treated\tmean_control\tt_p\tks_d\tks_p\tks_boot_p\tflag"]
        for r in self.rows:
            lines.append(
                f"{r.name}\t{r.mean_treated:.6g}\t{r.mean_control:.6g}\t{r.t_p:.4f}"
                f"\t{r.ks_d:.4f}\t{r.ks_p:.4f}\t{r.ks_boot_p:.4f}\t{r.flag}"
            )
        return "\n".join(lines) + "\n"


def balance(
    matching: Matching,
    X,
    names: Sequence[str] | None = None,
    n_boot: int = 1000,
    seed: int = 0,
) -> BalanceReport:
    """Covariate balance between matched treated and matched controls.

    Per covariate: Welch two-sided t-test of means, the two-sample KS test
    (scipy, exact or asymptotic) and a bootstrap KS p-value with ``n_boot``
    pooled resamples.
    """
    if matching.n_matched == 0:
        raise ValueError("no matched treated units")
    X = _as_design(X)
    names = _names(X.shape[1], names)
    ti = matching.treated
    ci = matching.controls
    rows = []
    for k, nm in enumerate(names):
        a, b = X[ti, k], X[ci, k]
        flag = ""
        if np.ptp(a) == 0 and np.ptp(b) == 0:
            flag = "zero variance"
            t_p = 1.0 if a[0] == b[0] else 0.0
        else:
            t_p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
            if not np.isfinite(t_p):
                t_p = 1.0
        ks = stats.ks_2samp(a, b)
        D, boot_p = ks_bootstrap(a, b, n_boot=n_boot, seed=seed + k)
        rows.append(
            BalanceRow(
                name=nm,
                mean_treated=float(a.mean()),
                mean_control=float(b.mean()),
                t_p=t_p,
                ks_d=float(ks.statistic),
                ks_p=float(ks.pvalue),
                ks_boot_p=boot_p,
                flag=flag,
            )
        )
    return BalanceReport(tuple(rows))


@dataclass(frozen=True, eq=False)
class MatchResult:
    model: PropensityModel
    matching: Matching
    att: float
    se: float
    p: float
    balance: BalanceReport | None
    config: MatchConfig

    @property
    def n_matched(self) -> int:
        return self.matching.n_matched

    def pairs_tsv(self, ids: Sequence[str] | None = None) -> str:
        lab = (lambda i: ids[i]) if ids is not None else str
        lines = ["treated\tcontrols"]
        for i in self.matching.treated:
            lines.append(f"{lab(i)}\t{','.join(lab(j) for j in self.matching.pairs[i])}")
        return "\n".join(lines) + "\n"


def run_matching(
    d,
    X,
    y,
    config: MatchConfig,
    kind: str = "logit",
    names: Sequence[str] | None = None,
    balance_covariates=None,
    balance_names: Sequence[str] | None = None,
    n_boot: int = 1000,
) -> MatchResult:
    """Propensity fit, matching, effect estimate and balance in one call.

    ``X`` is the propensity design (with its constant); balance is checked on
    ``balance_covariates`` when given, otherwise on the non-constant columns
    of ``X``.
    """
    X = _as_design(X)
    model = fit_propensity(d, X, kind=kind, names=names)
    m = match_units(model.scores, d, config, X=X[:, ~np.all(X == X[0], axis=0)])
    est, se, p = att(m, y)
    if balance_covariates is None:
        keep = ~np.all(X == X[0], axis=0)
        balance_covariates = X[:, keep]
        balance_names = [nm for nm, k in zip(model.names, keep) if k]
    bal = balance(m, balance_covariates, balance_names, n_boot=n_boot, seed=config.seed)
    return MatchResult(model=model, matching=m, att=est, se=se, p=p, balance=bal, config=config)
