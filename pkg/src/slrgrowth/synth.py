"""
Synthetic spatial systems with known parameters, and a Monte Carlo harness
that scores estimators against them.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from .weights import ContiguityWeights, build_weights

__all__ = [
    "DgpSpec",
    "Draw",
    "EvalReport",
    "lattice_weights",
    "generate",
    "generate_matching",
    "evaluate",
    "ESTIMATORS",
]


def lattice_weights(rows: int, cols: int, queen: bool = False) -> ContiguityWeights:
    """Rook (or queen) contiguity on a ``rows x cols`` grid, row-major ids."""
    ids = [f"L{i:06d}" for i in range(rows * cols)]
    pairs = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                pairs.append((ids[k], ids[k + 1]))
            if r + 1 < rows:
                pairs.append((ids[k], ids[k + cols]))
                if queen and c + 1 < cols:
                    pairs.append((ids[k], ids[k + cols + 1]))
                if queen and c > 0:
                    pairs.append((ids[k], ids[k + cols - 1]))
    return build_weights(ids, pairs)


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process.

    ``y = (I - rho W)^-1 (X beta + u)``, ``u = (I - lam W)^-1 eps`` with
    ``X = [1, N(0, 1) columns]``. Errors are ``N(0, sigma2)``, or with
    ``hetero="covariate"`` ``N(0, sigma2 * x1^2)`` where ``x1`` is the first
    non-constant column (so the average variance stays ``sigma2``).

    Attributes
    ----------
    rows, cols : int
        Lattice shape; ``n = rows * cols``.
    rho, lam : float
    beta : tuple of float
        Intercept first.
    sigma2 : float
    hetero : {None, "covariate"}
    queen : bool
        Queen instead of rook contiguity.
    effect : float
        Treatment effect in matching scenarios.
    seed : int
    """

    rows: int = 20
    cols: int = 20
    rho: float = 0.0
    lam: float = 0.0
    beta: tuple = (1.0, 1.0, -1.0)
    sigma2: float = 1.0
    hetero: str | None = None
    queen: bool = False
    effect: float = 0.0
    seed: int = 0

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @classmethod
    def from_mapping(cls, data: Mapping) -> "DgpSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown DGP keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if "beta" in data:
            data["beta"] = tuple(float(b) for b in data["beta"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class Draw:
    """One synthetic data set with its truth record."""

    y: np.ndarray
    X: np.ndarray
    W: ContiguityWeights
    u: np.ndarray
    eps: np.ndarray
    truth: Mapping[str, float]
    d: np.ndarray | None = None


class _Solver:
    """Cached sparse LU of ``I - a W``."""

    def __init__(self, W: ContiguityWeights, a: float):
        self.a = a
        self.lu = None if a == 0 else splu(
            (sparse.identity(W.n, format="csc") - a * W.sparse).tocsc()
        )

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return v.copy() if self.lu is None else self.lu.solve(v)


def _feasible(W: ContiguityWeights, a: float, label: str) -> None:
    omega = W.eigenvalues
    if not 1.0 / omega[0] < a < 1.0 / omega[-1]:
        raise ValueError(f"{label}={a} infeasible for W (interval {1/omega[0]:.4f}, {1/omega[-1]:.4f})")


def generate(
    spec: DgpSpec,
    W: ContiguityWeights | None = None,
    rng: np.random.Generator | None = None,
    _solvers: tuple | None = None,
) -> Draw:
    """Draw one data set from ``spec``.

    Parameters
    ----------
    W : ContiguityWeights, optional
        Defaults to the lattice of ``spec``.
    rng : Generator, optional
        Defaults to ``default_rng(spec.seed)``.
    """
    W = W if W is not None else lattice_weights(spec.rows, spec.cols, spec.queen)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if _solvers is None:
        _feasible(W, spec.rho, "rho")
        _feasible(W, spec.lam, "lam")
        _solvers = (_Solver(W, spec.rho), _Solver(W, spec.lam))
    solve_rho, solve_lam = _solvers
    n, k = W.n, len(spec.beta)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    sd = np.sqrt(spec.sigma2)
    if spec.hetero is None:
        scale = np.full(n, sd)
    elif spec.hetero == "covariate":
        scale = sd * np.abs(X[:, 1])
    else:
        raise ValueError(f"unknown heteroscedasticity rule {spec.hetero!r}")
    eps = scale * rng.standard_normal(n)
    u = solve_lam(eps)
    y = solve_rho(X @ np.asarray(spec.beta, dtype=float) + u)
    truth = {"rho": spec.rho, "lam": spec.lam, "sigma2": spec.sigma2}
    truth.update({f"beta{j}": float(b) for j, b in enumerate(spec.beta)})
    return Draw(y=y, X=X, W=W, u=u, eps=eps, truth=truth)


def generate_matching(
    n: int,
    effect: float = 0.0,
    rng: np.random.Generator | None = None,
    seed: int = 0,
    gamma: Sequence[float] = (-1.5, 0.8, -0.5),
    outcome: Sequence[float] = (0.0, 1.0, 0.5),
) -> Draw:
    """Matching scenario: ``d ~ Bernoulli(logit(X gamma))``,
    ``y = X outcome + effect * d + N(0, 1)``, ``X = [1, N(0, 1), N(0, 1)]``."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, len(gamma) - 1))])
    p = 1.0 / (1.0 + np.exp(-(X @ np.asarray(gamma))))
    d = (rng.random(n) < p).astype(float)
    eps = rng.standard_normal(n)
    y = X @ np.asarray(outcome) + effect * d + eps
    return Draw(y=y, X=X, W=None, u=eps, eps=eps, truth={"att": effect}, d=d)


# ---------------------------------------------------------------------------
# Monte Carlo harness


Estimator = Callable[[Draw], Mapping]
"""Returns ``{"params": {name: (est, se)}, "tests": {name: p}}``."""


@dataclass(frozen=True)
class EvalReport:
    """Aggregated replication results.

    ``params`` rows hold truth, mean estimate, bias, RMSE, empirical SD,
    mean reported SE and 95% CI coverage. ``tests`` rows hold rejection
    rates at ``alpha``.
    """

    spec: DgpSpec
    replications: int
    failures: int
    params: Mapping[str, Mapping[str, float]]
    tests: Mapping[str, float]
    alpha: float = 0.05
    errors: tuple = field(default=(), repr=False)

    def to_tsv(self) -> str:
        lines = ["kind\tname\ttruth\tmean\tbias\trmse\tsd\tmean_se\tcoverage_or_rate"]
        for nm, r in self.params.items():
            lines.append(
                f"param\t{nm}\t{r['truth']:.6g}\t{r['mean']:.6g}\t{r['bias']:.6g}\t{r['rmse']:.6g}"
                f"\t{r['sd']:.6g}\t{r['mean_se']:.6g}\t{r['coverage']:.4f}"
            )
        for nm, rate in self.tests.items():
            lines.append(f"test\t{nm}\t\t\t\t\t\t\t{rate:.4f}")
        lines.append(f"meta\treplications\t{self.replications}\t\t\t\t\t\t")
        lines.append(f"meta\tfailures\t{self.failures}\t\t\t\t\t\t")
        return "\n".join(lines) + "\n"


def _run_one(estimator, spec, W, solvers, seed_seq):
    rng = np.random.default_rng(seed_seq)
    try:
        draw = generate(spec, W, rng, solvers)
        return estimator(draw), None
    except Exception as exc:  # counted, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def evaluate(
    estimator: Estimator | str,
    spec: DgpSpec,
    replications: int,
    alpha: float = 0.05,
    workers: int = 1,
    truth: Mapping[str, float] | None = None,
    min_replications: int = 100,
) -> EvalReport:
    """Run ``replications`` draws from ``spec`` through ``estimator``.

    Replication ``r`` uses the ``r``-th child of ``SeedSequence(spec.seed)``,
    so results do not depend on ``workers``. Estimator exceptions are counted
    as failures.
    """
    if replications < min_replications:
        raise ValueError(f"need at least {min_replications} replications")
    if isinstance(estimator, str):
        estimator = ESTIMATORS[estimator]
    W = lattice_weights(spec.rows, spec.cols, spec.queen)
    _feasible(W, spec.rho, "rho")
    _feasible(W, spec.lam, "lam")
    solvers = (_Solver(W, spec.rho), _Solver(W, spec.lam))
    seeds = np.random.SeedSequence(spec.seed).spawn(replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda s: _run_one(estimator, spec, W, solvers, s), seeds))
    else:
        results = [_run_one(estimator, spec, W, solvers, s) for s in seeds]
    return summarize(results, spec, truth or generate_truth(spec), alpha)


def generate_truth(spec: DgpSpec) -> dict:
    t = {"rho": spec.rho, "lam": spec.lam, "sigma2": spec.sigma2, "att": spec.effect}
    t.update({f"beta{j}": float(b) for j, b in enumerate(spec.beta)})
    return t


def summarize(results, spec, truth, alpha=0.05) -> EvalReport:
    ok = [r for r, err in results if r is not None]
    errors = tuple(err for r, err in results if err is not None)
    params: dict[str, dict[str, float]] = {}
    tests: dict[str, float] = {}
    if ok:
        z = stats.norm.ppf(0.975)
        for nm in ok[0].get("params", {}):
            est = np.array([r["params"][nm][0] for r in ok])
            se = np.array([r["params"][nm][1] for r in ok])
            tv = truth.get(nm, np.nan)
            params[nm] = {
                "truth": tv,
                "mean": float(est.mean()),
                "bias": float(est.mean() - tv),
                "rmse": float(np.sqrt(np.mean((est - tv) ** 2))),
                "sd": float(est.std(ddof=1)),
                "mean_se": float(se.mean()),
                "coverage": float(np.mean(np.abs(est - tv) <= z * se)),
            }
        for nm in ok[0].get("tests", {}):
            ps = np.array([r["tests"][nm] for r in ok])
            tests[nm] = float(np.mean(ps < alpha))
    return EvalReport(
        spec=spec,
        replications=len(results),
        failures=len(errors),
        params=params,
        tests=tests,
        alpha=alpha,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# ready-made estimator handles


def _sar(draw: Draw) -> dict:
    from .spatial import fit_sar

    f = fit_sar(draw.y, draw.X, draw.W)
    params = {"rho": (f.rho, f.rho_se)}
    params.update({f"beta{j}": (b, s) for j, (b, s) in enumerate(zip(f.beta, f.beta_se))})
    return {"params": params}


def _sem(draw: Draw) -> dict:
    from .spatial import fit_sem

    f = fit_sem(draw.y, draw.X, draw.W)
    params = {"lam": (f.lam, f.lam_se)}
    params.update({f"beta{j}": (b, s) for j, (b, s) in enumerate(zip(f.beta, f.beta_se))})
    return {"params": params}


def _sac(draw: Draw) -> dict:
    from .spatial import fit_sac

    f = fit_sac(draw.y, draw.X, draw.W)
    params = {"rho": (f.rho, f.rho_se), "lam": (f.lam, f.lam_se)}
    params.update({f"beta{j}": (b, s) for j, (b, s) in enumerate(zip(f.beta, f.beta_se))})
    return {"params": params}


def _gs2sls(draw: Draw) -> dict:
    from .spatial import fit_gs2sls_white

    f = fit_gs2sls_white(draw.y, draw.X, draw.W)
    params = {"rho": (f.rho, f.rho_se)}
    params.update({f"beta{j}": (b, s) for j, (b, s) in enumerate(zip(f.beta, f.beta_se))})
    return {"params": params}


def _lm(draw: Draw) -> dict:
    from .regression import ols
    from .spatial import lm_tests

    rep = lm_tests(ols(draw.y, draw.X), draw.W)
    return {
        "tests": {
            "lm_error": rep.lm_error[1],
            "lm_lag": rep.lm_lag[1],
            "robust_lm_error": rep.robust_lm_error[1],
            "robust_lm_lag": rep.robust_lm_lag[1],
        }
    }


def _lm_sar_resid(draw: Draw) -> dict:
    from .spatial import fit_sar, lm_residual_autocorr

    f = fit_sar(draw.y, draw.X, draw.W)
    return {"tests": {"lm_residual_autocorr": lm_residual_autocorr(f, draw.W)[1]}}


ESTIMATORS: dict[str, Estimator] = {
    "sar": _sar,
    "sem": _sem,
    "sac": _sac,
    "gs2sls": _gs2sls,
    "lm": _lm,
    "lm_sar_resid": _lm_sar_resid,
}
