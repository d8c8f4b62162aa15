"""
Battery configuration files (TOML).

Every table and key is checked against a fixed schema; unknown keys are an
error so that typos cannot silently fall back to defaults. Relative paths are
resolved against the directory holding the configuration file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .design import BASE_FINANCE

__all__ = [
    "ConfigError",
    "DataPaths",
    "VariantSpec",
    "MatchSpec",
    "BatteryConfig",
    "load_config",
    "parse_config",
    "default_variants",
]

MODELS = ("sar", "sem", "sac", "gs2sls", "3sls")
SUBSAMPLES = ("all", "near_coast", "coastal", "depletion", "no_outliers")
EXTRAPOLATIONS = ("nearest", "idw")
SLR_DATASETS = ("full", "window1979_2007")
PS_MODELS = ("logit", "probit", "lpm")


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


@dataclass(frozen=True)
class DataPaths:
    counties: Path
    adjacency: Path
    stations: Path
    island_links: Path | None = None
    stations_window: Path | None = None
    coast_order: Path | None = None

    def items(self):
        return [(k, getattr(self, k)) for k in
                ("counties", "adjacency", "island_links", "stations", "stations_window", "coast_order")
                if getattr(self, k) is not None]


@dataclass(frozen=True)
class VariantSpec:
    """One column of the robustness battery.

    Attributes
    ----------
    subsample : {"all", "near_coast", "coastal", "depletion", "no_outliers"}
    depletion_k : int
        Number of depletion groups excluded (cumulative) when
        ``subsample == "depletion"``.
    finance : tuple of str
        Government-finance columns.
    model : {"sar", "sem", "sac", "gs2sls", "3sls"}
        Estimator for the third-stage equation.
    """

    name: str
    subsample: str = "all"
    depletion_k: int = 0
    extrapolation: str = "nearest"
    slr_dataset: str = "full"
    finance: tuple[str, ...] = BASE_FINANCE
    model: str = "sar"

    def __post_init__(self):
        _choice("subsample", self.subsample, SUBSAMPLES)
        _choice("extrapolation", self.extrapolation, EXTRAPOLATIONS)
        _choice("slr_dataset", self.slr_dataset, SLR_DATASETS)
        _choice("model", self.model, MODELS)
        if self.subsample == "depletion" and not 1 <= self.depletion_k <= 4:
            raise ConfigError(f"variant {self.name}: depletion_k must lie in 1..4")


@dataclass(frozen=True)
class MatchSpec:
    ps_model: str = "logit"
    caliper: float = 0.035
    controls_per_treated: int = 1
    replace: bool = False
    caliper_scale: str = "score_sd"
    extra_squares: tuple[str, ...] = ()
    full_width: bool = False

    def __post_init__(self):
        _choice("ps_model", self.ps_model, PS_MODELS)
        _choice("caliper_scale", self.caliper_scale, ("score_sd", "covariate_sd"))
        if not self.caliper > 0:
            raise ConfigError("caliper must be positive")
        if self.controls_per_treated < 1:
            raise ConfigError("controls_per_treated must be at least 1")


@dataclass(frozen=True)
class BatteryConfig:
    data: DataPaths
    periods: tuple[int, ...] = tuple(range(2012, 1999, -1))
    variants: tuple[VariantSpec, ...] = ()
    depletion_groups: tuple[tuple[str, ...], ...] = ()
    finance_variants: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    matching: tuple[MatchSpec, ...] = ()
    n_boot: int = 1000
    seed: int = 0
    workers: int = 1
    base_period: int = 2012
    output: Path = Path("out")
    source: Mapping[str, Any] = field(default_factory=dict, repr=False)


_SCHEMA = {
    "data": {"counties", "adjacency", "island_links", "stations", "stations_window", "coast_order"},
    "battery": {"periods", "workers", "seed", "output", "variants", "base_period",
                "extrapolation", "slr_dataset", "model"},
    "depletion": {"groups"},
    "finance": None,  # free names -> column lists
    "matching": {"n_boot", "specs"},
    "variants": {"name", "subsample", "depletion_k", "extrapolation", "slr_dataset", "finance", "model"},
}
_SPEC_KEYS = {"ps_model", "caliper", "controls_per_treated", "replace", "caliper_scale",
              "extra_squares", "full_width"}


def _choice(label, value, options):
    if value not in options:
        raise ConfigError(f"{label} must be one of {', '.join(options)}; got {value!r}")


def _check_keys(where: str, data: Mapping, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def default_variants(
    finance_variants: Mapping[str, tuple[str, ...]] | None = None,
    n_depletion: int = 4,
    extrapolation: str = "nearest",
    slr_dataset: str = "full",
    model: str = "sar",
) -> tuple[VariantSpec, ...]:
    """The standard battery: base model, White/GS2SLS, outlier trimming,
    cumulative depletion exclusions, alternative SLR data and extrapolation,
    near-coast and coastal subsamples, and each finance variant."""
    common = dict(extrapolation=extrapolation, slr_dataset=slr_dataset)
    out = [
        VariantSpec("base", model=model, **common),
        VariantSpec("white", model="gs2sls", **common),
        VariantSpec("no_outliers", subsample="no_outliers", model=model, **common),
    ]
    out += [VariantSpec(f"depletion_{k}", subsample="depletion", depletion_k=k, model=model, **common)
            for k in range(1, n_depletion + 1)]
    out += [
        VariantSpec("slr_window", slr_dataset="window1979_2007", extrapolation=extrapolation, model=model),
        VariantSpec("idw", extrapolation="idw", slr_dataset=slr_dataset, model=model),
        VariantSpec("near_coast", subsample="near_coast", model=model, **common),
        VariantSpec("coastal", subsample="coastal", model="3sls", **common),
    ]
    for name, cols in (finance_variants or {}).items():
        out.append(VariantSpec(f"finance_{name}", finance=tuple(cols), model=model, **common))
    return tuple(out)


def parse_config(raw: Mapping[str, Any], base_dir: str | Path = ".") -> BatteryConfig:
    """Validate a parsed TOML mapping and build a :class:`BatteryConfig`."""
    base_dir = Path(base_dir)
    _check_keys("top level", raw, _SCHEMA)
    for section, allowed in _SCHEMA.items():
        if section in raw and allowed is not None and section != "variants":
            if not isinstance(raw[section], Mapping):
                raise ConfigError(f"[{section}] must be a table")
            _check_keys(section, raw[section], allowed)

    data = raw.get("data")
    if not data:
        raise ConfigError("missing [data] section")
    for key in ("counties", "adjacency", "stations"):
        if key not in data:
            raise ConfigError(f"[data] needs {key!r}")
    data_paths = DataPaths(**{k: (base_dir / v).resolve() for k, v in data.items()})

    bat = raw.get("battery", {})
    periods = tuple(int(p) for p in bat.get("periods", range(2012, 1999, -1)))
    bad = [p for p in periods if not 2000 <= p <= 2012]
    if bad or not periods:
        raise ConfigError(f"periods must lie in 2000..2012; got {list(periods)}")
    base_period = int(bat.get("base_period", 2012 if 2012 in periods else periods[0]))
    if base_period not in periods:
        raise ConfigError("base_period must be one of the periods")

    groups = tuple(tuple(str(s) for s in g) for g in raw.get("depletion", {}).get("groups", ()))
    if len(groups) > 4:
        raise ConfigError("at most four depletion groups")
    finance = {str(k): tuple(str(c) for c in v) for k, v in raw.get("finance", {}).items()}
    for k, v in raw.get("finance", {}).items():
        if not isinstance(v, list):
            raise ConfigError(f"[finance] {k} must be a list of column names")

    defaults = dict(
        extrapolation=bat.get("extrapolation", "nearest"),
        slr_dataset=bat.get("slr_dataset", "full"),
        model=bat.get("model", "sar"),
    )
    variants = list(default_variants(finance, len(groups), **defaults))
    if "variants" in bat:
        by_name = {v.name: v for v in variants}
        missing = [nm for nm in bat["variants"] if nm not in by_name]
        if missing:
            raise ConfigError(f"unknown variant name(s): {', '.join(missing)}")
        variants = [by_name[nm] for nm in bat["variants"]]
    for entry in raw.get("variants", []):
        _check_keys("variants", entry, _SCHEMA["variants"])
        entry = dict(entry)
        if "finance" in entry:
            if entry["finance"] not in finance:
                raise ConfigError(f"unknown finance variant {entry['finance']!r}")
            entry["finance"] = finance[entry["finance"]]
        variants.append(VariantSpec(**entry))
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate variant names")
    if any(v.subsample == "depletion" and v.depletion_k > len(groups) for v in variants):
        raise ConfigError("depletion variant exceeds the configured groups")

    match = raw.get("matching", {})
    specs = []
    for entry in match.get("specs", []):
        _check_keys("matching.specs", entry, _SPEC_KEYS)
        entry = dict(entry)
        if "extra_squares" in entry:
            entry["extra_squares"] = tuple(entry["extra_squares"])
        specs.append(MatchSpec(**entry))

    return BatteryConfig(
        data=data_paths,
        periods=periods,
        variants=tuple(variants),
        depletion_groups=groups,
        finance_variants=finance,
        matching=tuple(specs),
        n_boot=int(match.get("n_boot", 1000)),
        seed=int(bat.get("seed", 0)),
        workers=int(bat.get("workers", 1)),
        base_period=base_period,
        output=(base_dir / bat.get("output", "out")).resolve(),
        source=raw,
    )


def load_config(path: str | Path) -> BatteryConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)
