"""Command-line interface: ``slrgrowth <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import (
    EXTRAPOLATIONS,
    MODELS,
    PS_MODELS,
    SLR_DATASETS,
    SUBSAMPLES,
    ConfigError,
    MatchSpec,
    VariantSpec,
    load_config,
    tomllib,
)

__all__ = ["main", "build_parser"]


def _period(text: str) -> int:
    try:
        start, end = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("period must look like 1990:2012") from None
    if start != 1990 or not 2000 <= end <= 2012:
        raise argparse.ArgumentTypeError("periods run from 1990 to an end year in 2000..2012")
    return end


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slrgrowth", description="Sea-level rise and county growth models.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full battery from a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--output", type=Path, help="output directory (overrides the config)")
    run.add_argument("--workers", type=int, help="worker threads (overrides the config)")
    run.add_argument("--no-matching", action="store_true", help="skip the matching step")

    fit = sub.add_parser("fit", help="fit one model for one period")
    fit.add_argument("--config", required=True, type=Path)
    fit.add_argument("--model", choices=MODELS, default="sar")
    fit.add_argument("--period", type=_period, default=2012, help="e.g. 1990:2012")
    fit.add_argument("--extrapolation", choices=EXTRAPOLATIONS, default="nearest")
    fit.add_argument("--slr-dataset", choices=SLR_DATASETS, default="full")
    fit.add_argument("--subsample", choices=SUBSAMPLES, default="all")
    fit.add_argument("--depletion-k", type=int, default=0)
    fit.add_argument("--finance", help="finance variant name from the config")

    match = sub.add_parser("match", help="propensity-score matching")
    match.add_argument("--config", required=True, type=Path)
    match.add_argument("--ps-model", choices=PS_MODELS, default="logit")
    match.add_argument("--caliper", type=float, default=0.035)
    match.add_argument("--controls-per-treated", type=int, default=1)
    match.add_argument("--replace", action="store_true")
    match.add_argument("--caliper-scale", choices=("score_sd", "covariate_sd"), default="score_sd")
    match.add_argument("--seed", type=int)
    match.add_argument("--n-boot", type=int)
    match.add_argument("--output", type=Path, help="directory for balance and pair tables")

    fig = sub.add_parser("figure", help="SVG of total sea-level-rise effects by coastal county")
    fig.add_argument("--config", required=True, type=Path)
    fig.add_argument("--output", required=True, type=Path)
    fig.add_argument("--period", type=_period, default=2012)

    syn = sub.add_parser("synth", help="Monte Carlo evaluation on a synthetic lattice")
    syn.add_argument("--spec", required=True, type=Path, help="TOML with a [dgp] table")
    syn.add_argument("--reps", type=int, required=True)
    syn.add_argument("--estimator", default=None)
    syn.add_argument("--workers", type=int, default=1)
    syn.add_argument("--output", type=Path, help="directory for truth.json and evaluation.tsv")

    fx = sub.add_parser("make-fixture", help="write the synthetic county study")
    fx.add_argument("--output", required=True, type=Path)
    fx.add_argument("--seed", type=int)
    return p


def _cmd_run(args) -> int:
    from .pipeline import run_battery, write_report

    cfg = load_config(args.config)
    changes = {}
    if args.output:
        changes["output"] = args.output
    if args.workers:
        changes["workers"] = args.workers
    cfg = dataclasses.replace(cfg, **changes)
    report = run_battery(cfg, with_matching=not args.no_matching)
    out = write_report(report)
    failed = [c for c in report.cells if c.status != "ok"]
    print(f"{len(report.cells)} cells, {len(failed)} failed; tables in {out}")
    for c in failed:
        print(f"  {c.variant} {c.period}: {c.error}", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    from .pipeline import load_study, run_cell

    cfg = load_config(args.config)
    finance = {}
    if args.finance:
        if args.finance not in cfg.finance_variants:
            raise ConfigError(f"unknown finance variant {args.finance!r}")
        finance = {"finance": cfg.finance_variants[args.finance]}
    variant = VariantSpec(
        name="cli", subsample=args.subsample, depletion_k=args.depletion_k,
        extrapolation=args.extrapolation, slr_dataset=args.slr_dataset, model=args.model, **finance,
    )
    cell = run_cell(load_study(cfg.data), variant, args.period, cfg.depletion_groups)
    if cell.status != "ok":
        print(cell.error, file=sys.stderr)
        return 1
    t = cell.tsls
    print(f"# n={cell.n} beta={t.beta:.6g} ({t.stage2.se[1]:.3g}) first_stage_F={t.first_stage_f:.4g}"
          f" sargan={t.sargan[0]:.4g} (p={t.sargan[1]:.3g})")
    print("term\testimate\tse\tp\tstars")
    for r in cell.fit.table():
        print(f"{r['name']}\t{r['estimate']:.6g}\t{r['se']:.6g}\t{r['p']:.4g}\t{r['stars']}")
    return 0


def _cmd_match(args) -> int:
    from .pipeline import _matching_tsv, load_study, run_matching_specs

    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.n_boot is not None:
        changes["n_boot"] = args.n_boot
    cfg = dataclasses.replace(cfg, **changes)
    spec = MatchSpec(ps_model=args.ps_model, caliper=args.caliper,
                     controls_per_treated=args.controls_per_treated, replace=args.replace,
                     caliper_scale=args.caliper_scale)
    results = run_matching_specs(load_study(cfg.data), cfg, [spec])
    sys.stdout.write(_matching_tsv(results))
    _, res, err, ids, _, _ = results[0]
    if res is None:
        print(err, file=sys.stderr)
        return 1
    if args.output:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / "balance.tsv").write_text(res.balance.to_tsv(), encoding="utf-8")
        (args.output / "pairs.tsv").write_text(res.pairs_tsv(ids), encoding="utf-8")
    else:
        sys.stdout.write(res.balance.to_tsv())
    return 0


def _cmd_figure(args) -> int:
    from .figure import figure_impacts
    from .pipeline import load_study, run_cell
    from .spatial import impacts

    cfg = load_config(args.config)
    study = load_study(cfg.data)
    if not study.coast_order:
        raise ConfigError("the figure needs a coast_order file in [data]")
    cell = run_cell(study, VariantSpec("figure"), args.period)
    if cell.status != "ok":
        print(cell.error, file=sys.stderr)
        return 1
    imp = impacts(cell.fit, cell.W)
    slr = study.slr_mm()
    counties = [(f, s, float(slr[f])) for f, s in study.coast_order]
    args.output.write_text(figure_impacts(imp["slr"][2], imp["slr2"][2], counties), encoding="utf-8")
    print(f"wrote {args.output}")
    return 0


def _cmd_synth(args) -> int:
    from .synth import ESTIMATORS, DgpSpec, evaluate, generate_truth

    with open(args.spec, "rb") as fh:
        raw = tomllib.load(fh)
    unknown = sorted(set(raw) - {"dgp", "evaluate"})
    if unknown:
        raise ConfigError(f"unknown table(s) in {args.spec}: {', '.join(unknown)}")
    spec = DgpSpec.from_mapping(raw.get("dgp", {}))
    ev = dict(raw.get("evaluate", {}))
    bad = sorted(set(ev) - {"estimator", "alpha"})
    if bad:
        raise ConfigError(f"unknown key(s) in [evaluate]: {', '.join(bad)}")
    name = args.estimator or ev.get("estimator", "sar")
    if name not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
    report = evaluate(name, spec, args.reps, alpha=float(ev.get("alpha", 0.05)), workers=args.workers)
    truth = {"spec": dataclasses.asdict(spec), "truth": generate_truth(spec), "estimator": name}
    if args.output:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
        (args.output / "evaluation.tsv").write_text(report.to_tsv())
    print(json.dumps(truth, sort_keys=True))
    sys.stdout.write(report.to_tsv())
    return 0


def _cmd_fixture(args) -> int:
    from .fixture import FixtureSpec, write_fixture

    spec = FixtureSpec() if args.seed is None else FixtureSpec(seed=args.seed)
    info = write_fixture(args.output, spec)
    for role, meta in info.items():
        print(f"{role}\t{meta['path']}")
    return 0


COMMANDS = {
    "run": _cmd_run,
    "fit": _cmd_fit,
    "match": _cmd_match,
    "figure": _cmd_figure,
    "synth": _cmd_synth,
    "make-fixture": _cmd_fixture,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"slrgrowth: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
