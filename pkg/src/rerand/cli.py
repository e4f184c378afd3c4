"""Command-line interface: design, analyze, asymptotics, simulate.

Exit codes: 0 success, 2 configuration/usage error, 3 rejection-cap abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .asymptotics import population_report
from .design import Assignment, DesignSpec, RejectionCapError, draw_rem, mahalanobis
from .dists import chi2_quantile
from .estimators import (FitResult, TrialData, adjusted_estimate, huber_white,
                         lin_fit, neyman_variance)
from .fpstats import FinitePopulation
from .inference import confidence_interval, estimated_distribution
from .simlab import (CsvPopulationModel, Example1Model, EstimatorSpec,
                     ScenarioConfig, run_monte_carlo)


class ConfigError(ValueError):
    pass


def _read_table(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        rows = [row for row in reader if row]
    if not header or not rows:
        raise ConfigError(f"{path}: empty CSV or missing header")
    data = np.array([[float(v) for v in row] for row in rows])
    return header, data


def _cols(header: list[str], data: np.ndarray, names: list[str]) -> np.ndarray:
    missing = [c for c in names if c not in header]
    if missing:
        raise ConfigError(f"columns not in CSV: {missing}")
    return data[:, [header.index(c) for c in names]]


def _split_cols(arg: str | None) -> list[str]:
    return [c.strip() for c in arg.split(",") if c.strip()] if arg else []


def _resolve_a(args, k: int) -> float:
    if getattr(args, "threshold", None) is not None:
        return args.threshold
    if getattr(args, "threshold_quantile", None) is not None:
        return chi2_quantile(k, args.threshold_quantile)
    return math.inf


def cmd_design(args) -> int:
    header, data = _read_table(args.data)
    xnames = _split_cols(args.x_cols)
    if not xnames:
        raise ConfigError("--x-cols is required")
    x = _cols(header, data, xnames)
    n = x.shape[0]
    pop = FinitePopulation(y1=np.zeros(n), y0=np.zeros(n), x=x)
    a = _resolve_a(args, pop.k)
    kind = "rem" if math.isfinite(a) else "cre"
    spec = DesignSpec(kind=kind, n1=args.n1, a=a, max_attempts=args.max_attempts)
    rng = np.random.default_rng(args.seed)
    assignment, attempts = draw_rem(pop, spec, rng)
    m = mahalanobis(pop, assignment)

    out_csv = Path(args.out) if args.out else None
    lines = ["unit,z"] + [f"{i},{int(z)}" for i, z in enumerate(assignment.z)]
    if out_csv:
        out_csv.write_text("\n".join(lines) + "\n")
    record = {"M": m, "attempts": attempts, "a": a, "seed": args.seed}
    print(json.dumps(record, indent=2))
    if not out_csv:
        print("\n".join(lines))
    return 0


def cmd_analyze(args) -> int:
    header, data = _read_table(args.data)
    y = _cols(header, data, [args.outcome])[:, 0]
    zvec = _cols(header, data, [args.treat])[:, 0]
    if not np.all((zvec == 0) | (zvec == 1)):
        raise ConfigError("treatment column must be binary 0/1")
    w = _cols(header, data, _split_cols(args.w_cols))
    xnames = _split_cols(args.x_cols)
    x = _cols(header, data, xnames) if xnames else None
    d = TrialData(y=y, z=Assignment(zvec.astype(int)), w=w, x=x)

    if args.estimator == "custom":
        if args.beta1 is None or args.beta0 is None:
            raise ConfigError("custom estimator needs --beta1 and --beta0")
        beta1 = np.array([float(v) for v in args.beta1.split(",")])
        beta0 = np.array([float(v) for v in args.beta0.split(",")])
    elif args.estimator == "lin":
        fit0 = lin_fit(d)
        beta1, beta0 = fit0.beta1_hat, fit0.beta0_hat
    else:
        beta1 = np.zeros(d.j)
        beta0 = np.zeros(d.j)

    tau_hat = adjusted_estimate(d, beta1, beta0)
    v_hat, r2_hat = neyman_variance(d, beta1, beta0)
    v_hw = huber_white(d)

    knows = x is not None and (args.design_a is not None
                               or args.threshold_quantile is not None)
    k = x.shape[1] if x is not None else None
    a = None
    if knows:
        a = (args.design_a if args.design_a is not None
             else chi2_quantile(k, args.threshold_quantile))
    fit = FitResult(tau_hat=tau_hat, beta1_hat=beta1, beta0_hat=beta0,
                    v_hat=v_hat, r2_hat_x=r2_hat if knows else 0.0, v_hw=v_hw)
    dist = estimated_distribution(fit, knows_design=knows, k=k, a=a)
    interval = confidence_interval(tau_hat, dist, d.n, args.alpha)
    print(json.dumps({
        "tau_hat": tau_hat,
        "v_hat": v_hat,
        "v_hw": v_hw,
        "r2_hat_x": fit.r2_hat_x,
        "ci": interval.to_dict(),
        "method": interval.method,
        "estimator": args.estimator,
    }, indent=2))
    return 0


def cmd_asymptotics(args) -> int:
    pop = FinitePopulation.from_csv(args.data)
    a = _resolve_a(args, max(pop.k, 1))
    print(json.dumps(population_report(pop, args.n1 / pop.n, a), indent=2))
    return 0


_ESTIMATOR_TOKENS = {
    "diff": ("diff", "none"),
    "diff_w": ("diff", "w"),
    "lin": ("lin", "w"),
    "lin_w": ("lin", "w"),
    "lin_x": ("lin", "x"),
    "lin_xw": ("lin", "xw"),
}


def _estimators_from_tokens(tokens: str) -> tuple:
    specs = []
    for tok in _split_cols(tokens):
        if tok not in _ESTIMATOR_TOKENS:
            raise ConfigError(f"unknown estimator token {tok!r}; "
                              f"choose from {sorted(_ESTIMATOR_TOKENS)}")
        kind, covs = _ESTIMATOR_TOKENS[tok]
        specs.append(EstimatorSpec(kind=kind, covs=covs))
    if not specs:
        raise ConfigError("no estimators requested")
    return tuple(specs)


def _config_from_json(path: str) -> ScenarioConfig:
    raw = json.loads(Path(path).read_text())
    try:
        mspec = raw["model"]
        if mspec["type"] == "example1":
            model = Example1Model(n=int(mspec["n"]), rho=float(mspec["rho"]))
        elif mspec["type"] == "csv":
            model = CsvPopulationModel(path=mspec["path"],
                                       k=mspec.get("k"), j=mspec.get("j"))
        else:
            raise ConfigError(f"unknown model type {mspec['type']!r}")
        dspec = raw["design"]
        design = DesignSpec(kind=dspec["kind"], n1=int(dspec["n1"]),
                            a=float(dspec.get("a", math.inf)),
                            max_attempts=int(dspec.get("max_attempts", 10**6)))
        estimators = tuple(
            EstimatorSpec(kind=e["kind"], covs=e.get("covs", "w"),
                          label=e.get("label", ""),
                          beta1=tuple(e["beta1"]) if "beta1" in e else None,
                          beta0=tuple(e["beta0"]) if "beta0" in e else None)
            for e in raw["estimators"])
        return ScenarioConfig(
            model=model, design=design, estimators=estimators,
            reps=int(raw["reps"]), alpha=float(raw.get("alpha", 0.05)),
            master_seed=int(raw.get("master_seed", 0)),
            threshold_quantile=raw.get("threshold_quantile"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def cmd_simulate(args) -> int:
    if args.config:
        cfg = _config_from_json(args.config)
    else:
        if args.model != "example1":
            raise ConfigError("flag mode supports --model example1 only; "
                              "use --config for CSV populations")
        if args.n is None or args.rho is None:
            raise ConfigError("--n and --rho are required for example1")
        design = DesignSpec(
            kind=args.design, n1=args.n1 if args.n1 else args.n // 2,
            a=args.threshold if args.threshold is not None else math.inf,
            max_attempts=args.max_attempts)
        cfg = ScenarioConfig(
            model=Example1Model(n=args.n, rho=args.rho),
            design=design,
            estimators=_estimators_from_tokens(args.estimators),
            reps=args.reps, alpha=args.alpha, master_seed=args.seed,
            threshold_quantile=args.threshold_quantile)
    report = run_monte_carlo(cfg)
    payload = report.to_json()
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(payload + "\n")
        hist_lines = ["estimator,bin_left,bin_right,count"]
        for label, est in report.estimators.items():
            for i, cnt in enumerate(est.hist_counts):
                hist_lines.append(f"{label},{est.hist_edges[i]:.6g},"
                                  f"{est.hist_edges[i + 1]:.6g},{int(cnt)}")
        (outdir / "histograms.csv").write_text("\n".join(hist_lines) + "\n")
        for label, est in report.estimators.items():
            print(f"{label}: sampling sd {est.sampling_sd:.4f}, "
                  f"mean est se {est.mean_estimated_se:.4f}, "
                  f"coverage {est.coverage:.4f}")
    else:
        print(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rerand",
        description="Randomization-based design and analysis of experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="draw a (re)randomized assignment")
    p.add_argument("--data", required=True, help="CSV with covariate columns")
    p.add_argument("--x-cols", required=True, help="comma-separated design covariates")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--threshold-quantile", type=float, default=None)
    p.add_argument("--max-attempts", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="assignment CSV path")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("analyze", help="estimate effects from one experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--treat", required=True)
    p.add_argument("--w-cols", required=True)
    p.add_argument("--x-cols", default=None)
    p.add_argument("--estimator", choices=("diff", "lin", "custom"), default="lin")
    p.add_argument("--beta1", default=None, help="comma-separated coefficients")
    p.add_argument("--beta0", default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--design-a", type=float, default=None,
                   help="known ReM threshold (enables the mixture interval)")
    p.add_argument("--threshold-quantile", type=float, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("asymptotics",
                       help="population-level quantities and gains")
    p.add_argument("--data", required=True, help="population CSV (y1,y0,x*,w*)")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--threshold-quantile", type=float, default=None)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("simulate", help="Monte Carlo replication experiment")
    p.add_argument("--config", default=None, help="JSON scenario config")
    p.add_argument("--model", default="example1")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--n1", type=int, default=None)
    p.add_argument("--design", choices=("cre", "rem"), default="rem")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--threshold-quantile", type=float, default=None)
    p.add_argument("--max-attempts", type=int, default=10**6)
    p.add_argument("--estimators", default="diff,lin")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RejectionCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
