"""Command-line surface.

Subcommands: ``fit`` (one model to a report JSON), ``compare`` (segment
sweep or the standard model menu, to CSV + JSON), ``impute`` (write the
completed panels), ``simulate`` (panel CSV + truth JSON from a spec), and
``report`` (render a report to plot-ready long-form CSV).

Exit codes: 0 success, 1 usage/input error, 2 fit failure. The effective
seed is --seed if given, else $GROWTHSEG_SEED, else a fixed default, and is
recorded in every report so a rerun reproduces the numbers exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import GrowthSegError, InvalidSpecError, ParseError
from .growth import fit_exponential_xy, fit_logistic_xy
from .impute import ModelRequest, fit_with_imputation, impute_mcmc
from .mixed import RandomEffectsSpec, fit_mixed
from .report import (
    build_imputed_report,
    build_report,
    build_selection_report,
)
from .segmented import SegmentedOptions, fit_segmented_xy
from .selection import compare, score_loglik, select_segments
from .series import (
    CUMULATIVE,
    LOG_CUMULATIVE,
    RAW_ANNUAL,
    Panel,
    align,
    panel_to_log_cumulative,
    to_log_cumulative,
)
from .simulate import DEFAULT_SEED, RandomEffectsSim, SimSpec, SourceSim, simulate
from . import __version__
from . import io as gio

SEED_ENV = "GROWTHSEG_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def effective_seed(explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise GrowthSegError(f"{SEED_ENV} must be an integer, got {env!r}")
    return DEFAULT_SEED


def _stacked(panel: Panel):
    cells = ~np.isnan(panel.values)
    years = np.repeat(panel.years.astype(float), panel.n_sources)[cells.ravel()]
    values = panel.values.ravel()[cells.ravel()]
    return years, values


def _load_panel(args) -> Panel:
    if args.format == "fred":
        series = gio.read_fred_csv(args.input)
        return align([to_log_cumulative(series, args.t0_trim)])
    kind = {"raw": RAW_ANNUAL, "cumulative": CUMULATIVE, "log": LOG_CUMULATIVE}[args.kind]
    panel = gio.read_panel_csv(args.input, kind)
    return panel_to_log_cumulative(panel, args.t0_trim)


def _fit_direct(panel: Panel, args):
    years, values = _stacked(panel)
    t0 = int(panel.first_year)
    opts = SegmentedOptions(logistic_first=args.logistic_first)
    if args.mixed:
        spec = RandomEffectsSpec(intercept_slope1_covariance=args.covariance)
        return fit_mixed(panel, args.segments, spec, opts)
    if args.model == "exp":
        return fit_exponential_xy(years - t0, values, t0)
    if args.model == "logistic":
        return fit_logistic_xy(years - t0, values, t0)
    return fit_segmented_xy(years, values, args.segments, t0, opts)


def _config_echo(args, seed: int) -> dict:
    skip = {"func"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg["seed"] = seed
    return cfg


def cmd_fit(args) -> int:
    seed = effective_seed(args.seed)
    panel = _load_panel(args)
    config = _config_echo(args, seed)
    if args.impute:
        model = {"exp": "exponential"}.get(args.model, args.model)
        if args.mixed:
            model = "mixed"
        request = ModelRequest(
            model=model,
            segments=args.segments,
            random_effects=RandomEffectsSpec(intercept_slope1_covariance=args.covariance)
            if args.mixed
            else None,
            logistic_first=args.logistic_first,
        )
        result = fit_with_imputation(panel, request, m=args.impute, seed=seed)
        report = build_imputed_report(result, panel, config, seed)
    else:
        fit = _fit_direct(panel, args)
        report = build_report(fit, panel, config, seed)
    gio.write_report_json(report, args.out)
    print(f"wrote {args.out}")
    return 0


def _menu_models(panel: Panel):
    """The standard comparison menu for panels, scored by likelihood BIC."""
    years, values = _stacked(panel)
    t0 = int(panel.first_year)
    re_plain = RandomEffectsSpec(intercept_slope1_covariance=False)
    re_cov = RandomEffectsSpec(intercept_slope1_covariance=True)
    menu = [
        ("m1_exponential", lambda: fit_segmented_xy(years, values, 1, t0)),
        ("m2_exponential_mixed", lambda: fit_mixed(panel, 1, re_plain)),
        ("m3_exponential_mixed_cov", lambda: fit_mixed(panel, 1, re_cov)),
        # fixed-effects stand-in: the saturating model has no mixed variant here
        ("m4_logistic", lambda: fit_logistic_xy(years - t0, values, t0)),
        ("m5_segmented2_mixed", lambda: fit_mixed(panel, 2, re_plain)),
        ("m6_segmented2_mixed_cov", lambda: fit_mixed(panel, 2, re_cov)),
        ("m7_segmented3_mixed_cov", lambda: fit_mixed(panel, 3, re_cov)),
        ("m8_segmented4_mixed_cov", lambda: fit_mixed(panel, 4, re_cov)),
        ("m9_segmented5_mixed_cov", lambda: fit_mixed(panel, 5, re_cov)),
    ]
    return menu


def cmd_compare(args) -> int:
    seed = effective_seed(args.seed)
    panel = _load_panel(args)
    config = _config_echo(args, seed)
    if args.menu:
        scores = []
        failures = []
        for model_id, make in _menu_models(panel):
            try:
                fit = make()
            except GrowthSegError as exc:
                failures.append((model_id, str(exc)))
                continue
            scores.append(
                score_loglik(
                    model_id, fit.loglik, fit.n_params_loglik, fit.n_obs, fit.converged
                )
            )
        ranked = compare(scores)
        rows = [
            {
                "model_id": s.model_id,
                "p": s.p,
                "n": s.n,
                "loglik": s.loglik,
                "bic": s.bic,
                "converged": s.converged,
            }
            for s in ranked
        ]
        for model_id, msg in failures:
            rows.append({"model_id": model_id, "error": msg})
        report = {
            "package_version": __version__,
            "config": config,
            "seed": seed,
            "best": rows[0]["model_id"] if rows else None,
            "table": rows,
        }
    else:
        j_min, j_max = args.segments
        years, values = _stacked(panel)
        t0 = int(panel.first_year)
        if args.mixed:
            spec = RandomEffectsSpec(intercept_slope1_covariance=args.covariance)

            def fit_fn(_, J):
                return fit_mixed(panel, J, spec)
        else:

            def fit_fn(_, J):
                return fit_segmented_xy(years, values, J, t0)

        selection = select_segments(panel, j_min, j_max, fit_fn)
        report = build_selection_report(selection, config, seed)
        rows = report["table"]
    gio.write_report_json(report, f"{args.out_prefix}.json")
    with open(f"{args.out_prefix}.csv", "w", newline="", encoding="utf-8") as fh:
        fields = sorted({k for r in rows for k in r})
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out_prefix}.json and {args.out_prefix}.csv")
    return 0


def cmd_impute(args) -> int:
    seed = effective_seed(args.seed)
    panel = _load_panel(args)
    result = impute_mcmc(
        panel, m=args.m, seed=seed, burnin=args.burnin, gap=args.gap
    )
    written = []
    for i, completed in enumerate(result.panels, start=1):
        path = f"{args.out_prefix}_{i}.csv"
        gio.write_panel_csv(completed, path)
        written.append(path)
    meta = {
        "m": result.m,
        "seed": result.seed,
        "burnin": result.burnin,
        "gap": result.gap,
        "panels": written,
    }
    gio.write_report_json(meta, f"{args.out_prefix}.json")
    print(f"wrote {len(written)} panels and {args.out_prefix}.json")
    return 0


def _spec_from_json(path, seed_override: int | None) -> SimSpec:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return _spec_from_dict(raw, seed_override)
    except KeyError as exc:
        raise InvalidSpecError(f"simulation spec missing field {exc}") from None


def _spec_from_dict(raw: dict, seed_override: int | None) -> SimSpec:
    sources = tuple(
        SourceSim(s["source_id"], s.get("first_year"), s.get("last_year"))
        for s in raw.get("sources", [{"source_id": "sim"}])
    )
    re = raw.get("random_effects")
    random_effects = (
        RandomEffectsSim(
            re.get("sd_intercept", 0.0),
            tuple(re.get("sd_slopes", ())),
            re.get("corr_intercept_slope1", 0.0),
        )
        if re
        else None
    )
    return SimSpec(
        model=raw["model"],
        t0=raw["t0"],
        t_end=raw["t_end"],
        intercept=raw["intercept"],
        slopes=tuple(raw.get("slopes", ())),
        breakpoints=tuple(raw.get("breakpoints", ())),
        log_capacity=raw.get("log_capacity"),
        noise_sd=raw.get("noise_sd", 0.0),
        sources=sources,
        random_effects=random_effects,
        seed=effective_seed(seed_override if seed_override is not None else raw.get("seed")),
    )


def cmd_simulate(args) -> int:
    spec = _spec_from_json(args.spec, args.seed)
    panel, truth = simulate(spec)
    gio.write_panel_csv(panel, args.out_panel)
    truth_doc = {
        "seed": truth.seed,
        "spec": {
            "model": spec.model,
            "t0": spec.t0,
            "t_end": spec.t_end,
            "intercept": spec.intercept,
            "slopes": list(spec.slopes),
            "breakpoints": list(spec.breakpoints),
            "log_capacity": spec.log_capacity,
            "noise_sd": spec.noise_sd,
        },
        "intercept_by_source": truth.intercept_by_source,
        "slopes_by_source": {k: list(v) for k, v in truth.slopes_by_source.items()},
    }
    gio.write_report_json(truth_doc, args.out_truth)
    print(f"wrote {args.out_panel} and {args.out_truth}")
    return 0


def cmd_report(args) -> int:
    report = gio.read_report_json(args.fit)
    if "curves" not in report:
        raise GrowthSegError(f"{args.fit} has no curves to render")
    gio.write_plot_csv(report, args.out)
    print(f"wrote {args.out}")
    return 0


def _add_input_args(p):
    p.add_argument("input", help="panel CSV (or FRED export with --format fred)")
    p.add_argument("--format", choices=["panel", "fred"], default="panel")
    p.add_argument(
        "--kind",
        choices=["raw", "cumulative", "log"],
        default="raw",
        help="how to interpret panel cells (default: raw annual counts)",
    )
    p.add_argument(
        "--t0-trim",
        type=int,
        default=5,
        dest="t0_trim",
        help="drop this many leading years per source (default 5)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="growthseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and write a report JSON")
    _add_input_args(p)
    p.add_argument("--model", choices=["exp", "logistic", "segmented"], default="segmented")
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--mixed", action="store_true", help="per-source random effects")
    p.add_argument("--covariance", action="store_true", help="intercept/slope1 covariance")
    p.add_argument("--logistic-first", action="store_true", dest="logistic_first")
    p.add_argument("--impute", type=int, default=0, metavar="M")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="sweep segment counts or run the model menu")
    _add_input_args(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--segments", type=_parse_range, metavar="A..B")
    group.add_argument("--menu", action="store_true", help="standard 9-model menu")
    p.add_argument("--mixed", action="store_true")
    p.add_argument("--covariance", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("impute", help="write completed panels for a gappy input")
    _add_input_args(p)
    p.add_argument("-m", type=int, default=5)
    p.add_argument("--burnin", type=int, default=200)
    p.add_argument("--gap", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("simulate", help="generate a synthetic panel from a spec JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-panel", required=True, dest="out_panel")
    p.add_argument("--out-truth", required=True, dest="out_truth")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render a report JSON to plot-ready CSV")
    p.add_argument("fit", help="report JSON written by the fit subcommand")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _parse_range(text: str) -> tuple[int, int]:
    if ".." in text:
        a, b = text.split("..", 1)
        return int(a), int(b)
    j = int(text)
    return j, j


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"growthseg: input error: {exc}", file=sys.stderr)
        return 1
    except GrowthSegError as exc:
        print(f"growthseg: fit failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
