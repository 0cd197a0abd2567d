"""Command-line entry point: ingestion, configuration, runs, reports.

Commands: fit, fence, fb-fence, adaptive-fence, gic, simulate, pstar-curve.
Reports embed the full configuration and master seed so every run can be
replayed; repeated runs with the same seed emit byte-identical files. Exit
codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .adaptive import (
    AdaptiveConfig,
    AdaptiveReport,
    PStarCurve,
    adaptive_select,
    pstar_curve,
)
from .errors import (
    FencekitError,
    InconsistentNesting,
    IoFailure,
    MalformedHeader,
    NonNumericCell,
    NumericalError,
    ValidationError,
)
from .fence import FenceConfig, FenceOutcome, fb_fence, fence_select, sigma_table
from .gic import GicConfig, gic_select
from .measures import FitResult, MeasureKind, fit_model, fit_table, transform_unit_variance
from .model_space import CandidateModel, Dataset, enumerate_all_subsets
from .numerics import RngStream
from .sigma import SigmaKind
from .simlab import (
    AdaptiveStrategy,
    FBFenceStrategy,
    FenceStrategy,
    GicStrategy,
    Scenario,
    StudyResult,
    run_study,
)

_FLOAT_DIGITS = repr  # shortest round-trip representation, 15+ significant digits


# ---------------------------------------------------------------------------
# Dataset ingestion and emission
# ---------------------------------------------------------------------------

_SPECIAL_COLUMNS = {"y", "d", "cluster", "community", "family"}


def ingest_csv(path: str) -> Dataset:
    """Parse a dataset CSV: y, covariate columns x1..xK, optional structure.

    Optional columns: ``d`` (strictly positive sampling variances),
    ``cluster`` for one-level grouping, or ``community`` and ``family`` for
    nested two-level grouping.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise MalformedHeader(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise MalformedHeader("missing required response column 'y'")
    unknown = [
        h for h in header if h not in _SPECIAL_COLUMNS and not h.startswith("x")
    ]
    if unknown:
        raise MalformedHeader(f"unrecognized columns: {unknown}")
    if ("community" in header) != ("family" in header):
        raise MalformedHeader("two-level grouping needs both 'community' and 'family'")
    body = rows[1:]
    if not body:
        raise MalformedHeader("no data rows")

    def parse_float(token: str, row: int, col: str) -> float:
        try:
            return float(token)
        except ValueError:
            raise NonNumericCell(f"non-numeric value {token!r} at row {row}, column {col!r}")

    columns: dict[str, list] = {h: [] for h in header}
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise MalformedHeader(f"row {i} has {len(row)} cells, expected {len(header)}")
        for h, token in zip(header, row):
            token = token.strip()
            if h in {"cluster", "community", "family"}:
                columns[h].append(token)
            else:
                columns[h].append(parse_float(token, i, h))

    def factorize(tokens: list[str]) -> np.ndarray:
        seen: dict[str, int] = {}
        out = np.empty(len(tokens), dtype=np.int64)
        for i, t in enumerate(tokens):
            out[i] = seen.setdefault(t, len(seen))
        return out

    d = None
    if "d" in columns:
        d = np.array(columns["d"], dtype=float)
        if np.any(d <= 0):
            raise ValidationError("sampling variances in column 'd' must be strictly positive")
    try:
        return Dataset(
            y=np.array(columns["y"], dtype=float),
            candidates={
                h: np.array(columns[h], dtype=float) for h in header if h.startswith("x")
            },
            cluster=factorize(columns["cluster"]) if "cluster" in columns else None,
            community=factorize(columns["community"]) if "community" in columns else None,
            family=factorize(columns["family"]) if "family" in columns else None,
            sampling_variances=d,
        )
    except InconsistentNesting:
        raise
    except FencekitError:
        raise


def write_dataset_csv(dataset: Dataset, path: str) -> None:
    """Emit a dataset in the ingestible format (full float precision)."""
    header = ["y", *dataset.candidate_names]
    if dataset.sampling_variances is not None:
        header.append("d")
    if dataset.cluster is not None:
        header.append("cluster")
    if dataset.community is not None:
        header.extend(["community", "family"])
    lines = [",".join(header)]
    for i in range(dataset.n):
        cells = [_FLOAT_DIGITS(float(dataset.y[i]))]
        cells += [_FLOAT_DIGITS(float(dataset.candidates[nm][i])) for nm in dataset.candidate_names]
        if dataset.sampling_variances is not None:
            cells.append(_FLOAT_DIGITS(float(dataset.sampling_variances[i])))
        if dataset.cluster is not None:
            cells.append(str(dataset.cluster[i]))
        if dataset.community is not None:
            cells.append(str(dataset.community[i]))
            cells.append(str(dataset.family[i]))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def _to_jsonable(obj):
    if isinstance(obj, FitResult):
        return {"model": obj.model_id, "qhat": obj.qhat, "theta_hat": obj.theta_hat}
    if isinstance(obj, CandidateModel):
        return obj.id
    if isinstance(obj, PStarCurve):
        return {
            "c": [float(c) for c in obj.c_values],
            "pstar": [float(p) for p in obj.pstar],
            "modal_model": list(obj.per_c_modal_model),
        }
    if isinstance(obj, FenceOutcome):
        return {
            "kind": "fence_outcome",
            "selected": obj.selected.id,
            "reference": obj.reference.id,
            "tier_examined": obj.tier_examined,
            "c": obj.c,
            "models": {
                mid: {
                    "qhat": obj.qhat[mid],
                    "sigma": obj.sigma.get(mid),
                    "in_fence": obj.in_fence.get(mid),
                }
                for mid in sorted(obj.qhat)
            },
        }
    if isinstance(obj, AdaptiveReport):
        return {
            "kind": "adaptive_report",
            "selected": obj.selected.id,
            "c_star": obj.c_star,
            "q_star": obj.q_star,
            "r_star": obj.r_star,
            "d_star": obj.d_star,
            "baseline_adjusted": obj.baseline_adjusted,
            "bootstrap_B": obj.bootstrap_B,
            "curve": _to_jsonable(obj.curve),
            "details": obj.details,
        }
    if isinstance(obj, StudyResult):
        return {
            "kind": "study_result",
            "family": obj.scenario.family,
            "sizes": list(obj.scenario.sizes),
            "beta": list(obj.scenario.beta),
            "variance": obj.scenario.variance,
            "replications": obj.scenario.replications,
            "design_seed": obj.scenario.design_seed,
            "truth": obj.scenario.truth_model.id,
            "strategies": list(obj.strategy_names),
            "counts": obj.counts,
            "selections": {k: list(v) for k, v in obj.selections.items()},
        }
    raise ValidationError(f"cannot serialize {type(obj).__name__}")


def _curve_rows(obj) -> list[tuple[float, float]]:
    if isinstance(obj, PStarCurve):
        curve = obj
    elif isinstance(obj, AdaptiveReport):
        curve = obj.curve
    else:
        raise ValidationError(f"{type(obj).__name__} has no curve to emit as csv")
    return list(zip(curve.c_values.tolist(), curve.pstar.tolist()))


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def emit_report(result, format: str = "json", path: str | None = None, meta: dict | None = None):
    """Serialize a result (json) or its p* curve (csv) to a file or stdout.

    ``meta`` (configuration, master seed) is embedded under the "run" key so
    reports are self-describing and replayable.
    """
    if format == "json":
        payload = _to_jsonable(result)
        if meta:
            payload["run"] = meta
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        buf.write("c,pstar\n")
        for c, p in _curve_rows(result):
            buf.write(f"{_FLOAT_DIGITS(c)},{_FLOAT_DIGITS(p)}\n")
        text = buf.getvalue()
    else:
        raise ValidationError(f"unknown report format {format!r}")
    _write_text(path, text)


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _measure_from_args(args) -> MeasureKind:
    options = {}
    if getattr(args, "quadrature_order", None):
        options["quadrature_order"] = args.quadrature_order
    return MeasureKind(args.measure, options)


def _check_compat(measure: MeasureKind, sigma_kind: SigmaKind) -> None:
    if sigma_kind.tag == "exact_f_numeric" and measure.tag != "ml_fay_herriot":
        raise ValidationError("exact_f_numeric sigma is only valid with ml_fay_herriot")
    if sigma_kind.tag == "observed_variance" and measure.tag == "ml_fay_herriot":
        raise ValidationError("the area-level likelihood has no per-cluster decomposition")


def _prepare_dataset(args, measure: MeasureKind) -> Dataset:
    dataset = ingest_csv(args.data)
    if measure.tag == "ml_fay_herriot" and dataset.sampling_variances is not None:
        if not np.allclose(dataset.sampling_variances, 1.0):
            dataset = transform_unit_variance(dataset, RngStream(args.seed, purpose="ingest"))
    return dataset


def _model_from_args(args) -> CandidateModel:
    fixed = tuple(s for s in args.fixed.split(",") if s)
    random = tuple(s for s in args.random.split(",") if s) if args.random else ()
    return CandidateModel(fixed_effects=fixed, random_effects=random)


def _meta(args, **extra) -> dict:
    meta = {"command": args.command, "seed": args.seed, **extra}
    for key in ("measure", "sigma", "c", "strategy", "bootstrap", "grid_points", "data"):
        if hasattr(args, key.replace("-", "_")):
            meta[key] = getattr(args, key.replace("-", "_"))
    return meta


def _cmd_fit(args) -> None:
    measure = _measure_from_args(args)
    dataset = _prepare_dataset(args, measure)
    model = _model_from_args(args)
    fit = fit_model(dataset, model, measure)
    payload = _to_jsonable(fit)
    payload["run"] = _meta(args)
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fence_common(args):
    measure = _measure_from_args(args)
    sigma_kind = SigmaKind(args.sigma)
    _check_compat(measure, sigma_kind)
    dataset = _prepare_dataset(args, measure)
    forced = tuple(s for s in args.forced.split(",") if s) if args.forced else ()
    space = enumerate_all_subsets(dataset, forced=forced)
    return measure, sigma_kind, dataset, space


def _cmd_fence(args) -> None:
    measure, sigma_kind, dataset, space = _fence_common(args)
    fits = fit_table(dataset, space, measure)
    sig = sigma_table(
        space.models, fits, space.full_model, sigma_kind, dataset=dataset, measure=measure
    )
    outcome = fence_select(space, fits, sig, FenceConfig(c=args.c, sigma_kind=sigma_kind))
    emit_report(outcome, args.format, args.out, meta=_meta(args))


def _cmd_fb_fence(args) -> None:
    measure, sigma_kind, dataset, space = _fence_common(args)
    outcome = fb_fence(space, dataset, measure, sigma_kind, args.c)
    emit_report(outcome, args.format, args.out, meta=_meta(args))


def _cmd_adaptive(args) -> None:
    measure, sigma_kind, dataset, space = _fence_common(args)
    config = AdaptiveConfig(
        bootstrap_B=args.bootstrap,
        grid_points=args.grid_points,
        strategy=args.strategy,
        two_step=args.two_step,
    )
    report = adaptive_select(
        space, dataset, measure, sigma_kind, config, RngStream(args.seed, purpose="adaptive")
    )
    emit_report(report, args.format, args.out, meta=_meta(args))


def _cmd_pstar_curve(args) -> None:
    measure, sigma_kind, dataset, space = _fence_common(args)
    config = AdaptiveConfig(bootstrap_B=args.bootstrap, grid_points=args.grid_points)
    curve = pstar_curve(
        space, dataset, measure, sigma_kind, config, RngStream(args.seed, purpose="pstar")
    )
    if args.format == "csv":
        emit_report(curve, "csv", args.out)
    else:
        payload = _to_jsonable(curve)
        payload["run"] = _meta(args)
        _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_gic(args) -> None:
    measure = _measure_from_args(args)
    dataset = _prepare_dataset(args, measure)
    forced = tuple(s for s in args.forced.split(",") if s) if args.forced else ()
    space = enumerate_all_subsets(dataset, forced=forced)
    fits = fit_table(dataset, space, measure)
    config = GicConfig(
        lambda_rule=args.lambda_rule,
        sample_size=dataset.n,
        fixed_lambda=args.lambda_value,
        qhat_scale=args.qhat_scale,
    )
    selected = gic_select(space, fits, config)
    payload = {
        "kind": "gic_selection",
        "selected": selected.id,
        "lambda": config.penalty,
        "run": _meta(args, lambda_rule=args.lambda_rule),
    }
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _strategies_from_config(raw: list[dict]) -> list:
    out = []
    for item in raw:
        kind = item.get("kind")
        name = item.get("name") or kind
        if kind == "fence":
            out.append(FenceStrategy(name=name, c=float(item["c"])))
        elif kind == "fb_fence":
            out.append(FBFenceStrategy(name=name, c=float(item["c"])))
        elif kind == "adaptive":
            out.append(
                AdaptiveStrategy(
                    name=name,
                    config=AdaptiveConfig(
                        bootstrap_B=int(item.get("bootstrap_B", 100)),
                        grid_points=int(item.get("grid_points", 101)),
                        strategy=item.get("strategy", "screen_tests"),
                        two_step=bool(item.get("two_step", False)),
                        baseline_distribution=item.get("baseline_distribution", "normal"),
                    ),
                )
            )
        elif kind == "gic":
            out.append(
                GicStrategy(
                    name=name,
                    config=GicConfig(
                        lambda_rule=item.get("lambda_rule", "bic"),
                        sample_size=int(item["sample_size"]),
                        fixed_lambda=item.get("fixed_lambda"),
                        qhat_scale=item.get("qhat_scale", "raw"),
                    ),
                )
            )
        else:
            raise ValidationError(f"unknown strategy kind {kind!r}")
    return out


def _cmd_simulate(args) -> None:
    try:
        with open(args.scenario) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read scenario {args.scenario}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file is not valid JSON: {exc}") from exc
    scenario = Scenario(
        family=spec["family"],
        sizes=tuple(spec["sizes"]),
        beta=tuple(spec["beta"]),
        variance=dict(spec["variance"]),
        replications=int(args.replications or spec.get("replications", 100)),
        design_seed=int(spec.get("design_seed", 31)),
    )
    for item in spec.get("strategies", []):
        if item.get("kind") == "gic" and "sample_size" not in item:
            item["sample_size"] = scenario.n
    strategies = _strategies_from_config(spec.get("strategies", []))
    if not strategies:
        raise ValidationError("scenario file lists no strategies")
    result = run_study(
        scenario,
        strategies,
        RngStream(args.seed, purpose="study"),
        forced=tuple(spec.get("forced", ["x1"])),
    )
    total = sum(result.seconds_per_replicate)
    print(
        f"ran {scenario.replications} replicates in {total:.1f}s "
        f"({total / max(scenario.replications, 1):.3f}s each)",
        file=sys.stderr,
    )
    emit_report(result, args.format, args.out, meta=_meta(args, scenario=args.scenario))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, *, data=True):
    if data:
        p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--measure", default="ml_fay_herriot",
                   choices=["ml_fay_herriot", "least_squares", "mvc", "glmm_sse"])
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--quadrature-order", type=int, default=None, dest="quadrature_order")


def _add_fence_flags(p):
    p.add_argument("--sigma", default="chisq_approx",
                   choices=["chisq_approx", "exact_f_numeric", "observed_variance"])
    p.add_argument("--forced", default="x1", help="comma-separated always-included columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fencekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one candidate model")
    _add_common(p)
    p.add_argument("--fixed", required=True, help="comma-separated covariate names")
    p.add_argument("--random", default="", help="comma-separated random structures")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("fence", help="tiered fence selection over all subsets")
    _add_common(p)
    _add_fence_flags(p)
    p.add_argument("--c", type=float, default=1.0, help="tuning constant")
    p.set_defaults(func=_cmd_fence)

    p = sub.add_parser("fb-fence", help="forward-backward fence")
    _add_common(p)
    _add_fence_flags(p)
    p.add_argument("--c", type=float, default=1.0)
    p.set_defaults(func=_cmd_fb_fence)

    p = sub.add_parser("adaptive-fence", help="bootstrap-calibrated fence")
    _add_common(p)
    _add_fence_flags(p)
    p.add_argument("--strategy", default="screen_tests",
                   choices=["screen_tests", "baseline_threshold", "none"])
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--grid-points", type=int, default=101, dest="grid_points")
    p.add_argument("--two-step", action="store_true", dest="two_step")
    p.set_defaults(func=_cmd_adaptive)

    p = sub.add_parser("pstar-curve", help="bootstrap selection-frequency curve")
    _add_common(p)
    _add_fence_flags(p)
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--grid-points", type=int, default=101, dest="grid_points")
    p.set_defaults(func=_cmd_pstar_curve)

    p = sub.add_parser("gic", help="generalized information criterion selection")
    _add_common(p)
    p.add_argument("--forced", default="x1")
    p.add_argument("--lambda-rule", default="bic", dest="lambda_rule",
                   choices=["fixed", "cp", "bic", "hq"])
    p.add_argument("--lambda-value", type=float, default=None, dest="lambda_value")
    p.add_argument("--qhat-scale", default="raw", dest="qhat_scale",
                   choices=["raw", "deviance"])
    p.set_defaults(func=_cmd_gic)

    p = sub.add_parser("simulate", help="run a scenario study")
    _add_common(p, data=False)
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--replications", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3
    except FencekitError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
