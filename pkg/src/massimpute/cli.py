"""Command-line front end: fit, impute, estimate, bootstrap, simulate.

All reports are JSON, all data tables CSV.  Every artifact embeds the seed,
tool version, and SHA-256 digests of its inputs, and identical invocations
reproduce byte-identical outputs.  Exit codes: 2 usage, 3 data validation,
4 numerical failure; errors are emitted as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .bootstrap import (
    build_replicates,
    read_augmented_dataset,
    write_augmented_dataset,
)
from .data_model import (
    ColumnSchema,
    SampleKind,
    SurveySample,
    build_design_matrix,
    load_sample,
    ppswr_design,
    srs_design,
)
from .errors import NumericalError, ValidationError
from .estimators import EstimateReport, EstimatorKind
from .mean_model import FittedModel, ModelFamily, fit_model, predict_all
from .simulation import SimConfig, run_monte_carlo, write_per_rep_csv
from .variance import linearized_variance


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_categoricals(pairs) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValidationError(
                f"--categorical expects col=reference_level, got {pair!r}"
            )
        col, ref = pair.split("=", 1)
        out[col] = ref
    return out


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config_defaults(argv):
    """A --config JSON file supplies defaults; explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        return json.load(fh)


def _seed_default() -> int:
    return int(os.environ.get("MASSIMPUTE_SEED", "0"))


def _threads_default() -> int:
    return int(os.environ.get("MASSIMPUTE_THREADS", "1"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="massimpute",
        description="Survey data integration by mass imputation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the mean model on the training sample B")
    p.add_argument("--train")
    p.add_argument("--response")
    p.add_argument("--covariates", help="comma-separated names")
    p.add_argument("--categorical", action="append", metavar="COL=REF")
    p.add_argument(
        "--family", choices=[f.value for f in ModelFamily], default="linear"
    )
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("impute", help="predict responses for sample A")
    p.add_argument("--model")
    p.add_argument("--sample-a")
    p.add_argument("--weight")
    p.add_argument("--categorical", action="append", metavar="COL=REF")
    p.add_argument("--out")

    p = sub.add_parser("estimate", help="point estimate with optional variance")
    p.add_argument("--imputed")
    p.add_argument("--pop-size", default="estimate", help="a number or 'estimate'")
    p.add_argument(
        "--variance", choices=["linearized", "bootstrap", "none"], default="none"
    )
    p.add_argument("--train", help="sample B CSV (required for linearized)")
    p.add_argument("--design", choices=["srs", "ppswr"], default="ppswr")
    p.add_argument("--report")

    p = sub.add_parser("bootstrap", help="build the replicate-augmented release file")
    p.add_argument("--train")
    p.add_argument("--response")
    p.add_argument("--covariates")
    p.add_argument("--categorical", action="append", metavar="COL=REF")
    p.add_argument(
        "--family", choices=[f.value for f in ModelFamily], default="linear"
    )
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--sample-a")
    p.add_argument("--weight")
    p.add_argument("--pop-size", default="estimate")
    p.add_argument("--L", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="run the Monte Carlo study")
    p.add_argument("--model", choices=["I", "II", "III"])
    p.add_argument("--pop-size", type=int, default=100_000)
    p.add_argument("--n-a", type=int, default=500)
    p.add_argument("--n-b", type=int, default=500)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--boot-l", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--report")
    p.add_argument("--per-rep", help="optional CSV of per-rep estimates")

    return parser


def _schema_from_args(args, with_weight=False, with_response=True) -> ColumnSchema:
    return ColumnSchema(
        covariates=tuple(args.covariates.split(",")),
        response=args.response if with_response else None,
        weight=args.weight if with_weight else None,
        categoricals=_parse_categoricals(getattr(args, "categorical", None)),
    )


def _fit_from_args(args) -> tuple[FittedModel, SurveySample, dict]:
    schema = _schema_from_args(args)
    sample_b = load_sample(args.train, schema, SampleKind.NON_PROBABILITY_B)
    design_b = build_design_matrix(
        sample_b, sample_b.covariate_names, intercept=not args.no_intercept
    )
    model = fit_model(ModelFamily(args.family), sample_b, design_b)
    schema_doc = {
        "response": schema.response,
        "covariates": list(schema.covariates),
        "categoricals": schema.categoricals,
    }
    return model, sample_b, schema_doc


def cmd_fit(args) -> int:
    model, _, schema_doc = _fit_from_args(args)
    doc = json.loads(model.to_json())
    doc["schema"] = schema_doc
    doc["version"] = __version__
    doc["input_digests"] = {args.train: _sha256(args.train)}
    _write_json(args.out, doc)
    return 0


def _load_model_file(path) -> tuple[FittedModel, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    return FittedModel.from_json(json.dumps(doc)), doc.get("schema", {})


def _load_sample_a(path, weight, model, schema_doc, extra_categoricals):
    categoricals = dict(schema_doc.get("categoricals", {}))
    categoricals.update(extra_categoricals)
    schema = ColumnSchema(
        covariates=tuple(schema_doc.get("covariates", [])),
        weight=weight,
        categoricals=categoricals,
    )
    sample_a = load_sample(path, schema, SampleKind.PROBABILITY_A)
    raw_names = tuple(
        name for name in model.covariate_names if name != "(intercept)"
    )
    design_a = build_design_matrix(
        sample_a, raw_names, intercept=model.intercept_included
    )
    return sample_a, design_a


def cmd_impute(args) -> int:
    model, schema_doc = _load_model_file(args.model)
    sample_a, design_a = _load_sample_a(
        args.sample_a,
        args.weight,
        model,
        schema_doc,
        _parse_categoricals(args.categorical),
    )
    yhat = predict_all(model, design_a)

    names = list(sample_a.covariate_names) + [args.weight]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["yhat"])
        cols = [sample_a.columns[n] for n in names] + [yhat]
        for i in range(sample_a.n):
            writer.writerow([repr(float(c[i])) for c in cols])

    with open(args.model) as fh:
        model_doc = json.load(fh)
    manifest = {
        "format": "massimpute-imputed-v1",
        "model": model_doc,
        "weight_name": args.weight,
        "version": __version__,
        "input_digests": {
            args.model: _sha256(args.model),
            args.sample_a: _sha256(args.sample_a),
        },
    }
    _write_json(args.out + ".manifest.json", manifest)
    return 0


def _read_imputed(path):
    data = np.genfromtxt(path, delimiter=",", names=True, deletechars="")
    with open(path + ".manifest.json") as fh:
        manifest = json.load(fh)
    return data, manifest


def cmd_estimate(args) -> int:
    variance_block = None
    digests = {args.imputed: _sha256(args.imputed)}

    if args.variance == "bootstrap":
        dataset = read_augmented_dataset(args.imputed)
        if args.pop_size != "estimate":
            N = float(args.pop_size)
        else:
            N = dataset.population_size_used()
        theta = float(np.sum(dataset.weights * dataset.yhat) / N)
        thetas = (
            np.sum(
                dataset.replicate_weights * dataset.replicate_imputations, axis=0
            )
            / N
        )
        v_boot = float(np.mean((thetas - theta) ** 2))
        se = float(np.sqrt(max(v_boot, 0.0)))
        variance_block = {
            "method": "bootstrap",
            "L": dataset.L,
            "v_total": v_boot,
            "standard_error": se,
            "ci_level": 0.95,
            "ci_half_width": 1.96 * se,
        }
        n_a = len(dataset.weights)
        n_b = 0
    else:
        data, manifest = _read_imputed(args.imputed)
        weight_name = manifest["weight_name"]
        w = np.atleast_1d(data[weight_name])
        yhat = np.atleast_1d(data["yhat"])
        N = float(args.pop_size) if args.pop_size != "estimate" else float(np.sum(w))
        theta = float(np.sum(w * yhat) / N)
        n_a = len(w)
        n_b = 0

        if args.variance == "linearized":
            if not args.train:
                raise ValidationError("linearized variance requires --train")
            model = FittedModel.from_json(json.dumps(manifest["model"]))
            schema_doc = manifest["model"].get("schema", {})
            schema = ColumnSchema(
                covariates=tuple(schema_doc.get("covariates", [])),
                response=schema_doc.get("response"),
                categoricals=schema_doc.get("categoricals", {}),
            )
            sample_b = load_sample(args.train, schema, SampleKind.NON_PROBABILITY_B)
            raw_names = tuple(
                n for n in model.covariate_names if n != "(intercept)"
            )
            design_b = build_design_matrix(
                sample_b, raw_names, intercept=model.intercept_included
            )
            columns = {weight_name: w}
            cov_names = []
            for name in raw_names:
                columns[name] = np.atleast_1d(data[name])
                cov_names.append(name)
            sample_a = SurveySample(
                columns=columns,
                covariate_names=tuple(cov_names),
                kind=SampleKind.PROBABILITY_A,
                weight_name=weight_name,
            )
            design_a = build_design_matrix(
                sample_a, raw_names, intercept=model.intercept_included
            )
            if args.design == "srs":
                if args.pop_size == "estimate":
                    raise ValidationError("SRS design needs a numeric --pop-size")
                design_spec = srs_design(N)
            else:
                design_spec = ppswr_design()
            lin = linearized_variance(
                model, sample_a, sample_b, design_a, design_b, design_spec, N
            )
            variance_block = {"method": "linearized", **lin.to_dict()}
            n_b = sample_b.n
            digests[args.train] = _sha256(args.train)

    report = EstimateReport(
        theta_hat=theta,
        estimator_kind=EstimatorKind.MASS_IMPUTATION,
        n_a=n_a,
        n_b=n_b,
        population_size_used=N,
        variance=variance_block,
    )
    doc = report.to_dict()
    doc["version"] = __version__
    doc["input_digests"] = digests
    _write_json(args.report, doc)
    return 0


def cmd_bootstrap(args) -> int:
    seed = args.seed if args.seed is not None else _seed_default()
    model, sample_b, schema_doc = _fit_from_args(args)
    design_b = build_design_matrix(
        sample_b, sample_b.covariate_names, intercept=not args.no_intercept
    )
    schema_a = ColumnSchema(
        covariates=tuple(args.covariates.split(",")),
        weight=args.weight,
        categoricals=_parse_categoricals(args.categorical),
    )
    sample_a = load_sample(args.sample_a, schema_a, SampleKind.PROBABILITY_A)
    design_a = build_design_matrix(
        sample_a, sample_a.covariate_names, intercept=not args.no_intercept
    )
    pop_size = None if args.pop_size == "estimate" else float(args.pop_size)
    design_spec = ppswr_design(pop_size)
    replicate_set = build_replicates(
        model, sample_a, sample_b, design_a, design_b, design_spec, args.L, seed
    )
    write_augmented_dataset(
        sample_a, replicate_set, model, args.out, population_size=pop_size
    )
    return 0


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _seed_default()
    threads = args.threads if args.threads is not None else _threads_default()
    config = SimConfig(
        model_id=args.model,
        population_size=args.pop_size,
        n_a=args.n_a,
        n_b=args.n_b,
        reps=args.reps,
        bootstrap_L=args.boot_l,
        master_seed=seed,
        threads=threads,
    )
    report = run_monte_carlo(config)
    with open(args.report, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    if args.per_rep:
        write_per_rep_csv(report, args.per_rep)
    print(
        f"simulate: model {args.model}, {args.reps} reps, "
        f"{report.wall_clock_seconds:.1f}s",
        file=sys.stderr,
    )
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "impute": cmd_impute,
    "estimate": cmd_estimate,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
}

# Required flags are validated after config-file defaults are merged, so a
# value from --config satisfies them; argparse alone cannot express that.
_REQUIRED = {
    "fit": ("train", "response", "covariates", "out"),
    "impute": ("model", "sample_a", "weight", "out"),
    "estimate": ("imputed", "report"),
    "bootstrap": ("train", "response", "covariates", "sample_a", "weight", "out"),
    "simulate": ("model", "report"),
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    defaults = _load_config_defaults(argv if argv is not None else sys.argv[1:])
    if defaults:
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(
                **{k: v for k, v in defaults.items() if k != "command"}
            )
    args = parser.parse_args(argv)
    missing = [
        name for name in _REQUIRED[args.command]
        if getattr(args, name, None) is None
    ]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        parser.error(f"{args.command}: the following arguments are required: {flags}")
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)}, sys.stderr
        )
        sys.stderr.write("\n")
        return 3
    except NumericalError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)}, sys.stderr
        )
        sys.stderr.write("\n")
        return 4


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
