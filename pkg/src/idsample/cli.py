"""Command-line pipeline: preprocess -> sample / balance -> validate -> report.

Every option resolves as: command-line flag, then ``IDSAMPLE_<OPTION>``
environment variable (e.g. ``IDSAMPLE_SEED``, ``IDSAMPLE_PCA_MODE``), then the
JSON file given by ``--config``, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence


from . import ingest, pca, report, sampling, stats

logger = logging.getLogger("idsample")

ENV_PREFIX = "IDSAMPLE_"

EXIT_OK = 0
EXIT_INPUT = 3
EXIT_ATTEMPTS = 4
EXIT_SCHEMA = 5
EXIT_NUMERICAL = 6


class SchemaMismatch(ValueError):
    pass


@dataclass
class RunConfig:
    input: Optional[str] = None
    schema: Optional[str] = None
    out: str = "out"
    seed: int = 0
    fraction: float = 0.5
    num: Optional[int] = None
    alpha: float = 0.05
    pca_k: int = 3
    pca_mode: str = pca.SHARED
    max_attempts: int = 100
    standardize: bool = False
    traffic_type_column: Optional[str] = None
    normal: Optional[str] = None
    label_column: Optional[str] = None
    no_header: bool = False

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if self.pca_k < 1:
            raise ValueError("pca-k must be >= 1")
        if self.pca_mode not in (pca.SHARED, pca.INDEPENDENT):
            raise ValueError(f"pca-mode must be {pca.SHARED} or {pca.INDEPENDENT}")
        if self.max_attempts < 1:
            raise ValueError("max-attempts must be >= 1")

    def recipe(self) -> sampling.SampleRecipe:
        return sampling.SampleRecipe(self.seed, self.alpha, max_attempts=self.max_attempts)


def _coerce(kind, text):
    if kind is bool:
        if isinstance(text, bool):
            return text
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    return kind(text)


_TYPES = {
    "seed": int, "fraction": float, "num": int, "alpha": float, "pca_k": int,
    "max_attempts": int, "standardize": bool, "no_header": bool,
}


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    values = {}
    for f in fields(RunConfig):
        cli = getattr(args, f.name, None)
        env = environ.get(ENV_PREFIX + f.name.upper())
        kind = _TYPES.get(f.name, str)
        if cli is not None and cli is not False:
            values[f.name] = cli
        elif env is not None:
            values[f.name] = _coerce(kind, env)
        elif f.name in file_values:
            values[f.name] = _coerce(kind, file_values[f.name])
    return RunConfig(**values)


def _provenance_text(config: RunConfig, ds: ingest.Dataset, extra: Sequence[str] = ()) -> str:
    lines = [
        f"input={config.input}",
        f"seed={config.seed}",
        f"fraction={config.fraction}",
        f"num={config.num}",
        f"alpha={config.alpha}",
        f"max_attempts={config.max_attempts}",
        f"rows={ds.n_rows}",
        *extra,
        *ds.provenance,
    ]
    return "\n".join(lines) + "\n"


def _write_index(out: Path, command: str, config: RunConfig, artifacts: dict) -> None:
    cfg = {f.name: getattr(config, f.name) for f in fields(RunConfig) if f.name != "out"}
    report.write_json({"command": command, "config": cfg, "artifacts": artifacts}, out / "index.json")


def _distribution_files(ds: ingest.Dataset, tag: str, out: Path, artifacts: dict) -> None:
    for granularity in (sampling.TRAFFIC_TYPE, sampling.BINARY):
        dist = sampling.label_distribution(ds, granularity)
        names = ds.class_names if granularity == sampling.TRAFFIC_TYPE else (
            ds.normal_class, "attack")
        normal = ds.normal_class
        table = report.render_distribution_table(dist, names, f"{tag} {granularity} counts")
        name = f"distribution_{tag}_{granularity}.txt"
        report.write_text(table.to_text(), out / name)
        artifacts[f"distribution_{tag}_{granularity}"] = name
        pie = f"pie_{tag}_{granularity}.csv"
        report.emit_pie_fractions(dist, names, out / pie, normal_class=normal)
        artifacts[f"pie_{tag}_{granularity}"] = pie


# ------------------------------------------------------------------ #
#  Commands                                                           #
# ------------------------------------------------------------------ #


def cmd_preprocess(config: RunConfig) -> Path:
    out = Path(config.out)
    table = ingest.parse_csv(config.input, has_header=not config.no_header)
    overrides, type_col, normal = {}, config.traffic_type_column, config.normal
    if config.schema:
        overrides, file_type, file_normal = ingest.read_schema_file(config.schema)
        type_col = config.traffic_type_column or file_type
        normal = config.normal or file_normal
    type_col = type_col or table.column_names[-1]
    normal = normal or "normal"
    label_col = config.label_column
    if label_col is None:
        label_col = next((c for c, k in overrides.items() if k == ingest.BINARY_LABEL), None)
    schema = ingest.infer_schema(table, type_col, normal, label_col)
    unknown = set(overrides) - set(table.column_names)
    if unknown:
        raise ingest.IngestError(f"schema names unknown columns: {sorted(unknown)}")
    if overrides:
        schema = schema.with_kinds(overrides)

    encoded = ingest.encode(table, schema)
    deduped = ingest.dedup(encoded)
    final = ingest.drop_constant_columns(deduped)
    dropped = [n for n in deduped.feature_names if n not in final.feature_names]

    ingest.write_dataset(final, out / "preprocessed.csv")
    summary = {
        "input": config.input,
        "rows_in": table.row_count,
        "duplicates_removed": encoded.n_rows - deduped.n_rows,
        "rows_out": final.n_rows,
        "columns_dropped": dropped,
        "features_out": list(final.feature_names),
        "schema": dict(sorted(schema.kinds.items())),
        "normal_class": normal,
        "classes": list(final.class_names),
    }
    report.write_json(summary, out / "preprocess_report.json")
    _write_index(out, "preprocess", config, {
        "dataset": "preprocessed.csv", "report": "preprocess_report.json"})
    logger.info("preprocess: %d rows in, %d duplicates, dropped %s",
                table.row_count, summary["duplicates_removed"], dropped or "nothing")
    return out / "preprocessed.csv"


def _load(path: str, normal: Optional[str]) -> ingest.Dataset:
    return ingest.read_dataset(path, normal_class=normal)


def cmd_sample(config: RunConfig) -> Path:
    out = Path(config.out)
    ds = _load(config.input, config.normal)
    num = config.num if config.num is not None else int(round(config.fraction * ds.n_rows))
    recipe = config.recipe()
    rng = recipe.generator()
    outcome = sampling.draw_representative(ds, num, recipe, rng)
    sample = ds.take(outcome.indices, note=sampling.describe_outcome(outcome, recipe))

    artifacts = {"sample": "sample.csv", "provenance": "sample_provenance.txt",
                 "verdict": "verdict.json"}
    ingest.write_dataset(sample, out / "sample.csv")
    verdict = outcome.verdict
    report.write_text(_provenance_text(config, sample, [
        f"sample_size={num}",
        f"attempts={outcome.attempts}",
        f"chi_square={'n/a' if verdict is None else repr(verdict.statistic)}",
    ]), out / "sample_provenance.txt")
    report.write_json({
        "similar": True if verdict is None else verdict.similar,
        "testable": verdict is not None,
        "statistic": None if verdict is None else verdict.statistic,
        "threshold": None if verdict is None else verdict.threshold,
        "degrees_of_freedom": None if verdict is None else verdict.degrees_of_freedom,
        "merged_classes": [] if verdict is None else [ds.class_names[k] for k in verdict.merged_classes],
        "attempts": outcome.attempts,
    }, out / "verdict.json")
    _distribution_files(ds, "full", out, artifacts)
    _distribution_files(sample, "sample", out, artifacts)
    _write_index(out, "sample", config, artifacts)
    logger.info("sample: %d of %d rows after %d attempt(s)", num, ds.n_rows, outcome.attempts)
    return out / "sample.csv"


def cmd_balance(config: RunConfig) -> Path:
    out = Path(config.out)
    ds = _load(config.input, config.normal)
    idx, outcome, note = sampling.balanced_indices(ds, config.recipe())
    balanced = ds.take(idx, note=note)

    artifacts = {"sample": "balanced.csv", "provenance": "balanced_provenance.txt"}
    ingest.write_dataset(balanced, out / "balanced.csv")
    extra = [f"balanced_rows={balanced.n_rows}"]
    if outcome is not None:
        stat = "n/a" if outcome.verdict is None else repr(outcome.verdict.statistic)
        extra += [f"attempts={outcome.attempts}", f"chi_square={stat}"]
    report.write_text(_provenance_text(config, balanced, extra), out / "balanced_provenance.txt")
    _distribution_files(ds, "full", out, artifacts)
    _distribution_files(balanced, "balanced", out, artifacts)
    _write_index(out, "balance", config, artifacts)
    logger.info("balance: %d rows -> %d rows", ds.n_rows, balanced.n_rows)
    return out / "balanced.csv"


def cmd_validate(config: RunConfig, original: str, sample_path: str,
                 dataset_name: Optional[str] = None, sample_name: Optional[str] = None) -> str:
    out = Path(config.out)
    ds, sample = ingest.align_classes(_load(original, config.normal), _load(sample_path, config.normal))
    if ds.feature_names != sample.feature_names:
        raise SchemaMismatch(
            f"feature columns differ: {len(ds.feature_names)} in {original}, "
            f"{len(sample.feature_names)} in {sample_path}"
        )
    features = stats.compare_all_features(ds, sample, config.alpha)
    pcs = pca.compare_pca(ds, sample, config.pca_k, config.alpha, config.pca_mode, config.standardize)
    dataset_name = dataset_name or Path(original).stem
    sample_name = sample_name or Path(sample_path).stem
    table = report.render_comparison_table([(dataset_name, sample_name, features, pcs)])
    report.write_text(table, out / "comparison.txt")
    report.write_json({
        "dataset": dataset_name, "sample": sample_name,
        "all_features": features.to_dict(), "pca": pcs.to_dict(),
        "pca_mode": config.pca_mode,
    }, out / "comparison.json")
    _write_index(out, "validate", config, {"table": "comparison.txt", "details": "comparison.json"})
    return table


def cmd_report(config: RunConfig, inputs: Sequence[str]) -> List[str]:
    out = Path(config.out)
    datasets = ingest.align_classes(*[_load(p, config.normal) for p in inputs])
    shared = pca.fit_pca(datasets[0], config.pca_k, config.standardize) \
        if config.pca_mode == pca.SHARED else None

    lines, artifacts = [], {}
    for path, ds in zip(inputs, datasets):
        stem = Path(path).stem
        model = shared or pca.fit_pca(ds, config.pca_k, config.standardize)
        own = pca.fit_pca(ds, config.pca_k, config.standardize) if shared is not None else model
        summary = pca.variance_summary(own)
        lines.append(f"{stem}: {summary.format()}")
        points = pca.project(model, ds)
        names = ds.type_names().tolist()
        report.write_text(own.to_json() + "\n", out / f"pca_model_{stem}.json")
        report.write_point_cloud(points, names, out / f"points_{stem}.csv")
        entry = {"model": f"pca_model_{stem}.json", "points": f"points_{stem}.csv",
                 "per_dim_ratio": list(summary.per_dim_ratio),
                 "cumulative": list(summary.cumulative)}
        if config.pca_k >= 3:
            order = sorted(set(ds.traffic_type.tolist()), key=lambda k: ds.class_names[k])
            spec = report.PlotSpec(
                data_path=f"points_{stem}.csv",
                color_map=report.class_colors(ds.class_names, ds.normal_class, order),
                title=f"{stem}: Acc Var={summary.accumulative_variance:.12g}",
            )
            report.emit_scatter_svg(points[:, :3], ds.traffic_type, spec,
                                    out / f"scatter_{stem}.svg", class_names=ds.class_names)
            entry["svg"] = f"scatter_{stem}.svg"
        artifacts[stem] = entry
    report.write_text("\n".join(lines) + "\n", out / "variance_summary.txt")
    artifacts["variance_summary"] = "variance_summary.txt"
    _write_index(out, "report", config, artifacts)
    return lines


# ------------------------------------------------------------------ #
#  Argument parsing                                                   #
# ------------------------------------------------------------------ #


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--out", help="output directory (created if absent)")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument("--normal", help="name of the normal traffic class")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idsample", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="encode, dedup and drop constant columns")
    _common(p)
    p.add_argument("--input", help="raw CSV file")
    p.add_argument("--schema", help="key=value schema override file")
    p.add_argument("--traffic-type-column", dest="traffic_type_column")
    p.add_argument("--label-column", dest="label_column",
                   help="existing 0/1 label column (checked, not used as a feature)")
    p.add_argument("--no-header", dest="no_header", action="store_true")

    for name, helptext in (("sample", "representative random sample"),
                           ("balance", "balanced normal/attack sample")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--input", help="preprocessed dataset CSV")
        p.add_argument("--max-attempts", dest="max_attempts", type=int)
        if name == "sample":
            p.add_argument("--fraction", type=float)
            p.add_argument("--num", type=int, help="absolute sample size (overrides --fraction)")

    p = sub.add_parser("validate", help="Z-test a sample against its source")
    _common(p)
    p.add_argument("--input", help="original dataset CSV")
    p.add_argument("--sample", required=True, help="sample dataset CSV")
    p.add_argument("--name", help="dataset label in the table")
    p.add_argument("--sample-name", dest="sample_name")
    p.add_argument("--pca-k", dest="pca_k", type=int)
    p.add_argument("--pca-mode", dest="pca_mode", choices=[pca.SHARED, pca.INDEPENDENT])
    p.add_argument("--standardize", action="store_true")

    p = sub.add_parser("report", help="PCA variance summaries, point clouds and SVG plots")
    _common(p)
    p.add_argument("inputs", nargs="*", help="dataset CSVs (first is the reference)")
    p.add_argument("--input", action="append", dest="input_list")
    p.add_argument("--pca-k", dest="pca_k", type=int)
    p.add_argument("--pca-mode", dest="pca_mode", choices=[pca.SHARED, pca.INDEPENDENT])
    p.add_argument("--standardize", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "report":
            inputs = list(args.inputs) + list(args.input_list or [])
            args.input = inputs[0] if inputs else None
        config = resolve_config(args)
        if args.command == "report" and not inputs and config.input:
            inputs = [config.input]
        if config.input is None:
            parser.error("--input is required")

        if args.command == "preprocess":
            print(cmd_preprocess(config))
        elif args.command == "sample":
            print(cmd_sample(config))
        elif args.command == "balance":
            print(cmd_balance(config))
        elif args.command == "validate":
            sys.stdout.write(cmd_validate(config, config.input, args.sample, args.name, args.sample_name))
        elif args.command == "report":
            print("\n".join(cmd_report(config, inputs)))
    except sampling.AttemptsExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ATTEMPTS
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (pca.NumericalFailure, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
