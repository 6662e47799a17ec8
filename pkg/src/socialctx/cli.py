"""Command-line entry point: generate, featurize, experiment, screen, report.

Settings resolve in three layers: built-in defaults, then an INI config file
(``[common]`` plus one section per command), then explicit flags. Every
command writes the resolved settings to ``<out>/resolved_config.<command>.json``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import data, evaluation, features, models, plotting, preprocess, stats, synth

logger = logging.getLogger("socialctx")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

COMMON_DEFAULTS: dict[str, Any] = {"seed": 0, "out": "out", "jobs": 1, "verbose": False}
DEFAULTS: dict[str, dict[str, Any]] = {
    "generate": {
        "profiles": "default",
        "scale": 0.1,
        "min_participants": 4,
        "signature_strength": 1.0,
        "study_days": 28,
        "format": "jsonl",
        "profile_file": "",
    },
    "featurize": {"dataset": "", "window": 600, "min_reports": 100, "min_minority": 6, "no_filter": False},
    "experiment": {
        "features": "",
        "approach": "multi_country",
        "personalization": "population",
        "models": "random_forest",
        "n_seeds": 10,
        "grid": "default",
        "feature_selection": False,
        "freeze_grid": False,
        "tuning_folds": 3,
        "selection_patience": 5,
        "selection_max_features": 0,
        "smote_per_country": False,
    },
    "screen": {"features": "", "scope": "per-country", "top_k": 10},
    "report": {"results": ""},
}


class UsageError(Exception):
    pass


# -- configuration ------------------------------------------------------------------


def _coerce(value: str, like: Any, key: str):
    if isinstance(like, bool):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
    except ValueError:
        raise UsageError(f"{key}: expected a number, got {value!r}") from None
    return value


def read_config(path: str | Path | None) -> dict[str, str]:
    """Flatten an INI file into dotted keys (``section.key``)."""
    if not path:
        return {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"config file {path} not found")
    return {f"{s}.{k}": v for s in cp.sections() for k, v in cp[s].items()}


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    defaults = {**COMMON_DEFAULTS, **DEFAULTS[command]}
    flat = read_config(getattr(args, "config", None))
    known = {f"common.{k}" for k in COMMON_DEFAULTS} | {f"{command}.{k}" for k in defaults}
    sections = {"common", *DEFAULTS}
    for key in flat:
        section = key.split(".", 1)[0]
        if section not in sections:
            raise UsageError(f"unknown config section [{section}]")
        if section in ("common", command) and key not in known:
            raise UsageError(f"unknown config key {key}")
    cfg = dict(defaults)
    for layer in ("common", command):
        for k in defaults:
            if f"{layer}.{k}" in flat:
                cfg[k] = _coerce(flat[f"{layer}.{k}"], defaults[k], f"{layer}.{k}")
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _echo(out: Path, command: str, cfg: dict[str, Any]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"resolved_config.{command}.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------------


def _generator_config(cfg) -> synth.GeneratorConfig:
    if cfg["profile_file"]:
        try:
            doc = json.loads(Path(cfg["profile_file"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"profile_file: {exc}") from None
        doc["master_seed"] = cfg["seed"]
        try:
            return synth.GeneratorConfig.from_dict(doc)
        except (TypeError, KeyError) as exc:
            raise UsageError(f"profile_file: {exc}") from None
    kind = cfg["profiles"]
    if kind == "default":
        gen = synth.default_paper_profiles(cfg["scale"], cfg["min_participants"], cfg["seed"], cfg["signature_strength"])
    elif kind == "overlapping":
        gen = synth.overlapping_profiles(
            cfg["min_participants"], master_seed=cfg["seed"], user_signature_strength=cfg["signature_strength"]
        )
    elif kind == "screening":
        gen = synth.screening_profiles(
            cfg["min_participants"], master_seed=cfg["seed"], user_signature_strength=cfg["signature_strength"]
        )
    else:
        raise UsageError(f"profiles: unknown profile set {kind!r}")
    gen.study_days = cfg["study_days"]
    return gen


def cmd_generate(cfg: dict[str, Any]) -> dict[str, Path]:
    out = Path(cfg["out"])
    gen = _generator_config(cfg)
    gen.validate()
    ds = synth.generate(gen)
    paths = data.emit(ds, out, cfg["format"])
    manifest = {
        "master_seed": gen.master_seed,
        "profile_hash": gen.profile_hash(),
        "generator": gen.to_dict(),
        "counts": ds.counts,
        "files": {k: p.name for k, p in paths.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("generated %s", ds.counts)
    return paths


def _dataset_paths(directory: Path) -> tuple[Path, Path, Path]:
    events = directory / "events.jsonl"
    if not events.exists():
        events = directory / "events.csv"
    paths = (events, directory / "reports.csv", directory / "participants.csv")
    for p in paths:
        if not p.exists():
            raise UsageError(f"dataset file {p} not found")
    return paths


def cmd_featurize(cfg: dict[str, Any]) -> Path:
    if cfg["window"] < 60:
        raise UsageError(f"window: {cfg['window']} s is below the 60 s minimum")
    if not cfg["dataset"]:
        raise UsageError("featurize needs --dataset")
    ds = data.ingest(*_dataset_paths(Path(cfg["dataset"])))
    if not cfg["no_filter"]:
        ds = data.filter_participants(ds, cfg["min_reports"], cfg["min_minority"])
    fm = features.build_examples(ds, cfg["window"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "features.csv"
    fm.to_csv(path)
    logger.info("featurized %d rows x %d features", len(fm), len(fm.schema))
    return path


def _load_features(cfg) -> features.FeatureMatrix:
    if not cfg["features"]:
        raise UsageError("--features is required")
    path = Path(cfg["features"])
    if not path.exists():
        raise UsageError(f"feature matrix {path} not found")
    return features.FeatureMatrix.from_csv(path)


def _families(spec: str) -> tuple[str, ...]:
    if spec == "all":
        return models.FAMILIES
    fams = tuple(f.strip() for f in spec.split(",") if f.strip())
    for f in fams:
        if f not in models.FAMILIES:
            raise UsageError(f"models: unknown family {f!r} (choose from {', '.join(models.FAMILIES)} or all)")
    return fams


def cmd_experiment(cfg: dict[str, Any]) -> evaluation.ExperimentResult:
    fm = _load_features(cfg)
    if cfg["grid"] not in ("default", "fast"):
        raise UsageError("grid: choose default or fast")
    try:
        ecfg = evaluation.EvalConfig(
            approach=cfg["approach"],
            personalization=cfg["personalization"],
            n_seeds=cfg["n_seeds"],
            families=_families(cfg["models"]),
            use_feature_selection=cfg["feature_selection"],
            master_seed=cfg["seed"],
            grids=models.FAST_GRIDS if cfg["grid"] == "fast" else None,
            tuning_folds=cfg["tuning_folds"],
            freeze_grid=cfg["freeze_grid"],
            selection_max_features=cfg["selection_max_features"] or None,
            selection_patience=cfg["selection_patience"],
            preprocess=preprocess.PreprocessConfig(smote_per_country=cfg["smote_per_country"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = evaluation.run_experiment(ecfg, fm, jobs=cfg["jobs"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "results.csv")
    result.to_json(out / "results.json")
    result.write_summary(out / "summary.csv")
    if ecfg.approach == "country_agnostic_one_to_many":
        for fam in ecfg.families:
            result.write_matrix(out / f"matrix_{fam}.csv", fam)
    for row in result.summary():
        logger.info("%s -> %s %s: AUC %s F1 %s", row["train_countries"], row["test_country"], row["model"],
                    row["auc_cell"], row["f1_cell"])
    return result


def cmd_screen(cfg: dict[str, Any]) -> Path:
    fm = _load_features(cfg)
    scope = cfg["scope"]
    countries = sorted(set(fm.country.tolist()))
    if scope == "per-country":
        scopes = countries
    elif scope == "all":
        scopes = ["all"]
    elif scope in countries:
        scopes = [scope]
    else:
        raise UsageError(f"scope: {scope!r} is not all, per-country or a country in the matrix")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "screening.csv"
    stats.write_ranking({sc: stats.rank_features(fm, cfg["top_k"], sc) for sc in scopes}, path)
    return path


def cmd_report(cfg: dict[str, Any]) -> list[Path]:
    sources = [p for p in str(cfg["results"]).split(",") if p]
    if not sources:
        raise UsageError("report needs --results")
    records = []
    for src in sources:
        p = Path(src)
        if not p.exists():
            raise UsageError(f"results file {p} not found")
        records.extend(evaluation.ExperimentResult.read_csv(p))
    if not records:
        raise UsageError("results are empty; nothing to report")
    summary = evaluation.summarize(records)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    written = [plotting.auc_by_country(summary, out / "auc_by_country.svg")]
    if {r["personalization"] for r in summary} >= {"population", "hybrid"}:
        written.append(plotting.population_vs_hybrid(summary, out / "population_vs_hybrid.svg"))
    for model in sorted({r["model"] for r in summary}):
        rows = [r for r in summary if r["model"] == model and r["approach"] == "country_agnostic_one_to_many"]
        if rows:
            res = evaluation.ExperimentResult(None, [r for r in records if r["model"] == model
                                                     and r["approach"] == "country_agnostic_one_to_many"])
            trains, tests, M = res.matrix(model)
            written.append(plotting.matrix_heatmap(trains, tests, M, out / f"matrix_{model}.svg", model))
    lines = [f"{'approach':<30} {'train':<28} {'test':<10} {'model':<24} {'pers':<10} AUC          F1"]
    for r in summary:
        lines.append(f"{r['approach']:<30} {r['train_countries']:<28} {r['test_country']:<10} {r['model']:<24} "
                     f"{r['personalization']:<10} {r['auc_cell']:<12} {r['f1_cell']}")
    text = out / "summary.txt"
    text.write_text("\n".join(lines) + "\n")
    written.append(text)
    return written


COMMANDS = {
    "generate": cmd_generate,
    "featurize": cmd_featurize,
    "experiment": cmd_experiment,
    "screen": cmd_screen,
    "report": cmd_report,
}


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--config", help="INI file with [common] and per-command sections")
    common.add_argument("--jobs", type=int, help="worker processes (default 1)")
    common.add_argument("--verbose", action="store_const", const=True, help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="socialctx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    d = DEFAULTS

    g = sub.add_parser("generate", parents=[common], help="write a synthetic cohort")
    g.add_argument("--profiles", choices=("default", "overlapping", "screening"),
                   help=f"built-in profile set (default: {d['generate']['profiles']})")
    g.add_argument("--scale", type=float, help="participants per study participant, default profiles (default 0.1)")
    g.add_argument("--min-participants", dest="min_participants", type=int,
                   help="minimum (default) or exact (other sets) participants per country (default 4)")
    g.add_argument("--signature-strength", dest="signature_strength", type=float,
                   help="participant idiosyncrasy; 0 disables it (default 1.0)")
    g.add_argument("--study-days", dest="study_days", type=int, help="days of data per participant (default 28)")
    g.add_argument("--format", choices=("jsonl", "csv"), help="events file format (default jsonl)")
    g.add_argument("--profile-file", dest="profile_file", help="JSON generator config overriding --profiles")

    f = sub.add_parser("featurize", parents=[common], help="build the feature matrix")
    f.add_argument("--dataset", help="directory with events, reports and participants files")
    f.add_argument("--window", type=int, help="window length in seconds, centred on each report (default 600)")
    f.add_argument("--min-reports", dest="min_reports", type=int, help="participant filter (default 100)")
    f.add_argument("--min-minority", dest="min_minority", type=int, help="participant filter (default 6)")
    f.add_argument("--no-filter", dest="no_filter", action="store_const", const=True,
                   help="keep every participant")

    e = sub.add_parser("experiment", parents=[common], help="train and evaluate models")
    e.add_argument("--features", help="feature matrix CSV")
    e.add_argument("--approach", choices=evaluation.APPROACHES, help="default multi_country")
    e.add_argument("--personalization", choices=evaluation.PERSONALIZATIONS, help="default population")
    e.add_argument("--models", help="comma-separated families or 'all' (default random_forest)")
    e.add_argument("--n-seeds", dest="n_seeds", type=int, help="default 10")
    e.add_argument("--grid", choices=("default", "fast"), help="hyperparameter grid (default: full search)")
    e.add_argument("--feature-selection", dest="feature_selection", action="store_const", const=True)
    e.add_argument("--freeze-grid", dest="freeze_grid", action="store_const", const=True,
                   help="search once on the first seed and reuse the choice")
    e.add_argument("--tuning-folds", dest="tuning_folds", type=int, help="user-disjoint folds (default 3)")
    e.add_argument("--selection-patience", dest="selection_patience", type=int, help="default 5")
    e.add_argument("--selection-max-features", dest="selection_max_features", type=int, help="0 = no limit")
    e.add_argument("--smote-per-country", dest="smote_per_country", action="store_const", const=True)

    s = sub.add_parser("screen", parents=[common], help="mixed-effects feature screening")
    s.add_argument("--features", help="feature matrix CSV")
    s.add_argument("--scope", help="per-country (default), all, or one country")
    s.add_argument("--top-k", dest="top_k", type=int, help="default 10")

    r = sub.add_parser("report", parents=[common], help="plots and text summary from result CSVs")
    r.add_argument("--results", help="comma-separated results.csv paths")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = resolve(args.command, args)
    except UsageError as exc:
        print(f"socialctx {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _echo(Path(cfg["out"]), args.command, cfg)
        COMMANDS[args.command](cfg)
    except (UsageError, synth.ConfigError, data.DataError) as exc:
        print(f"socialctx {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"socialctx {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
