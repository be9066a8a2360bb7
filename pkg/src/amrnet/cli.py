"""Command-line entry point: ``amrnet {run,train,evaluate,explain,report}``.

Exit codes: 0 success, 1 at least one antibiotic (or step) failed,
2 configuration or usage error. ``AMR_WORKERS`` sets the worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import metrics as M
from .config import MODEL_KEYS, REPORT_FORMATS, load_config
from .data import MatrixFormat, parse_gene_annotation, parse_snp_matrix
from .errors import AmrError, ConfigurationError
from .explain import gene_report, mean_abs_shap_ranking, rows_to_csv, summary_export, tree_shap
from .pipeline import emit_reports, load_result, read_predictions, run_experiment, score_predictions
from .serialize import load_model
from .svg import beeswarm

log = logging.getLogger("amrnet")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _csv_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _models(text):
    # "cnn+xgb" selects the two members and their soft vote
    if text in ("cnn+xgb", "ensemble"):
        return ("cnn", "xgb", "ensemble")
    return _csv_list(text)


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "output", None):
        cfg.output.dir = args.output
    if getattr(args, "antibiotics", None):
        cfg.antibiotics = args.antibiotics
    if getattr(args, "models", None):
        cfg.models = args.models
        cfg.__post_init__()
    if getattr(args, "formats", None):
        cfg.output.formats = args.formats
        cfg.output.__post_init__()
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def _experiment_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", "-c", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--output", "-o", help="override the output directory")
    p.add_argument("--antibiotics", "-a", type=_csv_list, help="comma-separated label columns")
    p.add_argument("--models", "-m", type=_models,
                   help=f"comma-separated subset of {','.join(MODEL_KEYS)}, or cnn+xgb")
    p.add_argument("--workers", "-j", type=int, help="antibiotics run in parallel (default AMR_WORKERS or 1)")
    return p


def _status(result) -> int:
    for ab, task in result.tasks.items():
        if task.ok:
            log.info("%s: %s", ab, ", ".join(f"{k} mcc={r.mcc:.4f}" for k, r in task.reports.items()))
        else:
            log.error("%s failed: %s", ab, task.error)
    return EXIT_PARTIAL if result.failed else EXIT_OK


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    return _status(run_experiment(cfg, explain=True, reports=True))


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    return _status(run_experiment(cfg, explain=False, reports=False))


def cmd_evaluate(args) -> int:
    _, y, probs = read_predictions(args.predictions)
    reports = score_predictions(y, probs, args.threshold)
    text = M.to_json(reports) if args.format == "json" else M.to_csv(reports)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_explain(args) -> int:
    model = load_model(args.model, expected_type="gbt")
    matrix = parse_snp_matrix(args.matrix, MatrixFormat(delimiter=args.delimiter))
    if model.feature_names is not None and tuple(matrix.feature_names) != tuple(model.feature_names):
        raise ConfigurationError("matrix loci differ from the loci the model was trained on")
    shap = tree_shap(model, matrix.tokens)
    ranking = mean_abs_shap_ranking(shap)
    annotation = parse_gene_annotation(args.annotation) if args.annotation else None
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = summary_export(shap, matrix.tokens, args.top_k)
    (out / "shap_summary.csv").write_text(rows_to_csv(rows, ["rank", "feature", "sample", "shap", "token"]))
    (out / "gene_report.csv").write_text(rows_to_csv(
        gene_report(ranking, annotation, args.top_k), ["rank", "feature", "position", "gene", "mean_abs_shap"]))
    (out / "shap_values.json").write_text(json.dumps({
        "space": "log-odds margin", "base_value": shap.base, "samples": list(matrix.sample_ids),
        "features": list(shap.feature_names), "phi": shap.phi.tolist()}) + "\n")
    if args.svg:
        (out / "shap_beeswarm.svg").write_text(beeswarm(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    result = load_result(args.run_dir)
    paths = emit_reports(result, args.formats, args.output)
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_PARTIAL if result.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amrnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    exp = _experiment_parent()

    p = sub.add_parser("run", parents=[exp], help="full protocol: train, score, explain, report")
    p.add_argument("--formats", "-f", type=_csv_list, help=f"subset of {','.join(REPORT_FORMATS)}")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", parents=[exp], help="fit models and write test-set predictions")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a cached predictions.csv")
    p.add_argument("predictions")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", help="write here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="TreeSHAP for a saved GBT model on a SNP matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--annotation")
    p.add_argument("--delimiter", default="\t")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--svg", action="store_true", help="also write a beeswarm SVG")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="re-emit tables and charts from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--formats", "-f", type=_csv_list, default=REPORT_FORMATS)
    p.add_argument("--output", "-o", help="default: <run_dir>/reports")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (AmrError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
