"""The per-antibiotic experiment protocol and its on-disk outputs.

For each antibiotic: stratified split, class weights, fit the selected
models, score the held-out test set, soft-vote CNN and GBT, explain the GBT
with TreeSHAP. Everything lands under ``<output>/<antibiotic>/`` and a
``manifest.json`` records seeds, the config hash, input checksums and
output checksums.

Directory layout::

    <output>/manifest.json
    <output>/timings.json
    <output>/<AB>/split.json, weights.json, history.json
    <output>/<AB>/models/{cnn,gbt,rf}.amrm
    <output>/<AB>/predictions.csv         test-set probabilities
    <output>/<AB>/metrics.json            full precision
    <output>/<AB>/shap_ranking.csv, shap_summary.csv, gene_report.csv
    <output>/reports/...                  tables and charts
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from . import metrics as M
from .config import MODEL_LABELS, ExperimentConfig, derive_seed
from .data import (
    MatrixFormat,
    PhenotypeTable,
    class_weights,
    parse_gene_annotation,
    parse_phenotypes,
    parse_snp_matrix,
    stratified_split,
)
from .ensemble import ensemble_proba
from .errors import ConfigurationError, InputError
from .explain import gene_report, mean_abs_shap_ranking, rows_to_csv, summary_export, tree_shap
from .nn import TrainConfig, build_amr_cnn, train
from .serialize import save_model
from .svg import beeswarm, metric_bars
from .synthetic import planted_motif_dataset
from .trees import fit_gbt, fit_random_forest

log = logging.getLogger(__name__)

STAGES = ("split", "cnn", "gbt", "rf")
MANIFEST_VERSION = 1


@dataclass
class TaskResult:
    antibiotic: str
    status: str = "ok"
    error: str | None = None
    reports: dict[str, M.MetricReport] = field(default_factory=dict)
    histories: dict[str, list] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    shap_rows: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class ExperimentResult:
    output_dir: Path
    tasks: dict[str, TaskResult] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [ab for ab, t in self.tasks.items() if not t.ok]


@dataclass
class Dataset:
    matrix: object
    phenotypes: PhenotypeTable
    annotation: object = None
    checksums: dict[str, str] = field(default_factory=dict)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.synthetic is not None:
        s = d.synthetic
        matrix, y = planted_motif_dataset(s.n_samples, s.seq_len, positive_rate=s.positive_rate,
                                          variant_rate=s.variant_rate, seed=s.seed)
        labels = {"MOTIF": {sid: int(v) for sid, v in zip(matrix.sample_ids, y)}}
        return Dataset(matrix, PhenotypeTable(labels), None, {})
    d.check_paths()
    fmt = MatrixFormat(delimiter=d.delimiter, encoding=d.encoding)
    matrix = parse_snp_matrix(d.matrix, fmt)
    phenos = parse_phenotypes(d.phenotypes, d.delimiter)
    annotation = parse_gene_annotation(d.annotation) if d.annotation else None
    sums = {str(p): sha256_file(p) for p in (d.matrix, d.phenotypes, d.annotation) if p}
    return Dataset(matrix, phenos, annotation, sums)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# Predictions cache


def write_predictions(path: Path, sample_ids, y_true, probs: dict[str, np.ndarray]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "y_true", *probs])
    for i, sid in enumerate(sample_ids):
        w.writerow([sid, int(y_true[i]), *(repr(float(p[i])) for p in probs.values())])
    _write(path, buf.getvalue())


def read_predictions(path) -> tuple[list[str], np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["sample_id", "y_true"]:
            raise InputError(f"{path}: not a predictions file")
        rows = list(reader)
    ids = [r[0] for r in rows]
    y = np.array([int(r[1]) for r in rows], dtype=np.int8)
    probs = {name: np.array([float(r[2 + k]) for r in rows]) for k, name in enumerate(header[2:])}
    return ids, y, probs


def score_predictions(y_true, probs: dict[str, np.ndarray], threshold=0.5) -> dict[str, M.MetricReport]:
    return {name: M.evaluate(y_true, p, threshold) for name, p in probs.items()}


def metrics_json(reports: dict[str, M.MetricReport]) -> str:
    return M.to_json(reports)


# --------------------------------------------------------------------------
# One antibiotic


def run_task(cfg: ExperimentConfig, data: Dataset, antibiotic: str, out: Path, explain=True) -> TaskResult:
    res = TaskResult(antibiotic)
    res.seeds = {s: derive_seed(cfg.seed, f"{antibiotic}/{s}") for s in STAGES}
    if cfg.split.seed is not None:
        res.seeds["split"] = cfg.split.seed
    clock = time.perf_counter

    rows, y = data.phenotypes.align(antibiotic, data.matrix)
    sub = data.matrix.subset(rows)
    X, names = sub.tokens, tuple(sub.feature_names)
    split = stratified_split(y, cfg.split.fractions, res.seeds["split"])
    weights = class_weights(y[split.train])
    _write(out / "split.json", _dump_json(split.to_dict()))
    _write(out / "weights.json", _dump_json(weights.to_dict()))
    tr, va, te = split.train, split.val, split.test

    probs: dict[str, np.ndarray] = {}
    models = set(cfg.models)
    if "rf" in models:
        t0 = clock()
        rf_cfg = replace(cfg.rf, seed=res.seeds["rf"], n_jobs=cfg.rf.n_jobs or cfg.workers)
        rf = fit_random_forest(X[tr], y[tr], rf_cfg, sample_weight=weights, feature_names=names)
        res.artifacts["rf"] = str(save_model(rf, out / "models" / "rf.amrm"))
        probs["rf"] = rf.predict_proba(X[te])
        res.timings["rf"] = clock() - t0
    if "xgb" in models:
        t0 = clock()
        gbt_cfg = replace(cfg.gbt, seed=res.seeds["gbt"])
        eval_set = (X[va], y[va]) if len(va) else None
        gbt = fit_gbt(X[tr], y[tr], weights, gbt_cfg, eval_set=eval_set, feature_names=names)
        res.histories["xgb"] = gbt.history
        res.artifacts["xgb"] = str(save_model(gbt, out / "models" / "gbt.amrm"))
        probs["xgb"] = gbt.predict_proba(X[te])
        res.timings["xgb"] = clock() - t0
    if "cnn" in models:
        t0 = clock()
        c = cfg.cnn
        cnn = build_amr_cnn(X.shape[1], seed=res.seeds["cnn"], dtype=c.dtype, dropout=c.dropout, l2=c.l2)
        tcfg = TrainConfig(epochs=c.epochs, batch_size=c.batch_size, learning_rate=c.learning_rate,
                           patience=c.patience, seed=res.seeds["cnn"], class_weights=weights)
        cnn, history = train(cnn, X, y, split, tcfg)
        res.histories["cnn"] = history
        res.artifacts["cnn"] = str(save_model(cnn, out / "models" / "cnn.amrm"))
        probs["cnn"] = cnn.predict_proba(X[te], c.batch_size)
        res.timings["cnn"] = clock() - t0
    if "ensemble" in models:
        probs["ensemble"] = ensemble_proba([probs["cnn"], probs["xgb"]])

    ordered = {k: probs[k] for k in ("rf", "xgb", "cnn", "ensemble") if k in probs}
    test_ids = [sub.sample_ids[i] for i in te]
    write_predictions(out / "predictions.csv", test_ids, y[te], ordered)
    res.reports = score_predictions(y[te], ordered, cfg.threshold)
    _write(out / "metrics.json", metrics_json(res.reports))
    _write(out / "history.json", _dump_json(res.histories))

    if explain and "xgb" in models:
        t0 = clock()
        shap = tree_shap(gbt, X[te])
        ranking = mean_abs_shap_ranking(shap)
        res.shap_rows = summary_export(shap, X[te], cfg.explain.top_k)
        _write(out / "shap_ranking.csv", rows_to_csv(
            [{"rank": r + 1, "feature": n, "mean_abs_shap": float(s)} for r, (n, s) in enumerate(ranking.items())],
            ["rank", "feature", "mean_abs_shap"]))
        _write(out / "shap_summary.csv", rows_to_csv(res.shap_rows, ["rank", "feature", "sample", "shap", "token"]))
        genes = gene_report(ranking, data.annotation, cfg.explain.top_k)
        _write(out / "gene_report.csv", rows_to_csv(genes, ["rank", "feature", "position", "gene", "mean_abs_shap"]))
        _write(out / "shap_meta.json", _dump_json({"space": "log-odds margin", "base_value": shap.base,
                                                   "n_samples": int(len(te))}))
        res.timings["shap"] = clock() - t0
    return res


def _safe_task(cfg, data, antibiotic, out_root, explain) -> TaskResult:
    try:
        return run_task(cfg, data, antibiotic, out_root / antibiotic, explain)
    except Exception as exc:  # noqa: BLE001  one failed antibiotic must not stop the batch
        log.error("antibiotic %s failed: %s", antibiotic, exc)
        log.debug("%s", traceback.format_exc())
        return TaskResult(antibiotic, status="failed", error=f"{type(exc).__name__}: {exc}")


# --------------------------------------------------------------------------
# Whole experiment


def resolve_workers(cfg: ExperimentConfig) -> int:
    if cfg.workers:
        return int(cfg.workers)
    raw = os.environ.get("AMR_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"AMR_WORKERS must be an integer, got {raw!r}") from None


def run_experiment(cfg: ExperimentConfig, explain=True, reports=True) -> ExperimentResult:
    """Run every selected antibiotic; failures are recorded, not raised."""
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(cfg)
    antibiotics = list(cfg.antibiotics or data.phenotypes.antibiotics)
    unknown = [a for a in antibiotics if a not in data.phenotypes.labels]
    if unknown:
        raise ConfigurationError(f"no labels for antibiotic(s) {unknown}")
    workers = resolve_workers(cfg)
    result = ExperimentResult(out)
    if workers > 1 and len(antibiotics) > 1:
        with ThreadPoolExecutor(min(workers, len(antibiotics))) as pool:
            done = pool.map(lambda a: _safe_task(cfg, data, a, out, explain), antibiotics)
            tasks = list(done)
    else:
        tasks = [_safe_task(cfg, data, a, out, explain) for a in antibiotics]
    result.tasks = {t.antibiotic: t for t in tasks}
    if reports:
        emit_reports(result, cfg.output.formats)
    write_manifest(cfg, data, result)
    return result


def write_manifest(cfg: ExperimentConfig, data: Dataset, result: ExperimentResult) -> Path:
    """Seeds, hashes and per-file checksums; timings go to a separate file."""
    out = result.output_dir
    _write(out / "timings.json", _dump_json({ab: t.timings for ab, t in result.tasks.items()}))
    outputs = {}
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if p.is_file() and rel not in ("manifest.json", "timings.json"):
            outputs[rel] = sha256_file(p)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "inputs": data.checksums,
        "antibiotics": list(result.tasks),
        "seeds": {ab: t.seeds for ab, t in result.tasks.items()},
        "status": {ab: {"status": t.status, "error": t.error} for ab, t in result.tasks.items()},
        "outputs": outputs,
    }
    path = out / "manifest.json"
    _write(path, _dump_json(manifest))
    return path


# --------------------------------------------------------------------------
# Reports


def _labelled(reports: dict[str, M.MetricReport]) -> dict[str, M.MetricReport]:
    return {MODEL_LABELS.get(k, k): r for k, r in reports.items()}


def emit_reports(result: ExperimentResult, formats=("csv", "json", "svg"), out_dir=None) -> list[Path]:
    """One table per antibiotic in the requested formats plus a combined CSV.

    Failed or empty tasks produce header-only tables.
    """
    out = Path(out_dir) if out_dir is not None else result.output_dir / "reports"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create report directory {out}: {exc}") from None
    written = []
    combined = io.StringIO()
    cw = csv.writer(combined, lineterminator="\n")
    cw.writerow(["Antibiotic"] + M.table_header())
    for ab, task in result.tasks.items():
        labelled = _labelled(task.reports)
        if "csv" in formats:
            written.append(out / f"{ab}_metrics.csv")
            _write(written[-1], M.to_csv(labelled))
        if "json" in formats:
            written.append(out / f"{ab}_metrics.json")
            _write(written[-1], M.to_json(task.reports))
        if "svg" in formats and task.reports:
            table = {name: dict(zip((c for c, _ in M.COLUMNS), rep.row())) for name, rep in labelled.items()}
            written.append(out / f"{ab}_metrics.svg")
            _write(written[-1], metric_bars(table, f"{ab}: test-set metrics"))
        if "svg" in formats and task.shap_rows:
            written.append(out / f"{ab}_shap_beeswarm.svg")
            _write(written[-1], beeswarm(task.shap_rows, f"{ab}: GBT SHAP values (log-odds)"))
        for row in M.table_rows(labelled):
            cw.writerow([ab] + row)
    if "csv" in formats:
        written.append(out / "summary.csv")
        _write(written[-1], combined.getvalue())
    return written


def load_result(out_dir) -> ExperimentResult:
    """Rebuild an ExperimentResult from a finished run directory."""
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.is_file():
        raise ConfigurationError(f"{out} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    result = ExperimentResult(out)
    # status is key-sorted on disk; the list keeps the run order
    for ab in manifest.get("antibiotics", list(manifest["status"])):
        status = manifest["status"][ab]
        task = TaskResult(ab, status=status["status"], error=status["error"], seeds=manifest["seeds"].get(ab, {}))
        metrics_path = out / ab / "metrics.json"
        if metrics_path.is_file():
            raw = json.loads(metrics_path.read_text())
            task.reports = {k: M.MetricReport.from_dict(v) for k, v in raw.items()}
            task.reports = {k: task.reports[k] for k in ("rf", "xgb", "cnn", "ensemble") if k in task.reports}
        summary = out / ab / "shap_summary.csv"
        if summary.is_file():
            with open(summary, newline="") as fh:
                task.shap_rows = [
                    {"rank": int(r["rank"]), "feature": r["feature"], "sample": int(r["sample"]),
                     "shap": float(r["shap"]), "token": int(r["token"])}
                    for r in csv.DictReader(fh)
                ]
        result.tasks[ab] = task
    return result


__all__ = [
    "Dataset",
    "ExperimentResult",
    "TaskResult",
    "emit_reports",
    "load_dataset",
    "load_result",
    "read_predictions",
    "run_experiment",
    "run_task",
    "score_predictions",
    "write_manifest",
    "write_predictions",
]
