"""Experiment configuration: dataclasses mirrored by a YAML file.

Example::

    seed: 0
    data:
      matrix: snps.tsv.gz
      phenotypes: labels.tsv
      annotation: genes.tsv        # optional
    antibiotics: [CIP, CTX, CTZ, GEN]
    split: {fractions: [0.72, 0.08, 0.2]}
    models: [cnn, xgb, rf, ensemble]
    cnn: {epochs: 100, patience: 10}
    gbt: {n_rounds: 300}
    rf: {n_trees: 400}
    output: {dir: results, formats: [csv, json, svg]}

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .trees.boosting import GbtConfig
from .trees.forest import RfConfig

MODEL_KEYS = ("cnn", "xgb", "rf", "ensemble")
MODEL_LABELS = {"rf": "Random Forest", "xgb": "GBT", "cnn": "1D CNN", "ensemble": "Ensemble"}
REPORT_FORMATS = ("csv", "json", "svg")


def _build(cls, data, where):
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


@dataclass
class SyntheticSource:
    """Planted-motif data generated in memory; the label column is ``MOTIF``."""

    n_samples: int = 600
    seq_len: int = 2048
    positive_rate: float = 0.25
    variant_rate: float = 0.05
    seed: int = 0


@dataclass
class DataConfig:
    matrix: str | None = None
    phenotypes: str | None = None
    annotation: str | None = None
    delimiter: str = "\t"
    encoding: str = "auto"
    synthetic: SyntheticSource | None = None

    def __post_init__(self):
        if isinstance(self.synthetic, dict):
            self.synthetic = _build(SyntheticSource, self.synthetic, "data.synthetic")
        if self.synthetic is None and (self.matrix is None or self.phenotypes is None):
            raise ConfigurationError("data needs 'matrix' and 'phenotypes' paths (or 'synthetic')")

    def resolve(self, base: Path) -> "DataConfig":
        """Paths relative to ``base`` (the config file's directory)."""
        fix = lambda p: None if p is None else str((base / p) if not Path(p).is_absolute() else p)  # noqa: E731
        return DataConfig(fix(self.matrix), fix(self.phenotypes), fix(self.annotation),
                          self.delimiter, self.encoding, self.synthetic)

    def check_paths(self):
        for name in ("matrix", "phenotypes", "annotation"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigurationError(f"data.{name}: file not found: {p}")


@dataclass
class SplitConfig:
    fractions: tuple[float, float, float] = (0.72, 0.08, 0.2)
    seed: int | None = None  # None: derived from the global seed

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if len(self.fractions) != 3:
            raise ConfigurationError("split.fractions needs (train, val, test)")


@dataclass
class CnnConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    patience: int = 10
    dropout: float = 0.3
    l2: float = 1e-4
    dtype: str = "float32"


@dataclass
class ExplainConfig:
    top_k: int = 10


@dataclass
class OutputConfig:
    dir: str = "results"
    formats: tuple[str, ...] = REPORT_FORMATS

    def __post_init__(self):
        self.formats = tuple(self.formats)
        bad = sorted(set(self.formats) - set(REPORT_FORMATS))
        if bad:
            raise ConfigurationError(f"output.formats: unknown format(s) {bad}")


@dataclass
class ExperimentConfig:
    data: DataConfig
    antibiotics: tuple[str, ...] | None = None  # None: every label column
    seed: int = 0
    split: SplitConfig = field(default_factory=SplitConfig)
    models: tuple[str, ...] = MODEL_KEYS
    threshold: float = 0.5
    cnn: CnnConfig = field(default_factory=CnnConfig)
    gbt: GbtConfig = field(default_factory=GbtConfig)
    rf: RfConfig = field(default_factory=RfConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int | None = None

    def __post_init__(self):
        self.models = tuple(self.models)
        bad = sorted(set(self.models) - set(MODEL_KEYS))
        if bad:
            raise ConfigurationError(f"models: unknown model(s) {bad}; choose from {list(MODEL_KEYS)}")
        if not self.models:
            raise ConfigurationError("models: select at least one model")
        if "ensemble" in self.models and not {"cnn", "xgb"} <= set(self.models):
            raise ConfigurationError("models: 'ensemble' needs both 'cnn' and 'xgb'")
        if self.antibiotics is not None:
            self.antibiotics = tuple(str(a) for a in self.antibiotics)
        if not 0 <= self.threshold <= 1:
            raise ConfigurationError("threshold must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a mapping")
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown top-level key(s) {unknown}")
        if "data" not in d:
            raise ConfigurationError("config needs a 'data' section")
        sections = {"data": DataConfig, "split": SplitConfig, "cnn": CnnConfig, "gbt": GbtConfig,
                    "rf": RfConfig, "explain": ExplainConfig, "output": OutputConfig}
        for key, sub in sections.items():
            if key in d:
                d[key] = _build(sub, d[key], key)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))  # tuples to lists

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Parse a YAML config; data paths resolve relative to the file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(raw or {})
    cfg.data = cfg.data.resolve(path.parent)
    out = Path(cfg.output.dir)
    if not out.is_absolute():
        cfg.output.dir = str(path.parent / out)
    return cfg


def derive_seed(seed: int, tag: str) -> int:
    """Independent 32-bit seed per stage: ``sha256("{seed}:{tag}")``.

    Adding a stage never shifts the seeds of the others.
    """
    return int.from_bytes(hashlib.sha256(f"{seed}:{tag}".encode()).digest()[:4], "little")
