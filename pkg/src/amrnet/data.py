"""Ingestion of SNP token matrices, phenotype labels and gene annotations.

Token mapping is fixed project-wide::

    A -> 0, C -> 1, G -> 2, T -> 3, N -> 4

Matrix files are delimited text. The header row is ``sample_id`` followed by
one ``X<position>`` column per locus, positions strictly ascending. Cells hold
either the nucleotide letter (case-insensitive) or the integer token itself.
Every reader in this module accepts plain or gzip-compressed input.
"""

from __future__ import annotations

import bisect
import contextlib
import gzip
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, StructuralError

NUCLEOTIDES = "ACGTN"
N_TOKENS = len(NUCLEOTIDES)
ANTIBIOTICS = ("CIP", "CTX", "CTZ", "GEN")

_INVALID = 255


def _build_lut(letters: bool, digits: bool) -> np.ndarray:
    lut = np.full(256, _INVALID, dtype=np.uint8)
    if letters:
        for tok, sym in enumerate(NUCLEOTIDES):
            lut[ord(sym)] = tok
            lut[ord(sym.lower())] = tok
    if digits:
        for tok in range(N_TOKENS):
            lut[ord(str(tok))] = tok
    return lut


_LUTS = {
    "auto": _build_lut(True, True),
    "nucleotide": _build_lut(True, False),
    "integer": _build_lut(False, True),
}


def encode_token(symbol: str) -> int:
    """Map a nucleotide symbol to its integer token.

    >>> encode_token("a")
    0
    """
    if not isinstance(symbol, str) or len(symbol) != 1:
        raise DataError(f"expected a single nucleotide symbol, got {symbol!r}")
    tok = NUCLEOTIDES.find(symbol.upper())
    if tok < 0:
        raise DataError(f"unknown nucleotide symbol {symbol!r}")
    return tok


def decode_token(token: int) -> str:
    if not 0 <= token < N_TOKENS:
        raise DataError(f"token {token} outside 0..4")
    return NUCLEOTIDES[token]


@contextlib.contextmanager
def open_text(source) -> Iterator[io.TextIOBase]:
    """Yield a text stream for a path or stream, transparently un-gzipping."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as raw:
            with _wrap_binary(raw) as text:
                yield text
        return
    if isinstance(source, io.TextIOBase):
        yield source
        return
    # binary file-like
    with _wrap_binary(source) as text:
        yield text


@contextlib.contextmanager
def _wrap_binary(raw):
    buffered = raw if hasattr(raw, "peek") else io.BufferedReader(raw)
    magic = buffered.peek(2)[:2]
    if magic == b"\x1f\x8b":
        stream = gzip.GzipFile(fileobj=buffered, mode="rb")
    else:
        stream = buffered
    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    try:
        yield text
    finally:
        text.detach()


def _data_lines(stream: Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if line.strip():
            yield lineno, line


# --------------------------------------------------------------------------
# SNP matrix


@dataclass(frozen=True)
class MatrixFormat:
    """How a matrix file is laid out.

    ``encoding`` is ``"nucleotide"`` (A/C/G/T/N cells), ``"integer"`` (0..4
    cells) or ``"auto"`` (either, per cell). ``prefix`` is the header prefix
    written in front of each position on output.
    """

    delimiter: str = "\t"
    encoding: str = "auto"
    prefix: str = "X"
    id_header: str = "sample_id"

    def __post_init__(self):
        if self.encoding not in _LUTS:
            raise ConfigurationError(f"unknown matrix encoding {self.encoding!r}")
        if len(self.delimiter) != 1:
            raise ConfigurationError("delimiter must be a single character")


@dataclass(frozen=True, eq=False)
class SnpMatrix:
    """Samples by ordered SNP loci, each cell a token in 0..4.

    The token grid is stored as a read-only C-contiguous ``uint8`` array.
    """

    sample_ids: tuple[str, ...]
    positions: np.ndarray
    tokens: np.ndarray

    def __post_init__(self):
        positions = np.ascontiguousarray(self.positions, dtype=np.int64)
        tokens = np.ascontiguousarray(self.tokens, dtype=np.uint8)
        ids = tuple(str(s) for s in self.sample_ids)
        if positions.ndim != 1:
            raise StructuralError("positions must be one-dimensional")
        if tokens.ndim != 2:
            if tokens.size == 0:
                tokens = tokens.reshape(len(ids), len(positions))
            else:
                raise StructuralError("tokens must be a 2-D grid")
        if tokens.shape != (len(ids), len(positions)):
            raise StructuralError(
                f"token grid shape {tokens.shape} does not match "
                f"{len(ids)} samples x {len(positions)} positions"
            )
        if len(positions) > 1 and np.any(np.diff(positions) <= 0):
            bad = int(np.flatnonzero(np.diff(positions) <= 0)[0])
            raise StructuralError(
                f"positions not strictly ascending at column {bad + 2}: "
                f"{positions[bad]} then {positions[bad + 1]}"
            )
        if tokens.size and tokens.max() >= N_TOKENS:
            r, c = np.argwhere(tokens >= N_TOKENS)[0]
            raise DataError(f"token {tokens[r, c]} outside 0..4", row=r + 2, column=c + 2)
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(s for s in ids if s in seen or seen.add(s))
            raise StructuralError(f"duplicate sample id {dup!r}")
        positions.setflags(write=False)
        tokens.setflags(write=False)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "tokens", tokens)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def n_loci(self) -> int:
        return len(self.positions)

    @property
    def feature_names(self) -> list[str]:
        return [f"X{p}" for p in self.positions]

    def index_of(self, sample_ids: Sequence[str]) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(self.sample_ids)}
        try:
            return np.array([lookup[s] for s in sample_ids], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"sample id {exc.args[0]!r} not in matrix") from None

    def subset(self, rows) -> "SnpMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return SnpMatrix(
            tuple(self.sample_ids[i] for i in rows), self.positions, self.tokens[rows]
        )

    def __eq__(self, other):
        if not isinstance(other, SnpMatrix):
            return NotImplemented
        return (
            self.sample_ids == other.sample_ids
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.tokens, other.tokens)
        )


def parse_position(name: str) -> int:
    """``"X4435738"`` -> 4435738; a single leading letter is optional."""
    text = name.strip()
    if text[:1].isalpha():
        text = text[1:]
    if not text.isdigit():
        raise DataError(f"cannot parse locus position from {name!r}")
    return int(text)


def parse_snp_matrix(source, fmt: MatrixFormat | None = None) -> SnpMatrix:
    """Read a delimited SNP matrix from a path or stream.

    Raises:
        StructuralError: ragged rows, non-ascending positions, duplicate ids.
        DataError: unreadable header positions or invalid cells, with the
            1-based row/column of the first offending cell.
    """
    fmt = fmt or MatrixFormat()
    lut = _LUTS[fmt.encoding]
    with open_text(source) as stream:
        lines = _data_lines(stream)
        try:
            header_lineno, header = next(lines)
        except StopIteration:
            raise StructuralError("matrix file is empty (no header row)") from None
        head = header.split(fmt.delimiter)
        positions = []
        for col, name in enumerate(head[1:], start=2):
            try:
                positions.append(parse_position(name))
            except DataError:
                raise DataError(
                    f"cannot parse locus position from header {name!r}",
                    row=header_lineno,
                    column=col,
                ) from None
        width = len(positions)
        ids: list[str] = []
        rows: list[np.ndarray] = []
        for lineno, line in lines:
            parts = line.split(fmt.delimiter)
            if len(parts) != width + 1:
                raise StructuralError(
                    f"row {lineno} has {len(parts)} fields, header has {width + 1}"
                )
            ids.append(parts[0])
            rows.append(_encode_cells(parts, lut, lineno))
    tokens = np.vstack(rows) if rows else np.zeros((0, width), dtype=np.uint8)
    return SnpMatrix(tuple(ids), np.array(positions, dtype=np.int64), tokens)


def _encode_cells(parts: list[str], lut: np.ndarray, lineno: int) -> np.ndarray:
    cells = parts[1:]
    joined = "".join(cells)
    if len(joined) != len(cells):
        for col, cell in enumerate(cells, start=2):
            if len(cell) != 1:
                raise DataError(f"invalid cell {cell!r}", row=lineno, column=col)
    try:
        raw = np.frombuffer(joined.encode("ascii"), dtype=np.uint8)
    except UnicodeEncodeError as exc:
        raise DataError(
            f"invalid cell {joined[exc.start]!r}", row=lineno, column=exc.start + 2
        ) from None
    tokens = lut[raw]
    if tokens.size and tokens.max() == _INVALID:
        col = int(np.argmax(tokens == _INVALID))
        raise DataError(f"invalid cell {cells[col]!r}", row=lineno, column=col + 2)
    return tokens


def write_snp_matrix(matrix: SnpMatrix, stream, fmt: MatrixFormat | None = None) -> None:
    """Serialize ``matrix``; integer cells when ``fmt.encoding == "integer"``."""
    fmt = fmt or MatrixFormat(encoding="nucleotide")
    d = fmt.delimiter
    symbols = "01234" if fmt.encoding == "integer" else NUCLEOTIDES
    table = np.frombuffer(symbols.encode(), dtype=np.uint8)
    header = d.join([fmt.id_header] + [f"{fmt.prefix}{p}" for p in matrix.positions])
    stream.write(header + "\n")
    for sid, row in zip(matrix.sample_ids, matrix.tokens):
        cells = table[row].tobytes().decode("ascii")
        stream.write(sid + d + d.join(cells) + "\n")


# --------------------------------------------------------------------------
# Phenotypes


@dataclass(frozen=True)
class PhenotypeTable:
    """Binary resistance labels keyed by antibiotic, then sample id."""

    labels: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def antibiotics(self) -> list[str]:
        return list(self.labels)

    def align(self, antibiotic: str, matrix: SnpMatrix) -> tuple[np.ndarray, np.ndarray]:
        """Row indices into ``matrix`` and labels for every labeled sample.

        Rows come back in matrix order.
        """
        if antibiotic not in self.labels:
            raise ConfigurationError(f"no labels for antibiotic {antibiotic!r}")
        table = self.labels[antibiotic]
        lookup = {s: i for i, s in enumerate(matrix.sample_ids)}
        missing = sorted(s for s in table if s not in lookup)
        if missing:
            shown = ", ".join(missing[:5])
            raise DataError(
                f"{len(missing)} labeled sample(s) absent from matrix for {antibiotic}: {shown}"
            )
        rows = np.array(sorted(lookup[s] for s in table), dtype=np.int64)
        y = np.array([table[matrix.sample_ids[r]] for r in rows], dtype=np.int8)
        return rows, y

    def class_counts(self, antibiotic: str) -> tuple[int, int]:
        values = list(self.labels[antibiotic].values())
        return values.count(0), values.count(1)


_MISSING = {"", "na", "nan", "none", "null", "."}


def _parse_label(cell: str, lineno: int, col: int):
    text = cell.strip()
    if text.lower() in _MISSING:
        return None
    if text in ("0", "1"):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        value = None
    if value in (0.0, 1.0):
        return int(value)
    raise DataError(f"label {cell!r} is not 0 or 1", row=lineno, column=col)


def parse_phenotypes(source, delimiter: str = "\t") -> PhenotypeTable:
    """Read labels in long (sample_id, antibiotic, label) or wide layout.

    A wide file has sample ids in the first column and one column per
    antibiotic; blank or ``NA`` cells mean the label is absent.
    """
    labels: dict[str, dict[str, int]] = {}
    with open_text(source) as stream:
        lines = _data_lines(stream)
        try:
            header_lineno, header = next(lines)
        except StopIteration:
            return PhenotypeTable({})
        head = [h.strip() for h in header.split(delimiter)]
        long_form = [h.lower() for h in head] == ["sample_id", "antibiotic", "label"]
        if not long_form:
            for name in head[1:]:
                labels.setdefault(name, {})
        for lineno, line in lines:
            parts = line.split(delimiter)
            if len(parts) != len(head):
                raise StructuralError(
                    f"row {lineno} has {len(parts)} fields, header has {len(head)}"
                )
            sid = parts[0].strip()
            if long_form:
                value = _parse_label(parts[2], lineno, 3)
                if value is None:
                    continue
                per_drug = labels.setdefault(parts[1].strip(), {})
                if sid in per_drug and per_drug[sid] != value:
                    raise DataError(f"conflicting labels for {sid}", row=lineno)
                per_drug[sid] = value
            else:
                for col, (name, cell) in enumerate(zip(head[1:], parts[1:]), start=2):
                    value = _parse_label(cell, lineno, col)
                    if value is not None:
                        labels[name][sid] = value
    return PhenotypeTable(labels)


# --------------------------------------------------------------------------
# Splitting and weighting


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint index lists into a label vector (or matrix rows)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        as_idx = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        return cls(as_idx("train"), as_idx("val"), as_idx("test"), int(d["seed"]))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels, fractions=(0.8, 0.0, 0.2), seed: int = 0) -> DatasetSplit:
    """Class-stratified train/validation/test partition.

    Within each class a seeded permutation is cut into test, validation and
    train blocks in that order, so the test block only depends on the seed and
    the test fraction. Per-class block sizes are rounded proportions; a
    requested (non-zero) partition gets at least one sample of every class.
    """
    y = np.asarray(labels)
    f_train, f_val, f_test = (float(f) for f in fractions)
    if min(f_train, f_test) <= 0 or f_val < 0:
        raise ConfigurationError("train and test fractions must be positive")
    if not math.isclose(f_train + f_val + f_test, 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"fractions {fractions} do not sum to 1")
    n_parts = 2 + (f_val > 0)
    classes = (0, 1)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c in classes:
        idx = np.flatnonzero(y == c)
        n = len(idx)
        if n < n_parts:
            raise ConfigurationError(
                f"class {c} has {n} sample(s); need at least {n_parts} to fill every partition"
            )
        perm = rng.permutation(idx)
        n_test = max(1, _round_half_up(f_test * n))
        n_val = max(1, _round_half_up(f_val * n)) if f_val > 0 else 0
        n_test = min(n_test, n - n_val - 1)
        test.append(perm[:n_test])
        val.append(perm[n_test : n_test + n_val])
        train.append(perm[n_test + n_val :])
    cat = lambda parts: np.sort(np.concatenate(parts)).astype(np.int64)  # noqa: E731
    return DatasetSplit(cat(train), cat(val), cat(test), int(seed))


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights (w0 for susceptible, w1 for resistant)."""

    w0: float = 1.0
    w1: float = 1.0

    def sample_weights(self, labels) -> np.ndarray:
        y = np.asarray(labels)
        return np.where(y == 1, self.w1, self.w0).astype(np.float64)

    def to_dict(self) -> dict:
        return {"w0": self.w0, "w1": self.w1}


def class_weights(train_labels) -> ClassWeights:
    """Inverse-square-root-frequency weights, scaled to a mean sample weight of 1."""
    y = np.asarray(train_labels)
    n0 = int(np.sum(y == 0))
    n1 = int(np.sum(y == 1))
    if n0 == 0 or n1 == 0:
        raise ConfigurationError("class weights need both classes in the training labels")
    scale = (n0 + n1) / (math.sqrt(n0) + math.sqrt(n1))
    return ClassWeights(w0=scale / math.sqrt(n0), w1=scale / math.sqrt(n1))


# --------------------------------------------------------------------------
# Gene annotation


@dataclass(frozen=True)
class GeneAnnotation:
    """Sorted, non-overlapping gene intervals with inclusive ends."""

    starts: tuple[int, ...] = ()
    ends: tuple[int, ...] = ()
    names: tuple[str, ...] = ()

    @classmethod
    def from_intervals(cls, intervals: Iterable[tuple[str, int, int]]) -> "GeneAnnotation":
        rows = sorted(((int(s), int(e), str(n)) for n, s, e in intervals))
        for s, e, n in rows:
            if s > e:
                raise DataError(f"gene {n}: start {s} > end {e}")
        for (s0, e0, n0), (s1, e1, n1) in zip(rows, rows[1:]):
            if s1 <= e0:
                raise DataError(f"overlapping intervals {n0} [{s0}, {e0}] and {n1} [{s1}, {e1}]")
        return cls(
            tuple(r[0] for r in rows), tuple(r[1] for r in rows), tuple(r[2] for r in rows)
        )

    def __len__(self):
        return len(self.starts)

    def lookup(self, position: int) -> str | None:
        return map_position_to_gene(self, position)


def parse_gene_annotation(source) -> GeneAnnotation:
    """Read ``gene_name<TAB>start<TAB>end`` rows; ``#`` lines are comments."""
    intervals = []
    first = True
    with open_text(source) as stream:
        for lineno, line in _data_lines(stream):
            if line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise StructuralError(f"row {lineno}: expected 3 tab-separated fields")
            name, start, end = (p.strip() for p in parts)
            is_header = first and not start.lstrip("-").isdigit()
            first = False
            if is_header:
                continue
            try:
                s, e = int(start), int(end)
            except ValueError:
                raise DataError("non-integer coordinate", row=lineno) from None
            if s > e:
                raise DataError(f"gene {name}: start {s} > end {e}", row=lineno)
            intervals.append((name, s, e))
    return GeneAnnotation.from_intervals(intervals)


def map_position_to_gene(annotation: GeneAnnotation, position: int) -> str | None:
    """Name of the gene whose interval contains ``position``, else None."""
    i = bisect.bisect_right(annotation.starts, position) - 1
    if i >= 0 and position <= annotation.ends[i]:
        return annotation.names[i]
    return None
