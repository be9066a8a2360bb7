"""Synthetic SNP matrices with a known label-generating rule.

The planted-motif set is the end-to-end trainability check: a sample is
resistant exactly when a fixed 3-token motif sits at a fixed locus, and the
motif is scrubbed from everywhere else so a translation-invariant detector
can solve the task.
"""

from __future__ import annotations

import numpy as np

from .data import SnpMatrix


def scrub_motif(tokens: np.ndarray, motif, keep_at=None, keep_rows=None) -> None:
    """Break every occurrence of ``motif`` in place by rewriting its middle token.

    Occurrences starting at column ``keep_at`` in ``keep_rows`` survive.
    """
    a, b, c = motif
    for _ in range(16):
        hits = (tokens[:, :-2] == a) & (tokens[:, 1:-1] == b) & (tokens[:, 2:] == c)
        if keep_at is not None and keep_rows is not None:
            hits[keep_rows, keep_at] = False
        rows, cols = np.nonzero(hits)
        if len(rows) == 0:
            return
        tokens[rows, cols + 1] = (b + 1 + (tokens[rows, cols] % 3)) % 5
    raise RuntimeError("motif scrubbing did not converge")


def planted_motif_dataset(
    n_samples=600,
    seq_len=2048,
    motif=(1, 3, 2),
    locus=None,
    positive_rate=0.25,
    variant_rate=0.05,
    seed=0,
):
    """Build ``(SnpMatrix, labels)`` for the planted-motif task.

    Background columns mimic SNP loci: each has a reference token that most
    samples carry, and a ``variant_rate`` fraction of cells is redrawn at
    random. Half of the negatives carry two of the three motif tokens at the
    locus so a single-locus rule is not enough.
    """
    rng = np.random.default_rng(seed)
    locus = seq_len // 2 if locus is None else locus
    ref = rng.integers(0, 4, size=seq_len)
    tokens = np.tile(ref, (n_samples, 1)).astype(np.uint8)
    variant = rng.random((n_samples, seq_len)) < variant_rate
    tokens[variant] = rng.integers(0, 5, size=int(variant.sum()))

    n_pos = int(round(positive_rate * n_samples))
    labels = np.zeros(n_samples, dtype=np.int8)
    pos_rows = np.sort(rng.choice(n_samples, size=n_pos, replace=False))
    labels[pos_rows] = 1
    neg_rows = np.flatnonzero(labels == 0)
    near = rng.choice(neg_rows, size=len(neg_rows) // 2, replace=False)
    for r in near:
        keep = rng.choice(3, size=2, replace=False)
        for j in keep:
            tokens[r, locus + j] = motif[j]
    scrub_motif(tokens, motif)
    tokens[pos_rows, locus : locus + 3] = motif
    scrub_motif(tokens, motif, keep_at=locus, keep_rows=pos_rows)

    ids = tuple(f"S{i:04d}" for i in range(n_samples))
    positions = np.arange(1, seq_len + 1, dtype=np.int64) * 100
    return SnpMatrix(ids, positions, tokens), labels
