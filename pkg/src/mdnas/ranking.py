"""Kendall rank correlation and the per-epoch ranking consistency protocol.

tau = (P - Q) / (P + Q) over concordant/discordant pairs, with tied pairs
excluded from both counts.  p_tau = (tau + 1) / 2 is the probability that a
pairwise comparison agrees between the two rankings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RankStats:
    concordant: int
    discordant: int
    tau: float
    p_tau: float


@dataclass(frozen=True)
class TauTrace:
    taus: tuple[float, ...]
    cohort_size: int


def kendall_tau(rank_a: Sequence[float], rank_b: Sequence[float]) -> RankStats:
    """Pair-enumeration Kendall's tau.  Cohorts here are small, so the
    quadratic enumeration (vectorized over the pair matrix) is the shipped
    algorithm."""
    a = np.asarray(rank_a, dtype=float)
    b = np.asarray(rank_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length 1-d sequences")
    m = len(a)
    if m < 2:
        raise ValueError("need at least 2 items to rank")
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    upper = np.triu_indices(m, k=1)
    prod = sa[upper] * sb[upper]
    concordant = int(np.sum(prod > 0))
    discordant = int(np.sum(prod < 0))
    total = concordant + discordant
    if total == 0:
        raise ValueError("all pairs are tied; tau is undefined")
    tau = (concordant - discordant) / total
    return RankStats(concordant, discordant, tau, (tau + 1.0) / 2.0)


def tau_trace(score_matrix: Sequence[Sequence[float]]) -> TauTrace:
    """Kendall's tau of each epoch's scores against the final epoch's."""
    scores = np.asarray(score_matrix, dtype=float)
    if scores.ndim != 2 or scores.shape[0] < 2 or scores.shape[1] < 2:
        raise ValueError("score matrix must be (epochs >= 2) x (cohort >= 2)")
    final = scores[-1]
    taus = tuple(kendall_tau(row, final).tau for row in scores)
    return TauTrace(taus, scores.shape[1])


def mean_tau(trace: TauTrace, exclude_final: bool = True) -> float:
    taus = trace.taus[:-1] if exclude_final else trace.taus
    if not taus:
        raise ValueError("trace has no entries to average")
    return float(np.mean(taus))


def read_scores_csv(path) -> np.ndarray:
    """Load a (epoch, arch_id, accuracy) CSV into an epochs x cohort matrix.

    Every architecture must be scored at every epoch; ragged input is
    rejected."""
    by_epoch: dict[int, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            epoch = int(row["epoch"])
            by_epoch.setdefault(epoch, {})[row["arch_id"]] = float(row["accuracy"])
    if not by_epoch:
        raise ValueError("empty scores file")
    epochs = sorted(by_epoch)
    arch_ids = sorted(by_epoch[epochs[0]])
    matrix = np.empty((len(epochs), len(arch_ids)))
    for i, epoch in enumerate(epochs):
        scores = by_epoch[epoch]
        if sorted(scores) != arch_ids:
            raise ValueError(f"epoch {epoch} does not score the same architectures")
        matrix[i] = [scores[a] for a in arch_ids]
    return matrix


def write_tau_csv(path, trace: TauTrace) -> None:
    """Emit (epoch, tau, p_tau) rows followed by a mean_tau summary line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "tau", "p_tau"])
        for epoch, tau in enumerate(trace.taus):
            writer.writerow([epoch, f"{tau:.6f}", f"{(tau + 1) / 2:.6f}"])
        mt = mean_tau(trace)
        writer.writerow(["mean", f"{mt:.6f}", f"{(mt + 1) / 2:.6f}"])
