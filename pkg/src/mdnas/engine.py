"""The search loop: sample one op per edge, evaluate the assembled
architecture once, feed the shared accuracy back to every edge, update every
edge's distribution.  Norm and reduction cells are searched jointly with
disjoint distributions.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .distribution import (
    AGGREGATIONS,
    EdgeDistribution,
    differentials,
    init_uniform,
    record_feedback,
    sample_gate,
    update_probs,
)
from .evaluator import SurrogateCurveEvaluator, TabularOracle
from .search_space import CELL_KINDS, Genotype, build_cell_template, derive_genotype


@dataclass
class SearchConfig:
    num_intermediate: int = 4
    num_ops: int = 8
    epochs: int = 100
    alpha: float = 0.01
    k: int = 2
    seed: int = 0
    evaluator: dict = field(default_factory=lambda: {"type": "tabular"})
    early_stop: bool = False
    convergence_threshold: float = 0.9
    acc_aggregation: str = "latest"
    exclude_none: bool = False

    def __post_init__(self):
        if self.num_intermediate < 1 or self.num_ops < 1:
            raise ValueError("num_intermediate and num_ops must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.convergence_threshold <= 1:
            raise ValueError("convergence_threshold must lie in (0, 1]")
        if self.acc_aggregation not in AGGREGATIONS:
            raise ValueError(f"acc_aggregation must be one of {AGGREGATIONS}")
        if not isinstance(self.evaluator, dict) or "type" not in self.evaluator:
            raise ValueError("evaluator spec must be a dict with a 'type' key")

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()


_EVALUATOR_KEYS = {
    "type",
    "seed",
    "q",
    "argmax_margin",
    "interaction_strength",
    "tau_c",
    "consistency",
    "consistency_final",
    "ramp_epochs",
}


def build_evaluator(config: SearchConfig):
    """Construct the evaluator named by config.evaluator over the joint
    norm+reduction edge list (2 x |edges per cell|)."""
    spec = dict(config.evaluator)
    unknown = set(spec) - _EVALUATOR_KEYS
    if unknown:
        raise ValueError(f"unknown evaluator keys: {sorted(unknown)}")
    kind = spec["type"]
    seed = spec.get("seed", config.seed)
    num_edges = 2 * sum(i + 1 for i in range(1, config.num_intermediate + 1))
    if "q" in spec:
        oracle = TabularOracle(
            np.asarray(spec["q"], dtype=float),
            seed=seed,
            num_intermediate=config.num_intermediate,
            interaction_strength=spec.get("interaction_strength", 0.0),
        )
        if oracle.num_edges != num_edges or oracle.num_ops != config.num_ops:
            raise ValueError("inline q table does not match the search space")
    else:
        oracle = TabularOracle.random(
            num_edges,
            config.num_ops,
            seed=seed,
            argmax_margin=spec.get("argmax_margin", 0.0),
            num_intermediate=config.num_intermediate,
            interaction_strength=spec.get("interaction_strength", 0.0),
        )
    if kind == "tabular":
        return oracle
    if kind == "surrogate":
        return SurrogateCurveEvaluator(
            oracle,
            tau_c=spec.get("tau_c", 10.0),
            consistency=spec.get("consistency", 1.0),
            consistency_final=spec.get("consistency_final"),
            ramp_epochs=spec.get("ramp_epochs"),
            seed=seed,
        )
    raise ValueError(f"unknown evaluator type: {kind!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    arch: tuple[int, ...]  # sampled op per edge, norm block then reduction
    accuracy: float
    probs: tuple[tuple[float, ...], ...]  # post-update, per edge
    max_probs: tuple[float, ...]
    entropies: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "arch": list(self.arch),
            "accuracy": self.accuracy,
            "probs": [list(p) for p in self.probs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EpochRecord":
        probs = tuple(tuple(p) for p in doc["probs"])
        return cls(
            epoch=doc["epoch"],
            arch=tuple(doc["arch"]),
            accuracy=doc["accuracy"],
            probs=probs,
            max_probs=tuple(max(p) for p in probs),
            entropies=tuple(_entropy(np.asarray(p)) for p in probs),
        )


def _entropy(p: np.ndarray) -> float:
    p = np.clip(p, 1e-300, None)
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class SearchResult:
    genotype_norm: Genotype
    genotype_reduction: Genotype
    trace: tuple[EpochRecord, ...]


class Searcher:
    """Owns the joint search state and advances it one epoch at a time.

    Each edge gets its own RNG substream keyed by its global index, so the
    sampled trajectory does not depend on edge iteration order and survives
    checkpoint round-trips bit-for-bit.
    """

    def __init__(self, config: SearchConfig):
        self.config = config
        self.templates = tuple(
            build_cell_template(config.num_intermediate, kind) for kind in CELL_KINDS
        )
        self.edges_per_cell = self.templates[0].num_edges
        self.num_edges = 2 * self.edges_per_cell
        self.evaluator = build_evaluator(config)
        self.dists = [init_uniform(config.num_ops) for _ in range(self.num_edges)]
        self.rngs = [
            np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(i,)))
            )
            for i in range(self.num_edges)
        ]
        self.epoch = 0
        self.trace: list[EpochRecord] = []

    def step(self) -> EpochRecord:
        self.epoch += 1
        gates = [sample_gate(d, rng) for d, rng in zip(self.dists, self.rngs)]
        arch = tuple(g.sampled_op for g in gates)
        accuracy = self.evaluator.evaluate(arch, self.epoch)
        new_dists = []
        for dist, gate in zip(self.dists, gates):
            dist = record_feedback(dist, gate, accuracy, self.config.acc_aggregation)
            dist = update_probs(dist, differentials(dist), self.config.alpha)
            new_dists.append(dist)
        self.dists = new_dists
        record = EpochRecord(
            epoch=self.epoch,
            arch=arch,
            accuracy=accuracy,
            probs=tuple(tuple(float(v) for v in d.probs) for d in self.dists),
            max_probs=tuple(float(d.probs.max()) for d in self.dists),
            entropies=tuple(_entropy(d.probs) for d in self.dists),
        )
        self.trace.append(record)
        return record

    def converged(self) -> bool:
        return all(
            float(d.probs.max()) >= self.config.convergence_threshold
            for d in self.dists
        )

    def genotypes(self) -> tuple[Genotype, Genotype]:
        out = []
        for cell_idx, template in enumerate(self.templates):
            block = self.dists[
                cell_idx * self.edges_per_cell : (cell_idx + 1) * self.edges_per_cell
            ]
            out.append(
                derive_genotype(
                    template,
                    [d.probs for d in block],
                    self.config.k,
                    exclude_none=self.config.exclude_none,
                )
            )
        return tuple(out)

    def run(self) -> SearchResult:
        while self.epoch < self.config.epochs:
            self.step()
            if self.config.early_stop and self.converged():
                break
        norm, reduction = self.genotypes()
        return SearchResult(norm, reduction, tuple(self.trace))

    def checkpoint(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "epoch": self.epoch,
            "distributions": [d.to_dict() for d in self.dists],
            "rng_states": [rng.bit_generator.state for rng in self.rngs],
            "trace": [r.to_dict() for r in self.trace],
        }

    @classmethod
    def from_checkpoint(cls, snapshot: dict, config: SearchConfig | None = None) -> "Searcher":
        if config is None:
            config = SearchConfig.from_dict(snapshot["config"])
        if config.digest() != snapshot["config_hash"]:
            raise ValueError("checkpoint config hash does not match")
        searcher = cls(config)
        searcher.epoch = snapshot["epoch"]
        searcher.dists = [
            EdgeDistribution.from_dict(doc) for doc in snapshot["distributions"]
        ]
        if len(searcher.dists) != searcher.num_edges:
            raise ValueError("checkpoint has the wrong number of edges")
        for rng, state in zip(searcher.rngs, snapshot["rng_states"]):
            rng.bit_generator.state = state
        searcher.trace = [EpochRecord.from_dict(doc) for doc in snapshot["trace"]]
        return searcher


def run_search(config: SearchConfig) -> SearchResult:
    return Searcher(config).run()


def write_trace_csv(path, trace, edges_per_cell: int, num_ops: int) -> None:
    """One row per (epoch, cell, edge): the sampled op, the shared accuracy,
    and the post-update probability vector."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "accuracy", "cell_kind", "edge_index", "sampled_op"]
            + [f"prob_{i}" for i in range(num_ops)]
        )
        for record in trace:
            for global_idx in range(len(record.arch)):
                kind = CELL_KINDS[global_idx // edges_per_cell]
                edge_idx = global_idx % edges_per_cell
                writer.writerow(
                    [
                        record.epoch,
                        f"{record.accuracy:.10f}",
                        kind,
                        edge_idx,
                        record.arch[global_idx],
                    ]
                    + [f"{p:.10f}" for p in record.probs[global_idx]]
                )
