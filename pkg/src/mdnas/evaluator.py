"""Performance-estimation backends standing in for network training.

Two evaluators share one interface, ``evaluate(arch, epoch) -> accuracy``:

* ``TabularOracle`` scores an architecture from a fixed per-edge quality
  table, so the global optimum is known in closed form.
* ``SurrogateCurveEvaluator`` wraps an oracle with a saturating learning
  curve and seeded noise whose magnitude is calibrated so that the pairwise
  ranking at any epoch agrees with the true final ranking with a configurable
  probability.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Sequence

import numpy as np

from .search_space import (
    CellTemplate,
    Genotype,
    NUM_OPS,
    OP_NAMES,
    derive_genotype,
)

# An architecture sample is one op id per oracle edge.
ArchitectureSample = tuple[int, ...]


def _arch_key(arch: Sequence[int]) -> int:
    h = hashlib.blake2b(np.asarray(arch, dtype=np.int64).tobytes(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


class TabularOracle:
    """Ground-truth evaluator: true_score(arch) is the mean per-edge quality,
    optionally perturbed by pairwise edge-interaction terms."""

    def __init__(
        self,
        q: np.ndarray,
        seed: int = 0,
        num_intermediate: int | None = None,
        interaction_strength: float = 0.0,
    ):
        q = np.asarray(q, dtype=float)
        if q.ndim != 2:
            raise ValueError("q must be a (num_edges, num_ops) table")
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("q entries must lie in [0, 1]")
        self.q = q
        self.seed = seed
        self.num_intermediate = num_intermediate
        self.interaction_strength = interaction_strength
        if interaction_strength > 0:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A7]))
            e, m = q.shape
            self._w = rng.uniform(-1.0, 1.0, size=(e, e, m, m))
        else:
            self._w = None

    @property
    def num_edges(self) -> int:
        return self.q.shape[0]

    @property
    def num_ops(self) -> int:
        return self.q.shape[1]

    @classmethod
    def random(
        cls,
        num_edges: int,
        num_ops: int,
        seed: int = 0,
        argmax_margin: float = 0.0,
        **kwargs,
    ) -> "TabularOracle":
        """Uniform-random table; with argmax_margin > 0 the best op on every
        edge beats the runner-up by at least that margin."""
        rng = np.random.default_rng(seed)
        q = rng.uniform(size=(num_edges, num_ops))
        if argmax_margin > 0:
            for e in range(num_edges):
                best = int(rng.integers(num_ops))
                others = np.delete(np.arange(num_ops), best)
                q[e, others] = rng.uniform(0.0, 1.0 - argmax_margin, size=num_ops - 1)
                q[e, best] = q[e, others].max() + argmax_margin
        return cls(q, seed=seed, **kwargs)

    def _check(self, arch: Sequence[int]) -> np.ndarray:
        arch = np.asarray(arch, dtype=np.int64)
        if arch.shape != (self.num_edges,):
            raise ValueError(
                f"architecture has {arch.shape} edges, oracle expects {self.num_edges}"
            )
        return arch

    def true_score(self, arch: Sequence[int]) -> float:
        arch = self._check(arch)
        score = float(self.q[np.arange(self.num_edges), arch].mean())
        if self._w is not None:
            e = self.num_edges
            idx = np.arange(e)
            inter = self._w[idx[:, None], idx[None, :], arch[:, None], arch[None, :]]
            score += self.interaction_strength * float(
                inter[np.triu_indices(e, k=1)].mean()
            )
        return float(np.clip(score, 0.0, 1.0))

    def evaluate(self, arch: Sequence[int], epoch: int) -> float:
        if epoch < 1:
            raise ValueError("epoch must be >= 1")
        return self.true_score(arch)

    def sample_arch(self, rng: np.random.Generator) -> ArchitectureSample:
        return tuple(int(v) for v in rng.integers(self.num_ops, size=self.num_edges))

    def to_json(self) -> str:
        ops = list(OP_NAMES) if self.num_ops == NUM_OPS else [str(i) for i in range(self.num_ops)]
        return json.dumps(
            {
                "num_intermediate": self.num_intermediate,
                "ops": ops,
                "q": self.q.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, **kwargs) -> "TabularOracle":
        doc = json.loads(text)
        return cls(
            np.asarray(doc["q"], dtype=float),
            num_intermediate=doc.get("num_intermediate"),
            **kwargs,
        )


def best_genotype(
    oracle: TabularOracle, template: CellTemplate, k: int, edge_offset: int = 0
) -> Genotype:
    """Ground-truth genotype: per edge the argmax-quality op, per node the k
    edges with the best such quality, with the same tie-breaks as
    derive_genotype (lower edge index, lower op id)."""
    block = oracle.q[edge_offset : edge_offset + template.num_edges]
    if len(block) != template.num_edges:
        raise ValueError("oracle table too small for template at this offset")
    num_ops = oracle.num_ops
    nodes = []
    for i in range(1, template.num_intermediate + 1):
        incoming = template.incoming(i)
        if k > len(incoming):
            raise ValueError(f"k={k} exceeds in-degree {len(incoming)} of node B{i}")
        scored = []
        for edge_idx in incoming:
            op = int(np.argmax(block[edge_idx]))
            scored.append((-block[edge_idx][op], edge_idx, op))
        scored.sort()
        picks = []
        for _, edge_idx, op in scored[:k]:
            src = template.edges[edge_idx].src
            picks.append(
                (src.label, OP_NAMES[op] if num_ops == NUM_OPS else str(op))
            )
        nodes.append(tuple(picks))
    return Genotype(template.kind, tuple(nodes))


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


class SurrogateCurveEvaluator:
    """Learning-curve simulator over a tabular oracle.

    accuracy(arch, t) = (s + noise) * (1 - exp(-t / tau_c)) clamped to [0, 1],
    with s = oracle.true_score(arch).  The noise is Gaussian, seeded per
    (arch, epoch), and its scale is solved numerically so that a random pair
    of architectures compared at epoch t agrees with the true ordering with
    probability `consistency`.  Scaling the noise with the curve keeps that
    probability epoch-independent; an optional ramp raises it toward
    `consistency_final` over `ramp_epochs` instead.
    """

    def __init__(
        self,
        oracle: TabularOracle,
        tau_c: float = 10.0,
        consistency: float = 1.0,
        consistency_final: float | None = None,
        ramp_epochs: int | None = None,
        seed: int = 0,
        calibration_pairs: int = 512,
    ):
        if not 0.5 <= consistency <= 1.0:
            raise ValueError("consistency must lie in [0.5, 1]")
        if (consistency_final is None) != (ramp_epochs is None):
            raise ValueError("consistency_final and ramp_epochs go together")
        if consistency_final is not None and not 0.5 <= consistency_final <= 1.0:
            raise ValueError("consistency_final must lie in [0.5, 1]")
        self.oracle = oracle
        self.tau_c = tau_c
        self.consistency = consistency
        self.consistency_final = consistency_final
        self.ramp_epochs = ramp_epochs
        self.seed = seed
        self._sigma_cache: dict[float, float] = {}

        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCA11]))
        gaps = []
        for _ in range(calibration_pairs):
            a = oracle.true_score(oracle.sample_arch(rng))
            b = oracle.true_score(oracle.sample_arch(rng))
            if a != b:
                gaps.append(abs(a - b))
        self._gaps = np.asarray(gaps)

    @property
    def num_edges(self) -> int:
        return self.oracle.num_edges

    @property
    def num_ops(self) -> int:
        return self.oracle.num_ops

    def true_score(self, arch: Sequence[int]) -> float:
        return self.oracle.true_score(arch)

    def sample_arch(self, rng: np.random.Generator) -> ArchitectureSample:
        return self.oracle.sample_arch(rng)

    def _sigma_for(self, rho: float) -> float:
        """Solve mean_pairs Phi(gap / (sigma*sqrt(2))) = rho by bisection."""
        rho = min(max(rho, 0.5), 1.0)
        key = round(rho, 9)
        if key in self._sigma_cache:
            return self._sigma_cache[key]
        if rho >= 1.0 - 1e-12 or len(self._gaps) == 0:
            sigma = 0.0
        else:
            def agreement(sigma: float) -> float:
                z = self._gaps / (sigma * math.sqrt(2.0))
                return float(np.mean([_norm_cdf(v) for v in z]))

            lo, hi = 1e-9, 1e3
            for _ in range(200):
                mid = math.sqrt(lo * hi)
                if agreement(mid) > rho:
                    lo = mid
                else:
                    hi = mid
            sigma = math.sqrt(lo * hi)
        self._sigma_cache[key] = sigma
        return sigma

    def consistency_at(self, epoch: int) -> float:
        if self.consistency_final is None or self.ramp_epochs is None:
            return self.consistency
        frac = min((epoch - 1) / max(self.ramp_epochs - 1, 1), 1.0)
        return self.consistency + frac * (self.consistency_final - self.consistency)

    def evaluate(self, arch: Sequence[int], epoch: int) -> float:
        if epoch < 1:
            raise ValueError("epoch must be >= 1")
        s = self.oracle.true_score(arch)
        growth = 1.0 - math.exp(-epoch / self.tau_c)
        sigma = self._sigma_for(self.consistency_at(epoch))
        if sigma > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, _arch_key(arch), epoch])
            )
            s = s + sigma * rng.standard_normal()
        return float(np.clip(s * growth, 0.0, 1.0))


def measure_consistency(
    evaluator,
    num_pairs: int,
    epoch: int,
    rng: np.random.Generator,
) -> float:
    """Fraction of random architecture pairs whose epoch-t comparison agrees
    with the true-score ordering.  Pairs tied on true score are redrawn."""
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    agree = 0
    done = 0
    attempts = 0
    while done < num_pairs:
        attempts += 1
        if attempts > 100 * num_pairs:
            raise ValueError("true scores look constant; cannot form untied pairs")
        a = evaluator.sample_arch(rng)
        b = evaluator.sample_arch(rng)
        sa, sb = evaluator.true_score(a), evaluator.true_score(b)
        if sa == sb:
            continue
        ea, eb = evaluator.evaluate(a, epoch), evaluator.evaluate(b, epoch)
        if (ea - eb) * (sa - sb) > 0:
            agree += 1
        done += 1
    return agree / num_pairs
