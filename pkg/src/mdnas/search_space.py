"""Cell-based search space: operations, DAG templates, and discrete genotypes.

A cell is a small DAG with two input nodes, N intermediate nodes, and one
output node.  Every edge into an intermediate node carries one of M candidate
operations; a genotype pins down K incoming (source, operation) choices per
intermediate node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

OP_NAMES = (
    "max_pool_3x3",
    "none",
    "avg_pool_3x3",
    "skip_connect",
    "dil_conv_3x3",
    "dil_conv_5x5",
    "sep_conv_3x3",
    "sep_conv_5x5",
)

NUM_OPS = len(OP_NAMES)

NONE_OP_ID = OP_NAMES.index("none")

CELL_KINDS = ("norm", "reduction")


@dataclass(frozen=True)
class OperationKind:
    id: int
    name: str


OPERATIONS = tuple(OperationKind(i, n) for i, n in enumerate(OP_NAMES))


@dataclass(frozen=True, order=True)
class NodeId:
    """A node in a cell DAG.

    Sort order places input nodes before intermediate nodes, which matches the
    topological order used for edge enumeration.
    """

    rank: int  # 0 = input, 1 = intermediate, 2 = output
    index: int  # 1-based ordinal within the kind

    @classmethod
    def input(cls, index: int) -> "NodeId":
        return cls(0, index)

    @classmethod
    def intermediate(cls, index: int) -> "NodeId":
        return cls(1, index)

    @classmethod
    def output(cls) -> "NodeId":
        return cls(2, 1)

    @property
    def kind(self) -> str:
        return ("input", "intermediate", "output")[self.rank]

    @property
    def label(self) -> str:
        if self.rank == 0:
            return f"I{self.index}"
        if self.rank == 1:
            return f"B{self.index}"
        return "O"

    @classmethod
    def from_label(cls, label: str) -> "NodeId":
        if label == "O":
            return cls.output()
        if label.startswith("I"):
            return cls.input(int(label[1:]))
        if label.startswith("B"):
            return cls.intermediate(int(label[1:]))
        raise ValueError(f"unknown node label: {label!r}")


@dataclass(frozen=True)
class Edge:
    src: NodeId
    dst: NodeId

    def __post_init__(self):
        if self.dst.kind != "intermediate":
            raise ValueError("edge destination must be an intermediate node")
        if self.src >= self.dst:
            raise ValueError("edge source must precede its destination")


@dataclass(frozen=True)
class CellTemplate:
    num_intermediate: int
    kind: str
    edges: tuple[Edge, ...]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def incoming(self, node_index: int) -> list[int]:
        """Edge indices feeding intermediate node `node_index` (1-based)."""
        dst = NodeId.intermediate(node_index)
        return [i for i, e in enumerate(self.edges) if e.dst == dst]


def build_cell_template(num_intermediate: int, kind: str) -> CellTemplate:
    """Build the full DAG template: node i receives edges from both inputs and
    every earlier intermediate node, so |edges| = sum_{i=1..N}(i+1)."""
    if num_intermediate < 1:
        raise ValueError("num_intermediate must be >= 1")
    if kind not in CELL_KINDS:
        raise ValueError(f"cell kind must be one of {CELL_KINDS}")
    edges = []
    for i in range(1, num_intermediate + 1):
        dst = NodeId.intermediate(i)
        srcs = [NodeId.input(1), NodeId.input(2)]
        srcs += [NodeId.intermediate(j) for j in range(1, i)]
        for src in sorted(srcs):
            edges.append(Edge(src, dst))
    edges.sort(key=lambda e: (e.dst, e.src))
    return CellTemplate(num_intermediate, kind, tuple(edges))


def search_space_size(num_intermediate: int, num_ops: int) -> int:
    """Exact count of discrete cell structures: 2 cell kinds times
    num_ops to the number of edges."""
    if num_intermediate < 1 or num_ops < 1:
        raise ValueError("arguments must be >= 1")
    num_edges = sum(i + 1 for i in range(1, num_intermediate + 1))
    return 2 * num_ops**num_edges


@dataclass(frozen=True)
class Genotype:
    """Per intermediate node, exactly K (source-label, op-name) picks."""

    kind: str
    nodes: tuple[tuple[tuple[str, str], ...], ...]

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "nodes": [[list(p) for p in node] for node in self.nodes]}
        )

    @classmethod
    def from_json(cls, text: str) -> "Genotype":
        doc = json.loads(text)
        nodes = tuple(tuple((src, op) for src, op in node) for node in doc["nodes"])
        return cls(doc["kind"], nodes)


@dataclass(frozen=True)
class NetworkTemplate:
    """Stacked-cell network description.  Metadata only: channel counts and
    input size are carried for bookkeeping, never as tensors."""

    num_cells: int
    reduction_positions: tuple[int, ...]
    init_channels: int = 16
    input_size: tuple[int, int] = (32, 32)

    def __post_init__(self):
        for p in self.reduction_positions:
            if not 0 <= p < self.num_cells:
                raise ValueError("reduction position out of range")


def _validate_probs(probs: np.ndarray, num_ops: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (num_ops,):
        raise ValueError(f"expected probability vector of length {num_ops}")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError("probability vector must be non-negative and sum to 1")
    return probs


def derive_genotype(
    template: CellTemplate,
    distributions: Sequence[np.ndarray],
    k: int,
    exclude_none: bool = False,
) -> Genotype:
    """Discretize per-edge probability vectors into a genotype.

    Each intermediate node keeps the k incoming edges whose best operation
    probability is highest; each kept edge takes its argmax operation.  Ties
    break toward the lower edge index and lower op id, so the result is
    deterministic.
    """
    if len(distributions) != template.num_edges:
        raise ValueError("need one probability vector per template edge")
    num_ops = len(distributions[0])
    probs = [_validate_probs(p, num_ops) for p in distributions]

    allowed = np.ones(num_ops, dtype=bool)
    if exclude_none and NONE_OP_ID < num_ops:
        allowed[NONE_OP_ID] = False

    nodes = []
    for i in range(1, template.num_intermediate + 1):
        incoming = template.incoming(i)
        if k > len(incoming):
            raise ValueError(
                f"k={k} exceeds in-degree {len(incoming)} of node B{i}"
            )
        scored = []
        for edge_idx in incoming:
            p = np.where(allowed, probs[edge_idx], -np.inf)
            op_id = int(np.argmax(p))  # argmax takes the lowest id on ties
            scored.append((-p[op_id], edge_idx, op_id))
        scored.sort()
        picks = []
        for _, edge_idx, op_id in scored[:k]:
            src = template.edges[edge_idx].src
            picks.append((src.label, OP_NAMES[op_id] if num_ops == NUM_OPS else str(op_id)))
        nodes.append(tuple(picks))
    return Genotype(template.kind, tuple(nodes))
