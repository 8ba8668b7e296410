"""Communication topology: agent nodes, edge matrices, and DAG-constrained sampling.

Nodes are indexed globally with text agents first, visual agents after.
Edges live in two full N x N matrices per quantity (adjacency, logits),
one for each edge kind:

* spatial  -- within-round links, delivered earlier-to-later in the round's
  topological order, no self loops;
* temporal -- round-(t) to round-(t+1) links, self loops allowed.

Each matrix splits into four modality blocks (txt->txt, vis->vis, txt->vis,
vis->txt) addressed by name; entry [i, j] is the edge i -> j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptStateError, TopologyError

KINDS = ("spatial", "temporal")
INTRA_BLOCKS = ("txt->txt", "vis->vis")
INTER_BLOCKS = ("txt->vis", "vis->txt")
ALL_BLOCKS = INTRA_BLOCKS + INTER_BLOCKS

# Logits are clipped into this band after gradient updates so that both
# log(p) and log(1-p) stay finite in the sampling likelihood.
LOGIT_FLOOR = 1e-4
LOGIT_CEIL = 1.0 - 1e-4


@dataclass(frozen=True)
class AgentNode:
    """One agent: unique id, fixed modality, role label, prompt template."""

    id: str
    modality: str  # "text" or "visual"
    role: str
    prompt_template: str = "You are the {role}. Answer using the question, context and peer messages."


@dataclass(frozen=True)
class GumbelConfig:
    """Temperature and seed for the tempered-softmax logit initialization."""

    temperature: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise TopologyError(f"temperature must be > 0, got {self.temperature}")


class EdgeMatrices:
    """Adjacency (binary) and logits (probabilities in [0, 1]) for both edge kinds."""

    def __init__(self, n_text: int, n_visual: int):
        self.n_text = n_text
        self.n_visual = n_visual
        n = n_text + n_visual
        self.spatial_adj = np.zeros((n, n), dtype=np.int8)
        self.temporal_adj = np.zeros((n, n), dtype=np.int8)
        self.spatial_logits = np.zeros((n, n), dtype=np.float64)
        self.temporal_logits = np.zeros((n, n), dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return self.n_text + self.n_visual

    def block_slices(self, block: str) -> tuple[slice, slice]:
        """(row, col) slices of a named modality block; rows are senders."""
        t = slice(0, self.n_text)
        v = slice(self.n_text, self.n_nodes)
        try:
            return {
                "txt->txt": (t, t),
                "vis->vis": (v, v),
                "txt->vis": (t, v),
                "vis->txt": (v, t),
            }[block]
        except KeyError:
            raise TopologyError(f"unknown block {block!r}") from None

    def adjacency(self, kind: str) -> np.ndarray:
        return {"spatial": self.spatial_adj, "temporal": self.temporal_adj}[kind]

    def logits(self, kind: str) -> np.ndarray:
        return {"spatial": self.spatial_logits, "temporal": self.temporal_logits}[kind]

    def block(self, kind: str, block: str, which: str = "logits") -> np.ndarray:
        """View of one (kind, block) sub-matrix; mutations write through."""
        rows, cols = self.block_slices(block)
        base = self.adjacency(kind) if which == "adjacency" else self.logits(kind)
        return base[rows, cols]

    def copy(self) -> "EdgeMatrices":
        out = EdgeMatrices(self.n_text, self.n_visual)
        out.spatial_adj = self.spatial_adj.copy()
        out.temporal_adj = self.temporal_adj.copy()
        out.spatial_logits = self.spatial_logits.copy()
        out.temporal_logits = self.temporal_logits.copy()
        return out

    def validate(self) -> None:
        """Raise CorruptStateError on out-of-range logits or support leaks."""
        for kind in KINDS:
            logit = self.logits(kind)
            adj = self.adjacency(kind)
            if not np.all(np.isfinite(logit)):
                raise CorruptStateError(f"{kind} logits contain non-finite entries")
            if logit.min() < 0.0 or logit.max() > 1.0:
                raise CorruptStateError(f"{kind} logits outside [0, 1]")
            if np.any(logit[adj == 0] != 0.0):
                raise CorruptStateError(f"{kind} logits nonzero off adjacency support")


@dataclass
class CommTopology:
    """Agent nodes plus the initial fully-connected edge matrices."""

    nodes: list[AgentNode]
    matrices: EdgeMatrices

    @property
    def n_text(self) -> int:
        return self.matrices.n_text

    @property
    def n_visual(self) -> int:
        return self.matrices.n_visual

    @property
    def node_ids(self) -> list[str]:
        return [node.id for node in self.nodes]

    def node_index(self, node_id: str) -> int:
        for i, node in enumerate(self.nodes):
            if node.id == node_id:
                return i
        raise TopologyError(f"unknown node id {node_id!r}")

    def modality_of(self, index: int) -> str:
        return "text" if index < self.n_text else "visual"


@dataclass(frozen=True)
class DagSample:
    """One sampled communication graph under a fixed topological order.

    ``topo_order`` is a permutation of node indices. Spatial candidates are the
    support edges whose sender precedes the receiver in that order; temporal
    candidates are all support edges. ``log_prob`` is the Bernoulli
    log-likelihood of the realized candidate inclusions (see sample_dag).
    """

    active_spatial_edges: frozenset
    active_temporal_edges: frozenset
    spatial_candidates: frozenset
    temporal_candidates: frozenset
    topo_order: tuple
    log_prob: float

    def position(self) -> dict:
        return {node: rank for rank, node in enumerate(self.topo_order)}


def build_topology(text_roles: Sequence[str], visual_roles: Sequence[str]) -> CommTopology:
    """Create nodes and fully-connected adjacency for both edge kinds.

    Spatial adjacency is complete minus self loops (within and across
    modalities); temporal adjacency is complete including self loops.
    Logits start at zero: call init_logits before sampling.
    """
    if not text_roles or not visual_roles:
        raise TopologyError("both role lists must be non-empty")
    nodes = [AgentNode(id=f"t{i}", modality="text", role=role) for i, role in enumerate(text_roles)]
    nodes += [AgentNode(id=f"v{i}", modality="visual", role=role) for i, role in enumerate(visual_roles)]
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise TopologyError("node ids must be unique")
    matrices = EdgeMatrices(len(text_roles), len(visual_roles))
    n = matrices.n_nodes
    matrices.spatial_adj = (np.ones((n, n)) - np.eye(n)).astype(np.int8)
    matrices.temporal_adj = np.ones((n, n), dtype=np.int8)
    return CommTopology(nodes=nodes, matrices=matrices)


def init_logits(
    topology,
    cfg: GumbelConfig,
    blocks: Iterable[str] = ALL_BLOCKS,
) -> EdgeMatrices:
    """Gumbel-softmax initialization of logits over the selected blocks.

    For each row of each (kind, block) sub-matrix, logits on adjacent entries
    are softmax(g / temperature) with g drawn i.i.d. standard Gumbel;
    non-adjacent entries stay exactly zero, so each row with at least one
    adjacent entry sums to 1 over its support. Blocks outside ``blocks`` keep
    their current logits, which lets the cross-modal blocks be initialized
    later from the intra-trained matrices.
    """
    matrices = topology.matrices if isinstance(topology, CommTopology) else topology
    out = matrices.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    for kind in KINDS:
        for block in blocks:
            adj = out.block(kind, block, "adjacency")
            logit = out.block(kind, block, "logits")
            for r in range(adj.shape[0]):
                support = np.flatnonzero(adj[r])
                if support.size == 0:
                    continue
                z = rng.gumbel(size=support.size) / cfg.temperature
                z -= z.max()
                w = np.exp(z)
                logit[r, support] = w / w.sum()
    return out


def sample_dag(matrices: EdgeMatrices, rng_seed, likelihood: str = "full") -> DagSample:
    """Draw one acyclic communication graph from the edge logits.

    A uniformly random permutation of the nodes becomes the topological
    order. Every spatial support edge whose sender precedes its receiver is a
    candidate and is included independently with probability equal to its
    logit; order-violating spatial edges are merely absent from this sample.
    Temporal support edges are always candidates (they cross rounds, so no
    cycle constraint applies). Support edges with logit exactly 0 are
    deterministically absent and carry no likelihood term.

    log_prob sums log(p) over included candidates and, in "full" mode,
    log(1 - p) over excluded candidates as well ("paper" mode keeps only the
    inclusion terms).
    """
    if likelihood not in ("full", "paper"):
        raise ValueError(f"unknown likelihood mode {likelihood!r}")
    matrices.validate()
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = matrices.n_nodes
    order = tuple(int(x) for x in rng.permutation(n))
    pos = np.empty(n, dtype=np.int64)
    for rank, node in enumerate(order):
        pos[node] = rank

    precedes = pos[:, None] < pos[None, :]
    cand = {
        "spatial": (matrices.spatial_adj == 1) & (matrices.spatial_logits > 0.0) & precedes,
        "temporal": (matrices.temporal_adj == 1) & (matrices.temporal_logits > 0.0),
    }

    log_prob = 0.0
    included: dict[str, np.ndarray] = {}
    for kind in KINDS:
        p = matrices.logits(kind)
        u = rng.random((n, n))
        inc = cand[kind] & (u < p)
        included[kind] = inc
        log_prob += float(np.log(p[inc]).sum())
        if likelihood == "full":
            exc = cand[kind] & ~inc
            log_prob += float(np.log1p(-p[exc]).sum())

    def edge_set(mask: np.ndarray) -> frozenset:
        return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(mask)))

    return DagSample(
        active_spatial_edges=edge_set(included["spatial"]),
        active_temporal_edges=edge_set(included["temporal"]),
        spatial_candidates=edge_set(cand["spatial"]),
        temporal_candidates=edge_set(cand["temporal"]),
        topo_order=order,
        log_prob=log_prob,
    )


def active_edge_count(matrices: EdgeMatrices) -> dict:
    """Adjacency-one counts per (kind, block), plus a 'total' entry per kind."""
    counts: dict = {}
    for kind in KINDS:
        counts[kind] = {}
        for block in ALL_BLOCKS:
            counts[kind][block] = int(matrices.block(kind, block, "adjacency").sum())
        counts[kind]["total"] = int(matrices.adjacency(kind).sum())
    return counts


def save_topology(path, topology: CommTopology, matrices: EdgeMatrices, rng_seed: int) -> None:
    """Write a JSON checkpoint of roles, per-block adjacency/logits, and the seed."""
    blocks = {}
    for kind in KINDS:
        blocks[kind] = {}
        for block in ALL_BLOCKS:
            blocks[kind][block] = {
                "adjacency": matrices.block(kind, block, "adjacency").astype(int).tolist(),
                "logits": matrices.block(kind, block, "logits").tolist(),
            }
    payload = {
        "version": 1,
        "text_roles": [n.role for n in topology.nodes[: topology.n_text]],
        "visual_roles": [n.role for n in topology.nodes[topology.n_text :]],
        "rng_seed": rng_seed,
        "blocks": blocks,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_topology(path) -> tuple[CommTopology, EdgeMatrices, int]:
    """Inverse of save_topology. Adjacency round-trips exactly, logits to repr precision."""
    payload = json.loads(Path(path).read_text())
    topology = build_topology(payload["text_roles"], payload["visual_roles"])
    matrices = EdgeMatrices(topology.n_text, topology.n_visual)
    for kind in KINDS:
        for block in ALL_BLOCKS:
            entry = payload["blocks"][kind][block]
            rows, cols = matrices.block_slices(block)
            matrices.adjacency(kind)[rows, cols] = np.asarray(entry["adjacency"], dtype=np.int8)
            matrices.logits(kind)[rows, cols] = np.asarray(entry["logits"], dtype=np.float64)
    matrices.validate()
    return topology, matrices, int(payload["rng_seed"])
