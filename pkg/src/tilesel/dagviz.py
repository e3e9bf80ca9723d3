"""Kernel-level task DAG of the two-phase selected inversion.

One node per kernel call: a TRSM_INV per diagonal factor tile and a TRMM per
off-diagonal factor tile (phase 1), a LAUUM per closure diagonal and one GEMM
per accumulation term (phase 2). GEMMs accumulating into the same target are
chained in ascending ``k``, which is the order the numeric code uses.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .errors import ContractError, InvalidArgumentError
from .selinv import SelectedTileSet, owner_of, symbolic_inversion
from .tile_store import TilePattern, band_arrow_pattern, build_layout

KERNELS = ("TRSM_INV", "TRMM", "LAUUM", "GEMM")
_KERNEL_RANK = {k: r for r, k in enumerate(KERNELS)}
_MISSING = object()
_tuple_new = tuple.__new__  # skips the generated Node.__new__ on the hot path
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf")


class Node(NamedTuple):
    kernel: str
    target: tuple[int, int]
    phase: int
    k: int = -1  # accumulation index of a GEMM term
    operands: tuple = ()

    @property
    def label(self) -> str:
        return f"{self.kernel}({self.target[0]},{self.target[1]})"


@dataclass
class TaskDag:
    nodes: list
    edges: list  # (producer index, consumer index)
    n_tiles: int
    band: int | None = None
    core_of: list | None = None
    workers: int | None = None
    depth: list | None = None  # longest-path node count ending at each node, if known

    def predecessors(self):
        preds = [[] for _ in self.nodes]
        for u, v in self.edges:
            preds[v].append(u)
        return preds


def build_dag(closure: SelectedTileSet, factor_pattern: TilePattern, band: int | None = None) -> TaskDag:
    N = factor_pattern.N
    nodes: list[Node] = []
    edges: list[tuple[int, int]] = []
    trsm, trmm = {}, {}
    final = {}  # inverse tile -> node producing its final value

    depth: list[int] = []

    def add(node, *producers):
        nodes.append(node)
        depth.append(1 + max((depth[p] for p in producers), default=0))
        return len(nodes) - 1

    # Nodes are appended after all of their producers, so the node list is a
    # topological order and the graph is acyclic by construction.

    for i in range(N - 1, -1, -1):
        trsm[i] = add(Node("TRSM_INV", (i, i), 1))
        for k in factor_pattern.below(i):
            trmm[(k, i)] = add(Node("TRMM", (k, i), 1, operands=((i, i),)), trsm[i])
            edges.append((trsm[i], trmm[(k, i)]))

    for i in range(N - 1, -1, -1):
        K = factor_pattern.below(i)
        for target in closure.work[i]:
            j = target[0]
            prev = None
            if j == i:
                prev = add(Node("LAUUM", (i, i), 2, operands=((i, i),)), trsm[i])
                edges.append((trsm[i], prev))
            for k in K:
                if j == i:
                    sig = (k, i)
                else:
                    sig = (j, k) if j > k else (k, j)
                src = final.get(sig, _MISSING)
                if src is _MISSING:
                    raise ContractError(f"closure is not dependency-closed: {sig} needed by ({j}, {i})")
                g = len(nodes)
                ki = (k, i)
                nodes.append(_tuple_new(Node, ("GEMM", target, 2, k, (sig, ki))))
                t = trmm[ki]
                d = depth[t]
                edges.append((t, g))
                if src is not None:
                    edges.append((src, g))
                    d = max(d, depth[src])
                if prev is not None:
                    edges.append((prev, g))
                    d = max(d, depth[prev])
                depth.append(d + 1)
                prev = g
            final[(j, i)] = prev
    return TaskDag(nodes, edges, N, band, depth=depth)


def _topological_order(dag: TaskDag):
    if all(u < v for u, v in dag.edges):
        return range(len(dag.nodes))
    indeg = [0] * len(dag.nodes)
    succ = [[] for _ in dag.nodes]
    for u, v in dag.edges:
        indeg[v] += 1
        succ[u].append(v)
    ready = [v for v, d in enumerate(indeg) if d == 0]
    order = []
    while ready:
        u = ready.pop()
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(order) != len(dag.nodes):
        raise ContractError("task graph contains a cycle")
    return order


def assign_cores(dag: TaskDag, workers: int) -> TaskDag:
    """Owner of a node is the owner of its target's column (round robin from the right)."""
    if workers < 1:
        raise InvalidArgumentError(f"need at least one core, got {workers}")
    cores = [owner_of(dag.n_tiles, workers, nd.target[1]) for nd in dag.nodes]
    return TaskDag(dag.nodes, dag.edges, dag.n_tiles, dag.band, cores, workers, dag.depth)


def critical_path(dag: TaskDag) -> int:
    """Number of nodes on the longest directed path."""
    if not dag.nodes:
        return 0
    if dag.depth is not None and len(dag.depth) == len(dag.nodes):
        return max(dag.depth)
    order = _topological_order(dag)
    depth = [1] * len(dag.nodes)
    if isinstance(order, range):
        # edges grouped by consumer in ascending order: one forward pass
        for u, v in sorted(dag.edges, key=lambda e: e[1]):
            if depth[u] >= depth[v]:
                depth[v] = depth[u] + 1
        return max(depth)
    preds = dag.predecessors()
    for v in order:
        depth[v] = 1 + max((depth[u] for u in preds[v]), default=0)
    return max(depth)


def _sort_key(node: Node):
    return (node.phase, -node.target[1], -node.target[0], _KERNEL_RANK[node.kernel], node.k)


def export_dot(dag: TaskDag, name: str = "selinv") -> str:
    order = sorted(range(len(dag.nodes)), key=lambda v: _sort_key(dag.nodes[v]))
    rank = {v: r for r, v in enumerate(order)}
    ident = {v: f"n{r}" for r, v in enumerate(order)}
    lines = [f"digraph {name} {{", "  rankdir=TB;", '  node [shape=box, style=filled, fillcolor="#ffffff"];']
    for v in order:
        nd = dag.nodes[v]
        attrs = [f'label="{nd.label}"', f"phase={nd.phase}"]
        if nd.kernel == "GEMM":
            attrs.append(f"k={nd.k}")
        if dag.core_of is not None:
            core = dag.core_of[v]
            attrs.append(f'fillcolor="{PALETTE[core % len(PALETTE)]}"')
            attrs.append(f"core={core}")
        lines.append(f"  {ident[v]} [{', '.join(attrs)}];")
    for u, v in sorted(dag.edges, key=lambda e: (rank[e[0]], rank[e[1]])):
        lines.append(f"  {ident[u]} -> {ident[v]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def predict_gemm_count(N: int, B: int) -> int:
    """Closed-form GEMM count for a band-plus-arrowhead selection of tile band width ``B``."""
    if N < 1 or B < 1:
        raise InvalidArgumentError(f"need N >= 1 and B >= 1, got N={N}, B={B}")
    if B > N:
        raise InvalidArgumentError(f"band {B} exceeds the number of tiles {N}")
    six = 6 * (N - B) * B + 3 * B * (B - 1) + 6 * B * B * (N - B - 1) + B * (B + 1) * (2 * B + 1)
    assert six % 6 == 0
    return six // 6


def predict_phase_counts(N: int, band: int | None = None, pattern: TilePattern | None = None) -> dict:
    """TRSM_INV / LAUUM / TRMM counts. ``band=None`` means dense."""
    if pattern is None:
        if band is None or band >= N:
            trmm = N * (N - 1) // 2
        else:
            trmm = band_arrow_pattern(build_layout(N, 1), band).off_diagonal_count()
    else:
        trmm = pattern.off_diagonal_count()
    return {"trsm": N, "lauum": N, "trmm": trmm}


@dataclass
class ComplexityReport:
    n_tiles: int
    band_b: int | None
    gemm_actual: int
    gemm_predicted: int | None
    trsm: int
    trmm: int
    lauum: int
    critical_path: int
    match: bool | None
    workers: int | None = None
    counts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        keys = ("n_tiles", "band_b", "gemm_actual", "gemm_predicted", "trsm", "trmm", "lauum", "critical_path", "match")
        d = asdict(self)
        return json.dumps({k: d[k] for k in keys}, indent=2, sort_keys=False) + "\n"


def count_kernels(dag: TaskDag) -> ComplexityReport:
    counts = Counter(nd.kernel for nd in dag.nodes)
    predicted = None
    match = None
    if dag.band is not None:
        B = min(dag.band, dag.n_tiles)
        predicted = predict_gemm_count(dag.n_tiles, B)
        match = predicted == counts["GEMM"]
    return ComplexityReport(
        n_tiles=dag.n_tiles,
        band_b=dag.band,
        gemm_actual=counts["GEMM"],
        gemm_predicted=predicted,
        trsm=counts["TRSM_INV"],
        trmm=counts["TRMM"],
        lauum=counts["LAUUM"],
        critical_path=critical_path(dag),
        match=match,
        workers=dag.workers,
        counts=dict(counts),
    )


def detect_band(pattern: TilePattern) -> int | None:
    """Tile band width ``B`` if ``pattern`` equals ``band_arrow_pattern(N, B)``."""
    N = pattern.N
    B = 1 + max((i - j for i, j in pattern.tiles if i != N - 1), default=0)
    B = min(B, N)
    if pattern.tiles == band_arrow_pattern(pattern.layout, B).tiles:
        return B
    return None


def synthetic_dag(N: int, band: int | None = None) -> TaskDag:
    """DAG of the factor-pattern selection on a synthetic band-plus-arrowhead grid.

    ``band=None`` or ``band >= N`` gives the dense grid (full inversion).
    """
    if N < 1:
        raise InvalidArgumentError(f"need at least one tile, got N={N}")
    B = N if band is None else band
    if B < 1:
        raise InvalidArgumentError(f"band must be >= 1, got {band}")
    B = min(B, N)
    pattern = band_arrow_pattern(build_layout(N, 1), B)
    closure = symbolic_inversion(pattern.tiles, pattern)
    return build_dag(closure, pattern, band=B)
