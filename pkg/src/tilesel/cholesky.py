"""Tile-level symbolic and numeric Cholesky factorization ``A = L L^T``.

Right-looking, column by column. Within a column step the diagonal POTRF runs
first, then the TRSMs below it, then the SYRK/GEMM updates of the trailing
tiles; each step is a barrier. A trailing tile receives its updates in
ascending source-column order no matter how many workers run, so the factor
is bitwise independent of the worker count.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, NotSPDError
from .tile_store import Phase, TiledMatrix, TilePattern, symbolic_fill


class Kernel(enum.Enum):
    POTRF = "POTRF"
    TRSM = "TRSM"
    SYRK = "SYRK"
    GEMM = "GEMM"


@dataclass(frozen=True)
class Task:
    kernel: Kernel
    target: tuple[int, int]
    operands: tuple[tuple[int, int], ...] = ()

    def __repr__(self):
        return f"{self.kernel.value}{self.target}"


@dataclass(frozen=True)
class FactorPlan:
    pattern: TilePattern
    tasks: tuple[Task, ...]

    def steps(self):
        """Group tasks into ``(potrf, trsms, updates)`` per column."""
        N = self.pattern.N
        cols = [(None, [], []) for _ in range(N)]
        for t in self.tasks:
            j = t.target[1] if t.kernel is not Kernel.POTRF else t.target[0]
            if t.kernel is Kernel.POTRF:
                cols[j] = (t, cols[j][1], cols[j][2])
            elif t.kernel is Kernel.TRSM:
                cols[j][1].append(t)
            else:
                # updates are indexed by their source column
                cols[t.operands[0][1]][2].append(t)
        return cols


def symbolic_cholesky(pattern: TilePattern) -> FactorPlan:
    filled = symbolic_fill(pattern)
    tasks = []
    for j in range(filled.N):
        tasks.append(Task(Kernel.POTRF, (j, j)))
        rows = filled.below(j)
        for i in rows:
            tasks.append(Task(Kernel.TRSM, (i, j), ((j, j),)))
        for a, k in enumerate(rows):
            for i in rows[a:]:
                if i == k:
                    tasks.append(Task(Kernel.SYRK, (k, k), ((k, j),)))
                else:
                    tasks.append(Task(Kernel.GEMM, (i, k), ((i, j), (k, j))))
    return FactorPlan(filled, tuple(tasks))


def _run(pool, workers, fn, items):
    if pool is None or len(items) < 2:
        for it in items:
            fn(it)
        return
    chunks = [items[w::workers] for w in range(workers)]
    for f in [pool.submit(lambda ch=ch: [fn(it) for it in ch]) for ch in chunks if ch]:
        f.result()


def factorize(matrix: TiledMatrix, plan: FactorPlan | None = None, workers: int = 1) -> TiledMatrix:
    """Numeric factorization; returns a new ``Phase.FACTOR`` container."""
    if matrix.phase is not Phase.MATRIX:
        raise InvalidArgumentError(f"expected a matrix, got phase {matrix.phase.name}")
    if workers < 1:
        raise InvalidArgumentError(f"workers must be >= 1, got {workers}")
    if plan is None:
        plan = symbolic_cholesky(matrix.pattern)
    b = matrix.layout.b
    L = {}
    for t in plan.pattern:
        src = matrix.tiles.get(t)
        L[t] = np.zeros((b, b)) if src is None else np.array(src, dtype=np.float64)

    def potrf(task):
        j = task.target[0]
        try:
            L[(j, j)] = kernels.potrf(L[(j, j)])
        except NotSPDError as exc:
            raise NotSPDError(exc.pivot, tile=(j, j), index=j * b + exc.pivot) from None

    def trsm(task):
        i, j = task.target
        L[(i, j)] = kernels.trsm(L[(j, j)], L[(i, j)], side="right", lower=True, trans=True)

    def update(task):
        if task.kernel is Kernel.SYRK:
            L[task.target] = kernels.syrk(L[task.target], L[task.operands[0]])
        else:
            kernels.gemm(L[task.target], L[task.operands[0]], L[task.operands[1]],
                         trans_b=True, alpha=-1.0, overwrite_c=True)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for diag, trsms, updates in plan.steps():
            potrf(diag)
            _run(pool, workers, trsm, trsms)
            _run(pool, workers, update, updates)
    finally:
        if pool is not None:
            pool.shutdown()
    for j in range(plan.pattern.N):
        L[(j, j)] = np.tril(L[(j, j)])
    return TiledMatrix(matrix.layout, plan.pattern, L, Phase.FACTOR)
