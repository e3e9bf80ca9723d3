"""Selected inversion of a tiled SPD matrix from its Cholesky factor.

Pipeline: map the requested scalar entries to tiles, close the tile set under
the inverse recursion (symbolic inversion), then run two numeric phases.

Phase 1 transforms every factor column ``i`` independently::

    U_i  = (L_ii^T)^{-1}            (upper triangular)
    W_ki = L_ki L_ii^{-1}           for every factor tile below the diagonal

Phase 2 walks the columns from right to left. With ``K(i)`` the factor
neighbors of column ``i`` below the diagonal, the inverse tiles satisfy::

    S_ji = - sum_{k in K(i)} S_jk W_ki                 (j > i)
    S_ii = U_i U_i^T - sum_{k in K(i)} S_ki^T W_ki

where ``S_jk`` with ``j < k`` is read as ``S_kj^T``. Every tile needed on the
right-hand side lies in a column strictly to the right of ``i`` (or, for the
diagonal, in column ``i`` itself), which is what makes static right-to-left
ownership deadlock free.
"""

from __future__ import annotations

import enum
import hashlib
import threading
import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .cholesky import factorize
from .errors import ContractError, InvalidArgumentError, ParseError, TileselError
from .tile_store import (
    Coord,
    Phase,
    TiledMatrix,
    TileLayout,
    TilePattern,
    map_entry_to_tile,
)

CLOSURE_GROWTH_WARNING = 4.0


class Preset(enum.Enum):
    DIAGONAL = "diagonal"
    FACTOR_PATTERN = "pattern"
    ALL = "all"


@dataclass(frozen=True)
class SelectionRequest:
    """Either explicit scalar entries or a named preset."""

    entries: tuple[Coord, ...] = ()
    preset: Preset | None = None

    @classmethod
    def of(cls, spec) -> "SelectionRequest":
        if isinstance(spec, SelectionRequest):
            return spec
        if isinstance(spec, Preset):
            return cls(preset=spec)
        if isinstance(spec, str):
            try:
                return cls(preset=Preset(spec.lower()))
            except ValueError:
                try:
                    return cls(preset=Preset[spec.upper()])
                except KeyError:
                    raise InvalidArgumentError(f"unknown selection preset {spec!r}") from None
        return cls(entries=tuple((int(r), int(c)) for r, c in spec))

    def digest(self) -> str:
        h = hashlib.sha256()
        if self.preset is not None:
            h.update(self.preset.name.encode())
        for r, c in self.entries:
            h.update(f"{r},{c};".encode())
        return h.hexdigest()


def parse_request_file(text: str) -> SelectionRequest:
    """One ``r c`` pair per line, 0-based; ``#`` starts a comment."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'r c', got {raw.strip()!r}", line=lineno)
        try:
            r, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer index in {raw.strip()!r}", line=lineno) from None
        if r < 0 or c < 0:
            raise ParseError(f"negative index in {raw.strip()!r}", line=lineno)
        entries.append((r, c))
    return SelectionRequest(entries=tuple(entries))


def request_entries(layout: TileLayout, request, pattern: TilePattern | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Scalar ``(rows, cols)`` a request asks for, in request order (presets expanded)."""
    request = SelectionRequest.of(request)
    n, b = layout.n, layout.b
    if request.preset is None:
        rc = np.array(request.entries, dtype=np.int64).reshape(-1, 2)
        return rc[:, 0], rc[:, 1]
    if request.preset is Preset.DIAGONAL:
        r = np.arange(n, dtype=np.int64)
        return r, r.copy()
    if request.preset is Preset.ALL:
        c, r = np.triu_indices(n)
        return r.astype(np.int64), c.astype(np.int64)
    if pattern is None:
        raise InvalidArgumentError("the factor pattern is needed to expand the FACTOR_PATTERN preset")
    oi, oj = np.indices((b, b)).reshape(2, -1)
    rows, cols = [], []
    for i, j in pattern:
        keep = oj <= oi if i == j else slice(None)
        r, c = i * b + oi[keep], j * b + oj[keep]
        ok = (r < n) & (c < n)
        rows.append(r[ok])
        cols.append(c[ok])
    return np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64)


def select_tiles(layout: TileLayout, factor_pattern: TilePattern, request) -> set[Coord]:
    request = SelectionRequest.of(request)
    N = layout.N
    if request.preset is Preset.DIAGONAL:
        return {(i, i) for i in range(N)}
    if request.preset is Preset.FACTOR_PATTERN:
        return set(factor_pattern.tiles)
    if request.preset is Preset.ALL:
        return {(i, j) for j in range(N) for i in range(j, N)}
    return {map_entry_to_tile(layout, r, c)[0] for r, c in request.entries}


@dataclass(frozen=True)
class SelectedTileSet:
    """Requested tiles, their dependency closure and the per-column work lists.

    ``work[i]`` lists the closure tiles of column ``i`` in execution order:
    off-diagonal rows descending, the diagonal last.
    """

    requested: frozenset
    closure: frozenset
    work: tuple

    def __len__(self):
        return len(self.closure)


def _operand(j: int, k: int) -> Coord:
    return (max(j, k), min(j, k))


def symbolic_inversion(requested: Iterable[Coord], factor_pattern: TilePattern) -> SelectedTileSet:
    requested = frozenset(requested)
    N = factor_pattern.N
    cols: list[set[int]] = [set() for _ in range(N)]
    for i, j in requested:
        if not (0 <= j <= i < N):
            raise InvalidArgumentError(f"requested tile ({i}, {j}) is not a lower tile")
        cols[j].add(i)
    # dependencies of column i only live in columns > i
    for i in range(N):
        K = factor_pattern.below(i)
        if i in cols[i]:
            cols[i].update(K)
        # off-diagonal dependencies land strictly to the right of column i
        for j in sorted(cols[i]):
            if j == i:
                continue
            for k in K:
                r, c = _operand(j, k)
                cols[c].add(r)
    closure = frozenset((r, c) for c in range(N) for r in cols[c])
    work = tuple(tuple((r, c) for r in sorted(cols[c], reverse=True)) for c in range(N))
    return SelectedTileSet(requested, closure, work)


def phase1(factor: TiledMatrix, workers: int = 1, in_place: bool = False) -> TiledMatrix:
    """Independent per-column transform of the factor (see module docstring)."""
    if factor.phase is not Phase.FACTOR:
        raise InvalidArgumentError(f"phase1 needs a FACTOR container, got {factor.phase.name}")
    if workers < 1:
        raise InvalidArgumentError(f"workers must be >= 1, got {workers}")
    N = factor.layout.N
    pattern = factor.pattern
    src = factor.tiles
    out = src if in_place else {}

    def column(i):
        Lii = src[(i, i)]
        try:
            U = kernels.trtri(Lii.T, lower=False)
        except TileselError as exc:
            raise type(exc)(exc.pivot, tile=(i, i)) from None
        for k in pattern.below(i):
            # W = L_ki L_ii^{-1} = L_ki U^T
            out[(k, i)] = kernels.trmm(U, src[(k, i)], side="right", lower=False, trans=True)
        out[(i, i)] = U

    _run_owned(N, workers, lambda cols: [column(i) for i in cols])
    if in_place:
        factor.phase = Phase.PHASE1
        return factor
    return TiledMatrix(factor.layout, pattern, out, Phase.PHASE1)


def owned_columns(N: int, workers: int, worker: int) -> range:
    """Static round-robin ownership: ``N-1-worker``, stepping down by ``workers``."""
    return range(N - 1 - worker, -1, -workers)


def owner_of(N: int, workers: int, column: int) -> int:
    return (N - 1 - column) % workers


def _run_owned(N, workers, body):
    if workers == 1:
        body(owned_columns(N, 1, 0))
        return
    errors = []

    def target(w):
        try:
            body(owned_columns(N, workers, w))
        except BaseException as exc:  # re-raised in the caller
            errors.append(exc)

    threads = [threading.Thread(target=target, args=(w,), daemon=True) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]


class ProgressTable:
    """Per-tile completion flags (set once, never cleared).

    ``signal`` is called after the tile's final write; ``wait`` blocks until the
    flag is set. Blocking waits replace spinning, so any worker count is safe.
    """

    def __init__(self, tiles: Iterable[Coord]):
        self._flags = {t: threading.Event() for t in tiles}
        self._aborted = threading.Event()

    def is_set(self, tile) -> bool:
        return self._flags[tile].is_set()

    def signal(self, tile) -> None:
        self._flags[tile].set()

    def wait(self, tile, poll: float = 0.05) -> None:
        ev = self._flags[tile]
        while not ev.wait(poll):
            if self._aborted.is_set():
                raise ContractError(f"aborted while waiting for tile {tile}")

    def abort(self) -> None:
        self._aborted.set()

    def __len__(self):
        return len(self._flags)


@dataclass
class SelectedInverse:
    layout: TileLayout
    selection: SelectedTileSet
    tiles: dict
    factor_checksum: str = ""
    request_digest: str = ""
    request: SelectionRequest | None = field(default=None, repr=False)

    @property
    def pattern(self) -> TilePattern:
        return TilePattern.from_tiles(self.layout, self.tiles)

    def as_tiled(self) -> TiledMatrix:
        return TiledMatrix(self.layout, self.pattern, self.tiles, Phase.SIGMA)

    def bitwise_equal(self, other: "SelectedInverse") -> bool:
        return self.as_tiled().bitwise_equal(other.as_tiled())

    def checksum(self) -> str:
        return self.as_tiled().checksum()


def _sigma_tile(target: Coord, p1: dict, K: Sequence[int], sigma: dict, wait, b: int) -> np.ndarray:
    """One inverse tile from phase-1 tiles and already finished inverse tiles."""
    j, i = target
    if j == i:
        acc = kernels.lauum(p1[(i, i)], lower=False)
        for k in K:
            wait((k, i))
            kernels.gemm(acc, sigma[(k, i)], p1[(k, i)], trans_a=True, alpha=-1.0, overwrite_c=True)
        return kernels.mirror_lower(acc)
    acc = np.zeros((b, b))
    for k in K:
        op = _operand(j, k)
        wait(op)
        kernels.gemm(acc, sigma[op], p1[(k, i)], trans_a=k > j, alpha=-1.0, overwrite_c=True)
    return acc


def phase2(p1: TiledMatrix, selection: SelectedTileSet, workers: int = 1) -> SelectedInverse:
    if p1.phase is not Phase.PHASE1:
        raise InvalidArgumentError(f"phase2 needs a PHASE1 container, got {p1.phase.name}")
    N, b = p1.layout.N, p1.layout.b
    if len(selection.work) != N:
        raise ContractError(f"selection built for {len(selection.work)} columns, factor has {N}")
    pattern = p1.pattern
    for i in range(N):
        if (i, i) not in p1.tiles:
            raise ContractError(f"phase-1 tiles miss diagonal ({i}, {i})")
    sigma: dict = {}
    progress = ProgressTable(selection.closure)

    def wait(tile):
        if tile not in selection.closure:
            raise ContractError(f"operand tile {tile} is not in the closure")
        progress.wait(tile)

    tiles = p1.tiles

    def body(cols):
        try:
            for i in cols:
                K = pattern.below(i)
                for target in selection.work[i]:
                    sigma[target] = _sigma_tile(target, tiles, K, sigma, wait, b)
                    progress.signal(target)
        except BaseException:
            progress.abort()
            raise

    _run_owned(N, workers, body)
    return SelectedInverse(p1.layout, selection, sigma)


def _factor_of(source, workers):
    if source.phase is Phase.FACTOR:
        return source
    if source.phase is Phase.MATRIX:
        return factorize(source, workers=workers)
    raise InvalidArgumentError(f"expected a matrix or a factor, got phase {source.phase.name}")


def selected_inverse(source: TiledMatrix, request, workers: int = 1, timings: dict | None = None) -> SelectedInverse:
    """Factorize if needed, select, close, run both phases."""
    request = SelectionRequest.of(request)
    t0 = time.perf_counter()
    factor = _factor_of(source, workers)
    t1 = time.perf_counter()
    requested = select_tiles(factor.layout, factor.pattern, request)
    selection = symbolic_inversion(requested, factor.pattern)
    grew = len(selection.closure) > CLOSURE_GROWTH_WARNING * max(len(requested), 1)
    if grew and not selection.closure <= factor.pattern.tiles:
        warnings.warn(
            f"closure has {len(selection.closure)} tiles for {len(requested)} requested tiles",
            RuntimeWarning,
            stacklevel=2,
        )
    p1 = phase1(factor, workers=workers)
    t2 = time.perf_counter()
    sigma = phase2(p1, selection, workers=workers)
    t3 = time.perf_counter()
    if timings is not None:
        timings.update(factorize=t1 - t0, phase1=t2 - t1, phase2=t3 - t2)
    sigma.factor_checksum = factor.checksum()
    sigma.request_digest = request.digest()
    sigma.request = request
    return sigma


def full_inverse(source: TiledMatrix, workers: int = 1) -> SelectedInverse:
    """Inverse of every lower tile, the classic right-to-left tile sweep.

    Serial reference path: no closure computation, no progress flags. Produces
    the same bits as ``selected_inverse(..., Preset.ALL)``.
    """
    factor = _factor_of(source, workers)
    p1 = phase1(factor, workers=workers)
    N, b = factor.layout.N, factor.layout.b
    sigma: dict = {}

    def ready(tile):
        if tile not in sigma:
            raise ContractError(f"tile {tile} used before it was computed")

    for i in range(N - 1, -1, -1):
        K = factor.pattern.below(i)
        for j in range(N - 1, i - 1, -1):
            sigma[(j, i)] = _sigma_tile((j, i), p1.tiles, K, sigma, ready, b)
    requested = frozenset(sigma)
    work = tuple(tuple((j, i) for j in range(N - 1, i - 1, -1)) for i in range(N))
    out = SelectedInverse(factor.layout, SelectedTileSet(requested, requested, work), sigma)
    out.factor_checksum = factor.checksum()
    out.request_digest = SelectionRequest(preset=Preset.ALL).digest()
    out.request = SelectionRequest(preset=Preset.ALL)
    return out


def gather(sigma: SelectedInverse, rows, cols) -> np.ndarray:
    """Values of the inverse at scalar ``(rows[q], cols[q])`` (symmetric reads)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    n, b = sigma.layout.n, sigma.layout.b
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise InvalidArgumentError(f"entry index out of range for n={n}")
    r = np.maximum(rows, cols)
    c = np.minimum(rows, cols)
    ti, tj = r // b, c // b
    key = ti * sigma.layout.N + tj
    out = np.empty(r.size)
    order = np.argsort(key, kind="stable")
    uniq, starts = np.unique(key[order], return_index=True)
    bounds = np.append(starts, order.size)
    for u, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
        tile = (int(u // sigma.layout.N), int(u % sigma.layout.N))
        idx = order[lo:hi]
        blk = sigma.tiles.get(tile)
        if blk is None:
            q = idx[0]
            raise ContractError(
                f"entry ({rows[q]}, {cols[q]}) lies in tile {tile}, outside the computed closure"
            )
        out[idx] = blk[r[idx] % b, c[idx] % b]
    return out


def extract_entries(sigma: SelectedInverse, request, pattern: TilePattern | None = None) -> list[tuple[int, int, float]]:
    """Requested scalar values as ``(r, c, value)`` in request order."""
    rows, cols = request_entries(sigma.layout, request, pattern)
    vals = gather(sigma, rows, cols)
    return [(int(r), int(c), float(v)) for r, c, v in zip(rows, cols, vals)]


__all__ = [
    "Preset",
    "ProgressTable",
    "SelectedInverse",
    "SelectedTileSet",
    "SelectionRequest",
    "gather",
    "extract_entries",
    "full_inverse",
    "owned_columns",
    "owner_of",
    "parse_request_file",
    "phase1",
    "phase2",
    "request_entries",
    "select_tiles",
    "selected_inverse",
    "symbolic_inversion",
]
