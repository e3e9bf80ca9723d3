"""Tile grid, tile-level sparsity patterns and tiled storage containers.

A matrix of logical size ``n`` is cut into an ``N x N`` grid of ``b x b`` tiles.
When ``b`` does not divide ``n`` the trailing tile is padded: padding rows and
columns carry the identity on the diagonal and zeros elsewhere, so factor and
inverse of the padded system restrict exactly to the original indices.

Only lower-triangular tile coordinates ``(i, j)`` with ``i >= j`` are stored.
"""

from __future__ import annotations

import enum
import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import FormatError, InvalidArgumentError, StructureError

Coord = tuple[int, int]

MAGIC = b"STLS"
FORMAT_VERSION = 1


class Phase(enum.IntEnum):
    """What the payload of a tiled container holds."""

    MATRIX = 0
    FACTOR = 1
    PHASE1 = 2
    SIGMA = 3


@dataclass(frozen=True)
class TileLayout:
    n: int
    b: int
    N: int
    n_padded: int

    @property
    def padding(self) -> int:
        return self.n_padded - self.n


def build_layout(n: int, b: int) -> TileLayout:
    if int(n) != n or int(b) != b or n < 1 or b < 1:
        raise InvalidArgumentError(f"need n >= 1 and b >= 1, got n={n}, b={b}")
    n, b = int(n), int(b)
    N = -(-n // b)
    return TileLayout(n=n, b=b, N=N, n_padded=N * b)


def map_entry_to_tile(layout: TileLayout, r: int, c: int) -> tuple[Coord, Coord]:
    """Return ``(tile, offset)`` of scalar entry ``(r, c)``, reflected into the lower triangle."""
    n = layout.n
    if not (0 <= r < n and 0 <= c < n):
        raise InvalidArgumentError(f"entry ({r}, {c}) out of range for n={n}")
    if r < c:
        r, c = c, r
    b = layout.b
    return (r // b, c // b), (r % b, c % b)


def tile_to_entry(layout: TileLayout, tile: Coord, offset: Coord) -> Coord:
    b = layout.b
    return tile[0] * b + offset[0], tile[1] * b + offset[1]


@dataclass(frozen=True)
class TilePattern:
    """Set of structurally nonzero lower tiles plus per-column neighbor lists.

    ``neighbors(j)`` is the sorted list of rows ``i`` with ``(i, j)`` in the pattern
    (the diagonal included); ``below(j)`` drops the diagonal.
    """

    layout: TileLayout
    tiles: frozenset
    _columns: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        N = self.layout.N
        cols: list[list[int]] = [[] for _ in range(N)]
        for i, j in self.tiles:
            if not (0 <= j <= i < N):
                raise InvalidArgumentError(f"tile ({i}, {j}) is not a lower tile of a {N}x{N} grid")
            cols[j].append(i)
        object.__setattr__(self, "_columns", tuple(tuple(sorted(c)) for c in cols))

    @classmethod
    def from_tiles(cls, layout: TileLayout, tiles: Iterable[Coord]) -> "TilePattern":
        return cls(layout, frozenset((int(i), int(j)) for i, j in tiles))

    @property
    def N(self) -> int:
        return self.layout.N

    def neighbors(self, j: int) -> tuple[int, ...]:
        return self._columns[j]

    def below(self, j: int) -> tuple[int, ...]:
        col = self._columns[j]
        return col[1:] if col and col[0] == j else col

    def __contains__(self, tile) -> bool:
        return tile in self.tiles

    def __len__(self) -> int:
        return len(self.tiles)

    def __iter__(self) -> Iterator[Coord]:
        """Iterate column by column, rows ascending."""
        for j, col in enumerate(self._columns):
            for i in col:
                yield (i, j)

    def off_diagonal_count(self) -> int:
        return sum(1 for i, j in self.tiles if i != j)


def dense_pattern(layout: TileLayout) -> TilePattern:
    N = layout.N
    return TilePattern.from_tiles(layout, ((i, j) for j in range(N) for i in range(j, N)))


def diagonal_pattern(layout: TileLayout) -> TilePattern:
    return TilePattern.from_tiles(layout, ((i, i) for i in range(layout.N)))


def band_arrow_pattern(layout: TileLayout, band: int) -> TilePattern:
    """Band-plus-arrowhead tile pattern with tile band width ``band``.

    The width counts the arrow column as one block: tiles with
    ``0 <= i - j <= band - 1`` plus the whole last tile row. ``band == 1`` is a pure
    arrow, ``band >= N`` is dense.
    """
    N = layout.N
    if band < 1:
        raise InvalidArgumentError(f"band must be >= 1, got {band}")
    return TilePattern.from_tiles(
        layout, ((i, j) for j in range(N) for i in range(j, N) if i - j <= band - 1 or i == N - 1)
    )


def symbolic_fill(pattern: TilePattern) -> TilePattern:
    """Tile-level elimination closure.

    If ``(i, k)`` and ``(j, k)`` are present with ``k < j <= i`` then ``(i, j)`` is
    added. Fill only lands in columns to the right, so one ascending sweep reaches
    the fixpoint.
    """
    N = pattern.N
    for j in range(N):
        if (j, j) not in pattern.tiles:
            raise StructureError(f"diagonal tile ({j}, {j}) missing from column {j}", column=j)
    cols = [set(pattern.below(j)) for j in range(N)]
    for k in range(N):
        rows = sorted(cols[k])
        for a, j in enumerate(rows):
            cols[j].update(rows[a + 1:])
    tiles = {(i, i) for i in range(N)}
    tiles.update((i, j) for j in range(N) for i in cols[j])
    if len(tiles) == len(pattern.tiles):
        return pattern
    return TilePattern.from_tiles(pattern.layout, tiles)


@dataclass
class TiledMatrix:
    """Tile payloads over a pattern.

    Used for the input matrix (``Phase.MATRIX``), the Cholesky factor
    (``Phase.FACTOR``), its phase-1 transform (``Phase.PHASE1``) and inverse
    tiles (``Phase.SIGMA``). Each payload is a C-contiguous ``b x b`` float64 array.
    """

    layout: TileLayout
    pattern: TilePattern
    tiles: dict
    phase: Phase = Phase.MATRIX

    @classmethod
    def zeros(cls, pattern: TilePattern, phase: Phase = Phase.MATRIX) -> "TiledMatrix":
        b = pattern.layout.b
        return cls(pattern.layout, pattern, {t: np.zeros((b, b)) for t in pattern}, phase)

    @classmethod
    def from_dense(cls, A, b: int, pattern: TilePattern | None = None) -> "TiledMatrix":
        """Tile the lower triangle of a dense symmetric matrix.

        Without an explicit pattern the tight cover of the nonzeros (plus all
        diagonal tiles) is used.
        """
        A = np.asarray(A, dtype=np.float64)
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}")
        layout = build_layout(n, b)
        P = np.eye(layout.n_padded)
        P[:n, :n] = np.tril(A)
        if pattern is None:
            N = layout.N
            blocks = P.reshape(N, b, N, b).swapaxes(1, 2)
            nz = np.any(blocks != 0.0, axis=(2, 3))
            tiles = {(int(i), int(j)) for i, j in zip(*np.nonzero(nz)) if i >= j}
            tiles.update((i, i) for i in range(N))
            pattern = TilePattern.from_tiles(layout, tiles)
        out = {}
        for i, j in pattern:
            blk = P[i * b:(i + 1) * b, j * b:(j + 1) * b].copy()
            if i == j:
                blk = np.tril(blk) + np.tril(blk, -1).T
            out[(i, j)] = blk
        return cls(layout, pattern, out, Phase.MATRIX)

    def to_dense(self, symmetric: bool | None = None) -> np.ndarray:
        """Assemble the ``n x n`` dense matrix (padding dropped).

        Symmetric payloads (matrix, sigma) are mirrored; factor payloads are
        assembled as the lower-triangular matrix they represent.
        """
        if symmetric is None:
            symmetric = self.phase in (Phase.MATRIX, Phase.SIGMA)
        b, n = self.layout.b, self.layout.n
        M = np.zeros((self.layout.n_padded,) * 2)
        for (i, j), blk in self.tiles.items():
            if i == j and symmetric:
                blk = np.tril(blk)
            M[i * b:(i + 1) * b, j * b:(j + 1) * b] = blk
        if symmetric:
            M = M + np.tril(M, -1).T
        return M[:n, :n]

    def block(self, i: int, j: int) -> np.ndarray:
        """Symmetric read: upper-triangle tiles are served as transposes."""
        if i >= j:
            return self.tiles[(i, j)]
        return self.tiles[(j, i)].T

    def entry(self, r: int, c: int) -> float:
        tile, (oi, oj) = map_entry_to_tile(self.layout, r, c)
        return float(self.tiles[tile][oi, oj])

    def copy(self) -> "TiledMatrix":
        return TiledMatrix(self.layout, self.pattern, {k: v.copy() for k, v in self.tiles.items()}, self.phase)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<IIII", self.layout.n, self.layout.b, self.layout.N, int(self.phase)))
        for t in sorted(self.tiles):
            h.update(struct.pack("<II", *t))
            h.update(np.ascontiguousarray(self.tiles[t], dtype="<f8").tobytes())
        return h.hexdigest()

    def bitwise_equal(self, other: "TiledMatrix") -> bool:
        if self.tiles.keys() != other.tiles.keys():
            return False
        return all(np.array_equal(v.view(np.uint64), other.tiles[k].view(np.uint64)) for k, v in self.tiles.items())


TiledSymmetricMatrix = TiledMatrix
TiledFactor = TiledMatrix

_HEADER = struct.Struct("<4sIIIIII")


def write_tiles(matrix: TiledMatrix, dest: str | Path | BinaryIO) -> None:
    """Serialize to the little-endian ``STLS`` tile format."""
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            return write_tiles(matrix, fh)
    lay = matrix.layout
    dest.write(_HEADER.pack(MAGIC, FORMAT_VERSION, lay.n, lay.b, lay.N, int(matrix.phase), len(matrix.tiles)))
    for i, j in sorted(matrix.tiles, key=lambda t: (t[1], t[0])):
        dest.write(struct.pack("<II", i, j))
        dest.write(np.ascontiguousarray(matrix.tiles[(i, j)], dtype="<f8").tobytes())


def read_tiles(src: str | Path | BinaryIO | bytes) -> TiledMatrix:
    if isinstance(src, bytes):
        return read_tiles(io.BytesIO(src))
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            return read_tiles(fh)
    head = src.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise FormatError("truncated tile file header")
    magic, version, n, b, N, phase, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tile format version {version}")
    layout = build_layout(n, b)
    if layout.N != N:
        raise FormatError(f"inconsistent header: N={N} but ceil(n/b)={layout.N}")
    try:
        phase = Phase(phase)
    except ValueError:
        raise FormatError(f"unknown phase tag {phase}") from None
    nbytes = 8 * b * b
    tiles = {}
    for _ in range(count):
        coord = src.read(8)
        payload = src.read(nbytes)
        if len(coord) != 8 or len(payload) != nbytes:
            raise FormatError("truncated tile payload")
        i, j = struct.unpack("<II", coord)
        if (i, j) in tiles:
            raise FormatError(f"duplicate tile ({i}, {j})")
        tiles[(i, j)] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(b, b)
    pattern = TilePattern.from_tiles(layout, tiles)
    return TiledMatrix(layout, pattern, tiles, phase)
