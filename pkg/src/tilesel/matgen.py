"""Banded-plus-arrowhead SPD test matrices and Matrix Market I/O.

Structure: scalar half-bandwidth ``w`` (entries with ``0 < r - c <= w``) and an
arrowhead of thickness ``t`` (the last ``t`` rows and columns are dense). In-band
off-diagonals outside the arrowhead are kept with probability ``density`` and
drawn uniformly from [-1, 1]; the diagonal is the absolute row sum plus one,
which makes the matrix strictly diagonally dominant and hence SPD.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .errors import FormatError, InvalidArgumentError, ParseError
from .tile_store import Phase, TiledMatrix, TileLayout, TilePattern, build_layout

MM_BANNER = "%%MatrixMarket matrix coordinate real symmetric"


@dataclass(frozen=True)
class ArrowheadSpec:
    n: int
    bandwidth: int
    thickness: int
    density: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n, w, t, d = self.n, self.bandwidth, self.thickness, self.density
        if n < 1 or w < 0 or t < 0:
            raise InvalidArgumentError(f"need n >= 1, bandwidth >= 0, thickness >= 0; got {self}")
        if not t < n:
            raise InvalidArgumentError(f"thickness {t} must be < n={n}")
        if not w < n - t:
            raise InvalidArgumentError(f"bandwidth {w} must be < n - thickness = {n - t}")
        if not 0.0 < d <= 1.0:
            raise InvalidArgumentError(f"density must lie in (0, 1], got {d}")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def band_slots(self) -> int:
        """Lower-triangle in-band positions outside the arrowhead."""
        m = self.n - self.thickness
        w = self.bandwidth
        return w * m - w * (w + 1) // 2

    def tile_band(self, b: int) -> int:
        """Tile band width, counting the arrow column as one block."""
        return -(-self.bandwidth // b) + 1


@dataclass(frozen=True)
class Preset:
    id: int
    n: int
    bandwidth: int
    thickness: int
    density_percent: float
    convention: str
    source: str

    def inclusion_probability(self) -> float:
        """Per-slot probability reproducing the tabulated density.

        ``band`` presets tabulate the in-band fraction directly. ``overall``
        presets count every nonzero of the full matrix, so the diagonal and the
        dense arrowhead are subtracted before spreading the remainder over the
        band (both triangles).
        """
        frac = self.density_percent / 100.0
        if self.convention == "band":
            p = frac
        else:
            n, t = self.n, self.thickness
            spec = ArrowheadSpec(n, self.bandwidth, t)
            fixed = (n * n - (n - t) ** 2) + (n - t)
            p = (frac * n * n - fixed) / (2 * spec.band_slots)
        return float(min(1.0, max(p, 1e-6)))

    def spec(self, seed: int = 0) -> ArrowheadSpec:
        return ArrowheadSpec(self.n, self.bandwidth, self.thickness, self.inclusion_probability(), seed)


def load_presets() -> dict[int, Preset]:
    text = resources.files(__package__).joinpath("presets.tsv").read_text()
    rows = csv.reader((ln for ln in text.splitlines() if ln and not ln.startswith("#")), delimiter="\t")
    out = {}
    for pid, n, w, t, dens, conv, src in rows:
        out[int(pid)] = Preset(int(pid), int(n), int(w), int(t), float(dens), conv, src)
    return out


def get_preset(pid: int) -> Preset:
    presets = load_presets()
    if pid not in presets:
        raise InvalidArgumentError(f"unknown preset {pid}; valid ids are 1..{max(presets)}")
    return presets[pid]


class _TileBuffer:
    """Scatter scalar lower-triangle entries into a preallocated set of tiles."""

    def __init__(self, layout: TileLayout, candidates):
        self.layout = layout
        N = layout.N
        cand = sorted(set(candidates) | {(i, i) for i in range(N)}, key=lambda t: (t[1], t[0]))
        self.coords = cand
        self.slot = np.full((N, N), -1, dtype=np.int64)
        for s, (i, j) in enumerate(cand):
            self.slot[i, j] = s
        b = layout.b
        self.store = np.zeros((len(cand), b, b))

    def add(self, r, c, v):
        b = self.layout.b
        s = self.slot[r // b, c // b]
        self.store[s, r % b, c % b] = v

    def finish(self) -> TiledMatrix:
        lay = self.layout
        b, n = lay.b, lay.n
        tiles = {}
        for s, (i, j) in enumerate(self.coords):
            blk = self.store[s]
            if i == j:
                blk += np.tril(blk, -1).T
                tiles[(i, j)] = blk
            elif blk.any():
                tiles[(i, j)] = blk
        if lay.padding:
            last = tiles[(lay.N - 1, lay.N - 1)]
            for p in range(n - (lay.N - 1) * b, b):
                last[p, p] = 1.0
        return TiledMatrix(lay, TilePattern.from_tiles(lay, tiles), tiles, Phase.MATRIX)


@dataclass
class GeneratedMatrix:
    matrix: TiledMatrix
    spec: ArrowheadSpec
    band_nonzeros: int
    band_slots: int
    lower_nonzeros: int


def _band_candidates(layout: TileLayout, spec: ArrowheadSpec):
    N, b = layout.N, layout.b
    Bt = -(-spec.bandwidth // b)
    cand = {(i, j) for j in range(N) for i in range(j, min(N, j + Bt + 1))}
    if spec.thickness:
        first = (spec.n - spec.thickness) // b
        cand.update((i, j) for i in range(first, N) for j in range(i + 1))
    return cand


def generate_arrowhead(spec: ArrowheadSpec, b: int) -> GeneratedMatrix:
    """Deterministic in ``(spec, b)``; values do not depend on ``b``."""
    layout = build_layout(spec.n, b)
    n, w, t = spec.n, spec.bandwidth, spec.thickness
    m = n - t
    rng = np.random.default_rng(spec.seed)
    buf = _TileBuffer(layout, _band_candidates(layout, spec))
    rowsum = np.zeros(n)
    kept = 0
    for d in range(1, w + 1):
        r = np.arange(d, m)
        u = rng.random(r.size)
        v = rng.uniform(-1.0, 1.0, r.size)
        keep = u < spec.density
        r, v = r[keep], v[keep]
        c = r - d
        buf.add(r, c, v)
        a = np.abs(v)
        rowsum[r] += a
        rowsum[c] += a
        kept += r.size
    arrow = 0
    for r in range(m, n):
        c = np.arange(r)
        v = rng.uniform(-1.0, 1.0, r)
        buf.add(np.full(r, r), c, v)
        a = np.abs(v)
        rowsum[r] += a.sum()
        rowsum[c] += a
        arrow += r
    diag = np.arange(n)
    buf.add(diag, diag, rowsum + 1.0)
    return GeneratedMatrix(buf.finish(), spec, kept, spec.band_slots, kept + arrow + n)


def measured_density(matrix: TiledMatrix, spec: ArrowheadSpec) -> float:
    """Nonzero fraction of the in-band lower slots, arrowhead rows excluded."""
    b = matrix.layout.b
    n, w, m = spec.n, spec.bandwidth, spec.n - spec.thickness
    slots = spec.band_slots
    if slots == 0:
        return 0.0
    oi, oj = np.indices((b, b))
    count = 0
    for (i, j), blk in matrix.tiles.items():
        r = i * b + oi
        c = j * b + oj
        inband = (r > c) & (r - c <= w) & (r < m) & (r < n)
        count += int(np.count_nonzero(blk[inband]))
    return count / slots


def write_matrix_market(matrix: TiledMatrix) -> str:
    """Canonical text: lower triangle, nonzeros only, sorted by column then row."""
    lay = matrix.layout
    b, n = lay.b, lay.n
    rows, cols, vals = [], [], []
    for (i, j), blk in matrix.tiles.items():
        src = np.tril(blk) if i == j else blk
        oi, oj = np.nonzero(src)
        r, c = i * b + oi, j * b + oj
        ok = (r < n) & (c < n)
        rows.append(r[ok])
        cols.append(c[ok])
        vals.append(src[oi[ok], oj[ok]])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    v = np.concatenate(vals) if vals else np.zeros(0)
    order = np.lexsort((r, c))
    out = io.StringIO()
    out.write(MM_BANNER + "\n")
    out.write(f"{n} {n} {order.size}\n")
    for q in order:
        out.write(f"{r[q] + 1} {c[q] + 1} {format(float(v[q]), '.17g')}\n")
    return out.getvalue()


def _parse_entry(line: str, lineno: int, n: int):
    parts = line.split()
    if len(parts) != 3:
        raise ParseError(f"expected 'row col value', got {line.strip()!r}", line=lineno)
    try:
        r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise ParseError(f"malformed entry {line.strip()!r}", line=lineno) from None
    if not (1 <= r <= n and 1 <= c <= n):
        raise ParseError(f"index out of range in {line.strip()!r}", line=lineno)
    if r < c:
        raise FormatError(f"upper-triangle entry ({r}, {c}) in a symmetric file", line=lineno)
    return r - 1, c - 1, v


def read_matrix_market(text: str, b: int) -> TiledMatrix:
    """Parse coordinate/real/symmetric text (lower triangle, 1-based) into tiles of size ``b``."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty input", line=1)
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
        raise ParseError(f"missing MatrixMarket banner: {lines[0]!r}", line=1)
    obj, fmt, field, sym = (s.lower() for s in banner[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise FormatError(f"only 'matrix coordinate' is supported, got {obj} {fmt}", line=1)
    if field not in ("real", "integer", "double"):
        raise FormatError(f"unsupported field type {field!r}", line=1)
    if sym != "symmetric":
        raise FormatError(f"only symmetric matrices are supported, got {sym!r}", line=1)
    k = 1
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip().startswith("%")):
        k += 1
    if k == len(lines):
        raise ParseError("missing size line", line=k + 1)
    size = lines[k].split()
    try:
        nr, nc, nnz = (int(s) for s in size)
    except ValueError:
        raise ParseError(f"malformed size line {lines[k]!r}", line=k + 1) from None
    if nr != nc or nr < 1:
        raise FormatError(f"matrix must be square and non-empty, got {nr}x{nc}", line=k + 1)
    n = nr
    body = [(ln, i + 1) for i, ln in enumerate(lines[k + 1:], k + 1) if ln.strip() and not ln.lstrip().startswith("%")]
    if len(body) != nnz:
        at = body[nnz][1] if len(body) > nnz else len(lines) + 1
        raise ParseError(f"expected {nnz} entries, found {len(body)}", line=at)
    try:
        arr = np.array(" ".join(ln for ln, _ in body).split(), dtype=np.float64).reshape(nnz, 3)
        r = arr[:, 0].astype(np.int64)
        c = arr[:, 1].astype(np.int64)
        ok = (np.all(arr[:, :2] == np.round(arr[:, :2])) and r.min(initial=1) >= 1 and c.min(initial=1) >= 1
              and r.max(initial=1) <= n and c.max(initial=1) <= n and np.all(r >= c))
    except ValueError:
        ok = False
    if not ok:
        # slow path pinpoints the offending line
        parsed = [_parse_entry(ln, no, n) for ln, no in body]
        r = np.array([p[0] for p in parsed], dtype=np.int64) + 1
        c = np.array([p[1] for p in parsed], dtype=np.int64) + 1
        arr = np.array([[0, 0, p[2]] for p in parsed], dtype=np.float64).reshape(-1, 3)
    v = arr[:, 2]
    r, c = r - 1, c - 1
    key = r * n + c
    if np.unique(key).size != key.size:
        dup = key[np.argsort(key)]
        d = dup[np.nonzero(np.diff(dup) == 0)[0][0]]
        raise FormatError(f"duplicate entry ({d // n + 1}, {d % n + 1})")
    layout = build_layout(n, b)
    tiles = set(zip((r // b).tolist(), (c // b).tolist()))
    buf = _TileBuffer(layout, tiles)
    buf.add(r, c, v)
    return buf.finish()


def spec_dict(spec: ArrowheadSpec) -> dict:
    return asdict(spec)
