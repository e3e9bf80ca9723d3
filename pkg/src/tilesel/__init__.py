"""Tiled Cholesky factorization and two-phase parallel selected inversion
for SPD matrices with banded-plus-arrowhead sparsity."""

__version__ = "0.1.0"

from .cholesky import factorize, symbolic_cholesky
from .errors import (
    ContractError,
    FormatError,
    InvalidArgumentError,
    NotSPDError,
    ParseError,
    SingularTileError,
    StructureError,
    TileselError,
)
from .matgen import ArrowheadSpec, generate_arrowhead, measured_density, read_matrix_market, write_matrix_market
from .selinv import (
    Preset,
    SelectionRequest,
    extract_entries,
    full_inverse,
    phase1,
    phase2,
    select_tiles,
    selected_inverse,
    symbolic_inversion,
)
from .tile_store import (
    Phase,
    TiledMatrix,
    TileLayout,
    TilePattern,
    build_layout,
    map_entry_to_tile,
    read_tiles,
    symbolic_fill,
    write_tiles,
)
