"""Exception hierarchy shared across the package."""


class TileselError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TileselError, ValueError):
    pass


class StructureError(TileselError):
    """A tile pattern violates a structural precondition (e.g. a missing diagonal)."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class NotSPDError(TileselError, ArithmeticError):
    """Non-positive pivot encountered during a Cholesky factorization.

    ``pivot`` is the scalar index within the tile (or the dense matrix); ``tile``
    is filled in by the tiled factorization and ``index`` is the global scalar index.
    """

    def __init__(self, pivot, tile=None, index=None):
        self.pivot = pivot
        self.tile = tile
        self.index = index
        where = f"pivot {pivot}"
        if tile is not None:
            where += f" of tile {tile} (global index {index})"
        super().__init__(f"matrix is not positive definite: non-positive {where}")


class SingularTileError(TileselError, ArithmeticError):
    def __init__(self, pivot, tile=None):
        self.pivot = pivot
        self.tile = tile
        msg = f"singular triangular tile: zero diagonal at {pivot}"
        if tile is not None:
            msg += f" in tile {tile}"
        super().__init__(msg)


class ContractError(TileselError):
    pass


class ParseError(TileselError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    pass


class OracleGuardError(TileselError):
    pass
