import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from tilesel.cholesky import Kernel, factorize, symbolic_cholesky
from tilesel.errors import InvalidArgumentError, NotSPDError
from tilesel.matgen import ArrowheadSpec, generate_arrowhead
from tilesel.oracle import dense_cholesky_ref
from tilesel.tile_store import (
    Phase,
    TiledMatrix,
    TilePattern,
    band_arrow_pattern,
    build_layout,
    dense_pattern,
    symbolic_fill,
)


def names(plan):
    return [repr(t) for t in plan.tasks]


def test_plan_small():
    assert names(symbolic_cholesky(dense_pattern(build_layout(1, 1)))) == ["POTRF(0, 0)"]
    assert names(symbolic_cholesky(dense_pattern(build_layout(2, 1)))) == [
        "POTRF(0, 0)", "TRSM(1, 0)", "SYRK(1, 1)", "POTRF(1, 1)"]


@pytest.mark.parametrize("B,syrk,gemm", [(1, 5, 0), (2, 9, 4), (6, 15, 20)])
def test_band_arrow_update_counts(B, syrk, gemm):
    # counts enumerated by hand: column j with m tiles below gets m SYRK and m(m-1)/2 GEMM
    plan = symbolic_cholesky(band_arrow_pattern(build_layout(6, 1), B))
    kinds = [t.kernel for t in plan.tasks]
    assert kinds.count(Kernel.SYRK) == syrk
    assert kinds.count(Kernel.GEMM) == gemm
    assert kinds.count(Kernel.POTRF) == 6


@st.composite
def patterns(draw):
    N = draw(st.integers(1, 8))
    off = [(i, j) for j in range(N) for i in range(j + 1, N)]
    chosen = draw(st.lists(st.sampled_from(off), unique=True)) if off else []
    return TilePattern.from_tiles(build_layout(N, 1), [(i, i) for i in range(N)] + chosen)


@given(patterns())
def test_plan_is_topologically_ordered(p):
    plan = symbolic_cholesky(p)
    assert plan.pattern.tiles == symbolic_fill(p).tiles
    last_write, first_read = {}, {}
    for pos, t in enumerate(plan.tasks):
        for op in t.operands:
            first_read.setdefault(op, pos)
        last_write[t.target] = pos
    for tile, pos in first_read.items():
        assert last_write[tile] < pos or tile not in last_write
        # the final write of an operand precedes its first read
        writes = [q for q, t in enumerate(plan.tasks) if t.target == tile]
        assert max(writes) < pos


def test_identity_factor():
    M = TiledMatrix.from_dense(np.eye(7), 3)
    L = factorize(M)
    assert L.phase is Phase.FACTOR
    np.testing.assert_array_equal(L.to_dense(symmetric=False), np.eye(7))


def test_single_tile_hand_factor():
    L = factorize(TiledMatrix.from_dense(np.array([[4.0, 2.0], [2.0, 5.0]]), 2))
    np.testing.assert_array_equal(L.tiles[(0, 0)], [[2.0, 0.0], [1.0, 2.0]])


def test_preset_scaled_matches_oracle():
    A = generate_arrowhead(ArrowheadSpec(257, 30, 5, 0.5, seed=1), 32).matrix
    L = factorize(A)
    ref = dense_cholesky_ref(A.to_dense())
    got = L.to_dense(symmetric=False)[:257, :257]
    assert np.abs(got - ref).max() / np.abs(ref).max() <= 1e-10
    Ad = A.to_dense()
    assert np.abs(got @ got.T - Ad).max() <= 1e-10 * np.abs(Ad).max()
    assert L.pattern.tiles == symbolic_fill(A.pattern).tiles


def test_band_arrow_pattern_preserved():
    spec = ArrowheadSpec(500, 40, 8, 0.6, seed=2)
    A = generate_arrowhead(spec, 32).matrix
    assert factorize(A).pattern.tiles == A.pattern.tiles


def test_worker_invariance(rng):
    A = TiledMatrix.from_dense(random_spd(70, rng), 8)
    ref = factorize(A, workers=1)
    for w in (2, 4, 8):
        assert factorize(A, workers=w).bitwise_equal(ref)


def test_not_spd_is_annotated():
    A = np.eye(9)
    A[7, 7] = -1.0
    with pytest.raises(NotSPDError) as exc:
        factorize(TiledMatrix.from_dense(A, 4))
    assert exc.value.tile == (1, 1)
    assert exc.value.index == 7


def test_bad_arguments(rng):
    M = TiledMatrix.from_dense(np.eye(4), 2)
    with pytest.raises(InvalidArgumentError):
        factorize(M, workers=0)
    with pytest.raises(InvalidArgumentError):
        factorize(factorize(M))
