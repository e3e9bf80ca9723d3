"""Acceptance criteria, one test each; every test logs a PASS/FAIL line.

The lines are repeated in the pytest terminal summary under
"acceptance criteria".
"""

import json
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from tilesel.cholesky import factorize
from tilesel.cli import main
from tilesel.dagviz import count_kernels, critical_path, predict_gemm_count, synthetic_dag
from tilesel.matgen import ArrowheadSpec, generate_arrowhead
from tilesel.oracle import dense_inverse_ref, max_rel_error
from tilesel.selinv import Preset, full_inverse, gather, request_entries, selected_inverse, symbolic_inversion

SUITE = {
    "dense-64": ArrowheadSpec(64, 63, 0, 1.0, seed=101),
    "n257": ArrowheadSpec(257, 30, 5, 0.5, seed=102),
    "n1001": ArrowheadSpec(1001, 100, 10, 0.4, seed=103),
    "n2000": ArrowheadSpec(2000, 150, 12, 0.2, seed=104),
}
BAND_ARROW = ("n257", "n1001", "n2000")
TILE_SIZES = (8, 32, 120)
WORKERS = (1, 2, 4, 8)
TOL = 1e-9


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def oracle_cache():
    return {name: dense_inverse_ref(generate_arrowhead(spec, 120).matrix.to_dense()) for name, spec in SUITE.items()}


@pytest.fixture(scope="module")
def factors():
    cache = {}

    def get(name, b):
        if (name, b) not in cache:
            mat = generate_arrowhead(SUITE[name], b).matrix
            cache[(name, b)] = (mat, factorize(mat))
        return cache[(name, b)]

    return get


def off_pattern_entries(layout, pattern):
    """All scalar entries of one lower tile missing from the factor pattern.

    Starts from the middle column so the closure stays moderate. Returns
    ``(None, None)`` when the pattern is dense.
    """
    N, b, n = layout.N, layout.b, layout.n
    for j in list(range(N // 2, N)) + list(range(N // 2)):
        for i in range(j + 1, N):
            if (i, j) not in pattern:
                oi, oj = np.indices((b, b)).reshape(2, -1)
                r, c = i * b + oi, j * b + oj
                ok = r < n
                return (i, j), list(zip(r[ok].tolist(), c[ok].tolist()))
    return None, None


def test_criterion_1_reference_gemm_counts():
    t0 = time.perf_counter()
    got = {
        "dense": count_kernels(synthetic_dag(6)).gemm_actual,
        "B=1": count_kernels(synthetic_dag(6, 1)).gemm_actual,
        "B=2": count_kernels(synthetic_dag(6, 2)).gemm_actual,
    }
    dt = time.perf_counter() - t0
    ok = got == {"dense": 70, "B=1": 10, "B=2": 26} and dt < 1.0
    assert record(1, ok, f"GEMM counts {got} in {dt:.3f}s (want 70/10/26, < 1 s)")


def test_criterion_2_closed_form():
    t0 = time.perf_counter()
    bad = [(N, B) for N in range(2, 31) for B in range(1, N)
           if count_kernels(synthetic_dag(N, B)).gemm_actual != predict_gemm_count(N, B)]
    bad_full = [N for N in range(1, 101) if predict_gemm_count(N, N) != (N**3 - N) // 3]
    dt = time.perf_counter() - t0
    ok = not bad and not bad_full and dt < 5.0
    assert record(2, ok, f"{29 * 30 // 2} (N,B) pairs, mismatches={bad[:5]}, full-identity mismatches={bad_full[:5]}, "
                         f"{dt:.2f}s (< 5 s)")


def test_criterion_3_critical_path():
    dense = critical_path(synthetic_dag(6))
    arrow = critical_path(synthetic_dag(6, 2))
    ok = dense == 6 and arrow == 6
    assert record(3, ok, f"critical path dense N=6: {dense}, arrowhead N=6 B=2: {arrow} (want 6 and 6)")


def test_criterion_4_oracle_equivalence(oracle_cache, factors):
    t0 = time.perf_counter()
    worst, worst_norm, cases, failures = 0.0, 0.0, 0, []
    for name, spec in SUITE.items():
        ref = oracle_cache[name]
        for b in TILE_SIZES:
            mat, L = factors(name, b)
            requests = [("DIAGONAL", Preset.DIAGONAL), ("FACTOR_PATTERN", Preset.FACTOR_PATTERN)]
            if spec.n <= 257:
                requests.append(("ALL", Preset.ALL))
            tile, entries = off_pattern_entries(L.layout, L.pattern.tiles)
            if entries:
                requests.append((f"tile{tile}", entries))
            for label, req in requests:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    sig = selected_inverse(L, req)
                rows, cols = request_entries(L.layout, req, L.pattern)
                want, got = ref[rows, cols], gather(sig, rows, cols)
                err = max_rel_error(want, got)
                worst = max(worst, err)
                worst_norm = max(worst_norm, np.abs(got - want).max() / np.abs(want).max())
                cases += 1
                if not err <= TOL:
                    failures.append((name, b, label, err))
    dt = time.perf_counter() - t0
    ok = not failures and dt <= 600
    assert record(4, ok, f"{cases} cases, worst entrywise max_rel_error={worst:.2e} (tol {TOL:.0e}), "
                         f"worst max-norm relative error={worst_norm:.2e}, "
                         f"failures={failures[:3]}, {dt:.1f}s (<= 600 s)")


def test_criterion_5_thread_determinism(factors):
    mismatches, cases = [], 0
    for name in SUITE:
        for b in TILE_SIZES:
            mat, _ = factors(name, b)
            for req in (Preset.FACTOR_PATTERN, Preset.DIAGONAL):
                ref_L = factorize(mat, workers=1)
                ref = selected_inverse(ref_L, req, workers=1)
                for w in WORKERS[1:]:
                    L = factorize(mat, workers=w)
                    sig = selected_inverse(L, req, workers=w)
                    cases += 1
                    if not (L.bitwise_equal(ref_L) and sig.bitwise_equal(ref)):
                        mismatches.append((name, b, req.name, w))
    ok = not mismatches
    assert record(5, ok, f"{cases} comparisons across workers {WORKERS}, mismatches={mismatches[:3]}")


def test_criterion_6_entry_points():
    results = []
    dense_specs = {"dense-64": SUITE["dense-64"], "dense-257": ArrowheadSpec(257, 256, 0, 1.0, seed=105)}
    for name, spec in dense_specs.items():
        for b in TILE_SIZES:
            L = factorize(generate_arrowhead(spec, b).matrix)
            results.append((name, b, full_inverse(L).bitwise_equal(selected_inverse(L, Preset.ALL))))
    ok = all(r[2] for r in results)
    bad = [(n, b) for n, b, r in results if not r]
    assert record(6, ok, f"full_inverse == selected_inverse(ALL) bitwise on {len(results)} dense cases, mismatches={bad}")


def test_criterion_7_case7_closure(factors):
    bad, cases = [], 0
    for name in BAND_ARROW:
        for b in TILE_SIZES:
            _, L = factors(name, b)
            cases += 1
            if symbolic_inversion(L.pattern.tiles, L.pattern).closure != L.pattern.tiles:
                bad.append((name, b))
    ok = not bad
    assert record(7, ok, f"closure(FACTOR_PATTERN) == factor pattern on {cases} band+arrowhead cases, violations={bad}")


def test_criterion_8_complexity_trend():
    bad = []
    for B in (1, 2, 3):
        counts = {N: count_kernels(synthetic_dag(N, B)).gemm_actual for N in range(B + 2, 31)}
        diffs = {counts[N + 1] - counts[N] for N in range(B + 2, 30)}
        if diffs != {B * B + B}:
            bad.append((B, sorted(diffs)))
    ok = not bad
    assert record(8, ok, f"first differences over N in [B+2, 30] equal B^2+B for B=1,2,3; violations={bad}")


@pytest.mark.slow
def test_criterion_9_scalability(tmp_path):
    import os

    out = tmp_path / "bench.json"
    t0 = time.perf_counter()
    rc = main(["bench", "--n", "20010", "--bandwidth", "2000", "--thickness", "10", "--density", "0.1",
               "--tile-size", "120", "--threads", "1,8", "--repeat", "3", "--out", str(out)])
    dt = time.perf_counter() - t0
    doc = json.loads(out.read_text())
    speed = {p["threads"]: p["speedup"] for p in doc["points"]}
    ok = rc == 0 and speed.get(8, 0.0) >= 2.0 and dt <= 300
    assert record(9, ok, f"speedup at 8 workers {speed.get(8, 0.0):.2f} (want >= 2.0) on {os.cpu_count()} cpu(s), "
                         f"medians {[round(p['median_s'], 2) for p in doc['points']]}s, total {dt:.0f}s (<= 300 s)")
