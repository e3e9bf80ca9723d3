"""Command line entry point: ``tilesel {gen,selinv,dag,verify,bench,replay}``.

Every command writes a JSON run manifest next to its outputs. Exit status is 0
on success, 1 when verification fails, 2 on usage or input errors and 3 on
numeric failures (matrix not SPD, singular tile).
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cholesky import factorize
from .dagviz import assign_cores, build_dag, count_kernels, detect_band, export_dot, synthetic_dag
from .errors import NotSPDError, SingularTileError, TileselError
from .matgen import ArrowheadSpec, generate_arrowhead, get_preset, read_matrix_market, write_matrix_market
from .oracle import MAX_ORACLE_N, dense_inverse_ref, max_rel_error
from .selinv import (
    Preset,
    SelectionRequest,
    gather,
    parse_request_file,
    phase1,
    phase2,
    request_entries,
    select_tiles,
    selected_inverse,
    symbolic_inversion,
)
from .tile_store import Phase, read_tiles, write_tiles

THREADS_ENV = "TILESEL_THREADS"
CONVENTIONS = {"overall": "including arrowhead", "band": "excluding arrowhead"}

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(TileselError):
    pass


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return val


def _thread_list(text: str) -> list[int]:
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"thread counts must be positive, got {text!r}")
    return vals


def _manifest(args, command: str, params: dict, outputs: dict, timings: dict, workers) -> dict:
    return {
        "command": command,
        "argv": getattr(args, "_argv", None),
        "params": params,
        "outputs": outputs,
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "workers": workers,
        "timings_s": timings,
    }


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False, default=str) + "\n")


def _load_matrix(path: str, b: int):
    return read_matrix_market(Path(path).read_text(), b)


def _request(select: str) -> SelectionRequest:
    try:
        return SelectionRequest.of(select)
    except TileselError:
        pass
    p = Path(select)
    if not p.exists():
        raise UsageError(f"--select must be diagonal, pattern, all or a request file; {select!r} not found")
    return parse_request_file(p.read_text())


# -- gen ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    params = {"seed": args.seed, "tile_size": args.tile_size}
    if args.preset is not None:
        pre = get_preset(args.preset)
        spec = pre.spec(seed=args.seed)
        params.update(
            preset=pre.id,
            source=pre.source,
            density_percent=pre.density_percent,
            density_convention=CONVENTIONS[pre.convention],
        )
    else:
        missing = [f for f in ("n", "bandwidth", "thickness") if getattr(args, f) is None]
        if missing:
            raise UsageError(f"without --preset, --{' --'.join(missing)} must be given")
        spec = ArrowheadSpec(args.n, args.bandwidth, args.thickness, args.density, args.seed)
    params.update(n=spec.n, bandwidth=spec.bandwidth, thickness=spec.thickness, density=spec.density)
    t0 = time.perf_counter()
    gen = generate_arrowhead(spec, args.tile_size)
    t1 = time.perf_counter()
    text = write_matrix_market(gen.matrix)
    out = Path(args.out)
    out.write_text(text)
    t2 = time.perf_counter()
    params.update(band_nonzeros=gen.band_nonzeros, band_slots=gen.band_slots, lower_nonzeros=gen.lower_nonzeros)
    man = _manifest(args, "gen", params, {"matrix": str(out)}, {"generate": t1 - t0, "write": t2 - t1}, None)
    _write_json(args.manifest or f"{out}.manifest.json", man)
    print(f"wrote {out} (n={spec.n}, lower nonzeros={gen.lower_nonzeros})")
    return EXIT_OK


# -- selinv -------------------------------------------------------------------

def _source(args):
    if args.factor:
        f = read_tiles(args.factor)
        if f.phase is not Phase.FACTOR:
            raise UsageError(f"{args.factor} holds a {f.phase.name} payload, not a factor")
        return f
    if not args.matrix:
        raise UsageError("one of --matrix or --factor is required")
    return _load_matrix(args.matrix, args.tile_size)


def cmd_selinv(args) -> int:
    threads = args.threads or default_threads()
    request = _request(args.select)
    t0 = time.perf_counter()
    src = _source(args)
    t_load = time.perf_counter() - t0
    timings = {}
    if src.phase is Phase.MATRIX:
        t0 = time.perf_counter()
        factor = factorize(src, workers=threads)
        timings["factorize"] = time.perf_counter() - t0
        if args.save_factor:
            write_tiles(factor, args.save_factor)
    else:
        factor = src
    stage = {}
    sigma = selected_inverse(factor, request, workers=threads, timings=stage)
    timings.update(phase1=stage["phase1"], phase2=stage["phase2"], load=t_load)
    rows, cols = request_entries(sigma.layout, request, factor.pattern)
    vals = gather(sigma, rows, cols)
    prefix = Path(args.out)
    sig_path = Path(f"{prefix}.sigma.stls")
    ent_path = Path(f"{prefix}.entries.txt")
    write_tiles(sigma.as_tiled(), sig_path)
    with open(ent_path, "w") as fh:
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r} {c} {format(float(v), '.17g')}\n")
    params = {
        "matrix": args.matrix,
        "factor": args.factor,
        "select": args.select,
        "tile_size": factor.layout.b,
        "n": factor.layout.n,
        "threads": threads,
        "requested_tiles": len(sigma.selection.requested),
        "closure_tiles": len(sigma.selection.closure),
        "factor_checksum": sigma.factor_checksum,
        "request_digest": sigma.request_digest,
        "sigma_checksum": sigma.checksum(),
    }
    outputs = {"sigma": str(sig_path), "entries": str(ent_path)}
    if args.save_factor:
        outputs["factor"] = args.save_factor
    _write_json(f"{prefix}.manifest.json", _manifest(args, "selinv", params, outputs, timings, threads))
    print(f"wrote {sig_path} and {len(vals)} entries to {ent_path}")
    return EXIT_OK


# -- dag ----------------------------------------------------------------------

def cmd_dag(args) -> int:
    if args.n_tiles is not None:
        if args.n_tiles < 1:
            raise UsageError(f"--n-tiles must be >= 1, got {args.n_tiles}")
        if args.band is not None and args.band < 1:
            raise UsageError(f"--band must be >= 1, got {args.band}")
        dag = synthetic_dag(args.n_tiles, args.band)
        params = {"n_tiles": args.n_tiles, "band": args.band}
    elif args.matrix:
        mat = _load_matrix(args.matrix, args.tile_size)
        factor = factorize(mat, workers=1)
        request = _request(args.select)
        closure = symbolic_inversion(select_tiles(factor.layout, factor.pattern, request), factor.pattern)
        band = detect_band(factor.pattern) if closure.closure == factor.pattern.tiles else None
        dag = build_dag(closure, factor.pattern, band=band)
        params = {"matrix": args.matrix, "select": args.select, "tile_size": args.tile_size}
    else:
        raise UsageError("either --n-tiles or --matrix is required")
    if args.cores:
        dag = assign_cores(dag, args.cores)
    report = count_kernels(dag)
    dot = export_dot(dag)
    doc = report.to_json()
    if args.out:
        Path(f"{args.out}.dot").write_text(dot)
        Path(f"{args.out}.json").write_text(doc)
        params["cores"] = args.cores
        _write_json(f"{args.out}.manifest.json", _manifest(
            args, "dag", params, {"dot": f"{args.out}.dot", "report": f"{args.out}.json"}, {}, args.cores))
    sys.stdout.write(doc)
    return EXIT_OK


# -- verify -------------------------------------------------------------------

def cmd_verify(args) -> int:
    request = _request(args.select)
    mat = _load_matrix(args.matrix, args.tile_size)
    if mat.layout.n > MAX_ORACLE_N:
        print(f"refusing to verify: n={mat.layout.n} exceeds the dense oracle limit {MAX_ORACLE_N}", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    ref = dense_inverse_ref(mat.to_dense())
    t_oracle = time.perf_counter() - t0
    given = None
    if args.factor:
        given = read_tiles(args.factor)
        if given.phase is not Phase.FACTOR:
            raise UsageError(f"{args.factor} holds a {given.phase.name} payload, not a factor")
    digests, results = {}, []
    ok = True
    for th in args.threads:
        factor = given if given is not None else factorize(mat, workers=th)
        sel = symbolic_inversion(select_tiles(factor.layout, factor.pattern, request), factor.pattern)
        sigma = phase2(phase1(factor, workers=th), sel, workers=th)
        rows, cols = request_entries(factor.layout, request, factor.pattern)
        vals = gather(sigma, rows, cols)
        err = max_rel_error(ref[rows, cols], vals)
        digest = sigma.checksum()
        digests[th] = digest
        passed = bool(err <= args.tol)
        ok &= passed
        results.append({"threads": th, "max_rel_error": err, "digest": digest, "pass": passed})
        print(f"threads={th:<3d} max_rel_error={err:.3e} tol={args.tol:.1e} {'PASS' if passed else 'FAIL'}")
    identical = len(set(digests.values())) == 1
    ok &= identical
    print(f"bitwise identical across threads {args.threads}: {'yes' if identical else 'NO'}")
    print("PASS" if ok else "FAIL")
    if args.out:
        params = {"matrix": args.matrix, "factor": args.factor, "select": args.select,
                  "tile_size": args.tile_size, "tol": args.tol, "threads": args.threads}
        man = _manifest(args, "verify", params, {}, {"oracle": t_oracle}, args.threads)
        man.update(results=results, identical=identical, passed=ok)
        _write_json(args.out, man)
    return EXIT_OK if ok else EXIT_FAIL


# -- bench --------------------------------------------------------------------

def cmd_bench(args) -> int:
    if args.matrix:
        mat = _load_matrix(args.matrix, args.tile_size)
        params = {"matrix": args.matrix}
    else:
        if args.preset is not None:
            spec = get_preset(args.preset).spec(seed=args.seed)
        elif args.n is not None:
            spec = ArrowheadSpec(args.n, args.bandwidth or 0, args.thickness or 0, args.density, args.seed)
        else:
            raise UsageError("one of --matrix, --preset or --n is required")
        mat = generate_arrowhead(spec, args.tile_size).matrix
        params = {"preset": args.preset, "n": spec.n, "bandwidth": spec.bandwidth,
                  "thickness": spec.thickness, "density": spec.density, "seed": spec.seed}
    params.update(tile_size=args.tile_size, threads=args.threads, repeat=args.repeat, select=args.select)
    request = _request(args.select)
    t0 = time.perf_counter()
    factor = factorize(mat, workers=max(args.threads))
    t_fact = time.perf_counter() - t0
    sel = symbolic_inversion(select_tiles(factor.layout, factor.pattern, request), factor.pattern)
    points = []
    for th in args.threads:
        samples = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            phase2(phase1(factor, workers=th), sel, workers=th)
            samples.append(time.perf_counter() - t0)
        points.append({"threads": th, "samples_s": samples, "median_s": statistics.median(samples)})
        print(f"threads={th:<3d} median={points[-1]['median_s']:.3f}s samples={[round(s, 3) for s in samples]}")
    base = next((p["median_s"] for p in points if p["threads"] == 1), points[0]["median_s"])
    for p in points:
        p["speedup"] = base / p["median_s"]
    doc = _manifest(args, "bench", params, {}, {"factorize": t_fact}, args.threads)
    doc.update(cpu_count=os.cpu_count(), n_tiles=factor.layout.N, closure_tiles=len(sel.closure), points=points)
    if args.out:
        _write_json(args.out, doc)
    else:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    argv = doc.get("argv")
    if not argv:
        raise UsageError(f"{args.manifest} carries no argv")
    return main(argv)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tilesel", description="Tiled Cholesky and selected inversion of arrowhead SPD matrices.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a band-plus-arrowhead SPD matrix (Matrix Market)")
    g.add_argument("--preset", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--bandwidth", type=int)
    g.add_argument("--thickness", type=int)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tile-size", type=int, default=120)
    g.add_argument("--out", required=True)
    g.add_argument("--manifest")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("selinv", help="selected inverse of a matrix or factor")
    s.add_argument("--matrix")
    s.add_argument("--factor")
    s.add_argument("--select", default="pattern")
    s.add_argument("--threads", type=int)
    s.add_argument("--tile-size", type=int, default=120)
    s.add_argument("--save-factor")
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_selinv)

    d = sub.add_parser("dag", help="task DAG (DOT) and kernel counts (JSON)")
    d.add_argument("--n-tiles", type=int)
    d.add_argument("--band", type=int)
    d.add_argument("--matrix")
    d.add_argument("--select", default="pattern")
    d.add_argument("--tile-size", type=int, default=120)
    d.add_argument("--cores", type=int)
    d.add_argument("--out", help="output prefix for .dot/.json")
    d.set_defaults(func=cmd_dag)

    v = sub.add_parser("verify", help="check against the dense oracle and across thread counts")
    v.add_argument("--matrix", required=True)
    v.add_argument("--factor")
    v.add_argument("--select", default="pattern")
    v.add_argument("--threads", type=_thread_list, default=[1, 2, 4, 8])
    v.add_argument("--tile-size", type=int, default=120)
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--out", help="JSON report path")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="phase 1 + phase 2 wall clock per thread count")
    b.add_argument("--matrix")
    b.add_argument("--preset", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--bandwidth", type=int)
    b.add_argument("--thickness", type=int)
    b.add_argument("--density", type=float, default=1.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--select", default="pattern")
    b.add_argument("--threads", type=_thread_list, default=[1])
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--tile-size", type=int, default=120)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = argv
    try:
        return args.func(args)
    except (NotSPDError, SingularTileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TileselError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
