import json
from dataclasses import replace

import numpy as np
import pytest

from tilesel.cli import main
from tilesel.matgen import ArrowheadSpec, generate_arrowhead, write_matrix_market
from tilesel.tile_store import TiledMatrix, read_tiles, write_tiles


def write_mm(path, A, b=1):
    path.write_text(write_matrix_market(TiledMatrix.from_dense(np.asarray(A, float), b)))
    return str(path)


def read_entries(path):
    out = {}
    for ln in open(path):
        r, c, v = ln.split()
        out[(int(r), int(c))] = float(v)
    return out


def test_gen_preset_manifests(tmp_path, monkeypatch):
    # preset 1 is large; only the manifest bookkeeping is under test here
    import tilesel.cli as cli

    monkeypatch.setattr(cli, "generate_arrowhead", _small)
    assert main(["gen", "--preset", "1", "--out", str(tmp_path / "p1.mtx")]) == 0
    man = json.loads((tmp_path / "p1.mtx.manifest.json").read_text())
    assert (man["params"]["n"], man["params"]["bandwidth"], man["params"]["thickness"]) == (10010, 100, 10)
    assert main(["gen", "--preset", "19", "--out", str(tmp_path / "p19.mtx")]) == 0
    man = json.loads((tmp_path / "p19.mtx.manifest.json").read_text())
    assert man["params"]["density_percent"] == 0.010
    assert man["params"]["density_convention"] == "excluding arrowhead"


def _small(spec, b):
    g = generate_arrowhead(ArrowheadSpec(50, 5, 2, 0.5, spec.seed), b)
    return replace(g, spec=spec)


def test_gen_dense8(tmp_path):
    out = tmp_path / "d.mtx"
    assert main(["gen", "--n", "8", "--bandwidth", "7", "--thickness", "0", "--density", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 + 36
    assert main(["gen", "--n", "8", "--bandwidth", "9", "--thickness", "0", "--out", str(out)]) == 2
    assert main(["gen", "--preset", "77", "--out", str(out)]) == 2


def test_selinv_identity_and_hand_inverse(tmp_path):
    mm = write_mm(tmp_path / "i.mtx", np.eye(10))
    assert main(["selinv", "--matrix", mm, "--select", "diagonal", "--tile-size", "4", "--out", str(tmp_path / "i")]) == 0
    ents = read_entries(tmp_path / "i.entries.txt")
    assert len(ents) == 10 and set(ents.values()) == {1.0}
    man = json.loads((tmp_path / "i.manifest.json").read_text())
    assert set(man["timings_s"]) >= {"factorize", "phase1", "phase2"}
    assert read_tiles(tmp_path / "i.sigma.stls").layout.n == 10

    mm = write_mm(tmp_path / "h.mtx", [[4.0, 2.0], [2.0, 5.0]])
    assert main(["selinv", "--matrix", mm, "--select", "all", "--tile-size", "2", "--out", str(tmp_path / "h")]) == 0
    ents = read_entries(tmp_path / "h.entries.txt")
    np.testing.assert_allclose([ents[(0, 0)], ents[(1, 0)], ents[(1, 1)]], [5 / 16, -1 / 8, 1 / 4], rtol=1e-15)


def test_selinv_request_file_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TILESEL_THREADS", "3")
    mm = tmp_path / "m.mtx"
    assert main(["gen", "--n", "60", "--bandwidth", "6", "--thickness", "3", "--density", "0.7", "--out", str(mm)]) == 0
    req = tmp_path / "req.txt"
    req.write_text("# two entries\n5 3\n3 5\n")
    assert main(["selinv", "--matrix", str(mm), "--select", str(req), "--tile-size", "8", "--out", str(tmp_path / "r")]) == 0
    ents = read_entries(tmp_path / "r.entries.txt")
    assert ents[(5, 3)] == ents[(3, 5)]
    assert json.loads((tmp_path / "r.manifest.json").read_text())["workers"] == 3


def test_selinv_not_spd_exit_code(tmp_path):
    mm = write_mm(tmp_path / "bad.mtx", [[1.0, 2.0], [2.0, 1.0]])
    assert main(["selinv", "--matrix", mm, "--out", str(tmp_path / "x")]) == 3


def test_replay_reproduces_bits(tmp_path):
    mm = tmp_path / "m.mtx"
    main(["gen", "--n", "80", "--bandwidth", "8", "--thickness", "2", "--density", "0.5", "--seed", "3", "--out", str(mm)])
    prefix = str(tmp_path / "s")
    assert main(["selinv", "--matrix", str(mm), "--tile-size", "16", "--threads", "2", "--out", prefix]) == 0
    first = (tmp_path / "s.sigma.stls").read_bytes()
    text = mm.read_text()
    assert main(["replay", prefix + ".manifest.json"]) == 0
    assert (tmp_path / "s.sigma.stls").read_bytes() == first
    assert main(["replay", str(mm) + ".manifest.json"]) == 0
    assert mm.read_text() == text


def test_dag_commands(tmp_path, capsys):
    assert main(["dag", "--n-tiles", "6", "--band", "6"]) == 0
    assert json.loads(capsys.readouterr().out)["gemm_actual"] == 70
    assert main(["dag", "--n-tiles", "6", "--band", "2", "--cores", "2", "--out", str(tmp_path / "g")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["gemm_actual"] == 26 and doc["match"] is True
    assert "core=1" in (tmp_path / "g.dot").read_text()
    assert main(["dag", "--n-tiles", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["critical_path"] == 2
    assert main(["dag", "--n-tiles", "0"]) == 2


def test_verify_pass_and_negative_control(tmp_path, capsys):
    mm = write_mm(tmp_path / "i.mtx", np.eye(64), 8)
    assert main(["verify", "--matrix", mm, "--tile-size", "8"]) == 0
    out = capsys.readouterr().out
    assert "max_rel_error=0.000e+00" in out and out.strip().endswith("PASS")

    mm = tmp_path / "m.mtx"
    main(["gen", "--n", "257", "--bandwidth", "30", "--thickness", "5", "--density", "0.5", "--out", str(mm)])
    fac = tmp_path / "f.stls"
    assert main(["selinv", "--matrix", str(mm), "--tile-size", "32", "--save-factor", str(fac),
                 "--out", str(tmp_path / "s")]) == 0
    report = tmp_path / "v.json"
    assert main(["verify", "--matrix", str(mm), "--tile-size", "32", "--threads", "1,2,4", "--out", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["identical"] and len({r["digest"] for r in doc["results"]}) == 1

    L = read_tiles(fac)
    L.tiles[(3, 2)] = L.tiles[(3, 2)] * 1.5
    write_tiles(L, fac)
    capsys.readouterr()
    assert main(["verify", "--matrix", str(mm), "--tile-size", "32", "--factor", str(fac), "--threads", "1"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "max_rel_error=" in out


def test_verify_refuses_large(tmp_path):
    mm = tmp_path / "big.mtx"
    mm.write_text("%%MatrixMarket matrix coordinate real symmetric\n4001 4001 1\n1 1 1\n")
    assert main(["verify", "--matrix", str(mm)]) == 2


def test_bench_format(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--n", "120", "--bandwidth", "10", "--thickness", "2", "--density", "0.5",
                 "--tile-size", "16", "--threads", "1,2", "--repeat", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [p["threads"] for p in doc["points"]] == [1, 2]
    assert doc["points"][0]["speedup"] == 1.0
    assert all(len(p["samples_s"]) == 3 for p in doc["points"])
    assert "factorize" in doc["timings_s"]


def test_usage_errors():
    assert main(["selinv", "--out", "/tmp/x"]) == 2
    assert main(["nonsense"]) == 2
