import json

import numpy as np
import pytest

from ldalab import io
from ldalab.errors import InputError
from ldalab.lattice import GridDensity, build_lattice


def test_grid_round_trip(tmp_path):
    m = build_lattice(3, (3, 4, 2), h=0.5, boundary="periodic", origin=(1.0, -2.0, 0.25))
    rho = GridDensity(m, np.random.default_rng(0).uniform(0, 1, m.n_sites))
    p = io.save_grid(tmp_path / "rho.grid", rho)
    back = io.load_grid(p)
    assert back.model.same_grid(m)
    assert np.array_equal(back.values, rho.values)


def test_grid_format_layout(tmp_path):
    m = build_lattice(1, 3)
    p = io.save_grid(tmp_path / "a.grid", GridDensity(m, [0.1, 0.2, 0.3]))
    raw = p.read_bytes()
    assert raw[:8] == io.MAGIC
    n = int.from_bytes(raw[8:12], "little")
    assert json.loads(raw[12:12 + n])["shape"] == [3]
    np.testing.assert_array_equal(np.frombuffer(raw[12 + n:], "<f8"), [0.1, 0.2, 0.3])


def test_bad_grid_file(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_bytes(b"NOTAGRID" + b"\0" * 8)
    with pytest.raises(InputError):
        io.load_grid(p)


def test_config_overlay(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[common]\nseed = 3\nquad-res = 8\n[tile]\nseed = 5\n")
    cfg = io.read_config(p, "tile")
    assert cfg == {"seed": "5", "quad_res": "8"}
    assert io.read_config(p, "solve") == {"seed": "3", "quad_res": "8"}
    with pytest.raises(InputError):
        io.read_config(tmp_path / "missing.ini", "tile")


def test_config_hash_stable():
    assert io.config_hash({"a": 1, "b": 2}) == io.config_hash({"b": 2, "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})


def test_json_and_csv_writers(tmp_path):
    obj = {"x": np.float64(1.5), "v": np.arange(3), "nan": float("nan"), "ok": np.bool_(True)}
    d = json.loads(io.to_json(obj))
    assert d == {"x": 1.5, "v": [0, 1, 2], "nan": None, "ok": True}
    p = io.write_csv(tmp_path / "t.csv", [[1, 2.5], [3, 4.5]], ["a", "b"])
    assert io.read_csv(p) == [{"a": "1", "b": "2.5"}, {"a": "3", "b": "4.5"}]


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(io.OUTPUT_ENV, str(tmp_path / "root"))
    assert io.output_dir() == tmp_path / "root"
    assert io.output_dir(tmp_path / "x") == tmp_path / "x"


def test_manifest(tmp_path):
    a = io.write_json(tmp_path / "r.json", {"k": 1})
    man = json.loads(io.write_manifest(tmp_path, {"seed": 1}, [a], 0.1, [1]).read_text())
    assert man["config_hash"] == io.config_hash({"seed": 1})
    assert man["artifacts"] == [{"path": "r.json", "config_hash": man["config_hash"]}]
    assert set(man["versions"]) >= {"numpy", "scipy", "matplotlib", "python"}
