import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galerkin_ofb import io
from galerkin_ofb.config import OUT_DIR_ENV, RunConfig, dump_config, load_config
from galerkin_ofb.errors import ConfigError
from galerkin_ofb.simulation import Trajectory


def _traj(truncated=False):
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 7)
    return Trajectory(t, rng.random(7), rng.random(7), rng.random(7), rng.standard_normal((7, 3)),
                      rng.random(7), metadata={"failure": "step size collapsed"}, truncated=truncated)


def test_trajectory_csv_round_trip(tmp_path):
    tr = _traj()
    path = tmp_path / "t.csv"
    io.write_trajectory_csv(tr, path)
    data, cols, trunc = io.read_trajectory_csv(path)
    assert cols == ["t", "norm_p", "norm_eps", "norm_z", "u_1", "u_2", "u_3"]
    assert not trunc
    assert np.array_equal(data[:, 1], tr.norm_p)
    assert np.array_equal(data[:, 4:], tr.u)


def test_truncated_footer(tmp_path):
    path = tmp_path / "t.csv"
    io.write_trajectory_csv(_traj(truncated=True), path)
    assert path.read_text().splitlines()[-1].startswith("# TRUNCATED: step size collapsed")
    assert io.read_trajectory_csv(path)[2]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_table_floats_bit_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    io.write_table(path, ["x"], [{"x": float(x)} for x in xs])
    _, rows, _ = io.read_table(path)
    assert [float(r["x"]) for r in rows] == [float(x) for x in xs]


def test_state_dump_round_trip(tmp_path):
    t = np.linspace(0, 1, 5)
    Y = np.random.default_rng(1).standard_normal((5, 11))
    io.write_state_dump(tmp_path / "s.bin", t, Y, 9)
    t2, Y2, M = io.read_state_dump(tmp_path / "s.bin")
    assert M == 9 and np.array_equal(t2, t) and np.array_equal(Y2, Y)
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:8] == b"GOFBDUMP"


def test_state_dump_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOTADUMP" + bytes(40))
    with pytest.raises(ValueError):
        io.read_state_dump(tmp_path / "x.bin")


def test_config_round_trip(tmp_path):
    cfg = RunConfig(width=2.0, vertical_lines=(0.5, 1.5), horizontal_lines=(0.25,), N=3, m=40.0,
                    nonlinearity="a*tanh(z)", nl_params={"a": 7.0}, L=7.0, tail_count=90)
    dump_config(cfg, tmp_path / "c.ini")
    back = load_config(tmp_path / "c.ini")
    assert back == cfg


def test_config_partial_file_uses_defaults(tmp_path):
    (tmp_path / "c.ini").write_text("[design]\nN = 4\n")
    cfg = load_config(tmp_path / "c.ini")
    assert cfg.N == 4 and cfg.m == 120.0 and cfg.nl_params == {"a": 50.0, "b": 50.0}


@pytest.mark.parametrize("text", [
    "[design]\nN = 0\n",
    "[design]\nm = -1\n",
    "[integrator]\nrtol = abc\n",
    "[integrator]\nmethod = RK45\n",
    "[weather]\nrain = 1\n",
    "[sensors]\nvertical_lines = x\n",
])
def test_config_errors(tmp_path, text):
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.ini")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_out_dir_env_override(tmp_path, monkeypatch):
    (tmp_path / "c.ini").write_text("[output]\nout_dir = a\n")
    monkeypatch.setenv(OUT_DIR_ENV, "elsewhere")
    assert load_config(tmp_path / "c.ini").out_dir == "elsewhere"
