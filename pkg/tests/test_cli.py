import csv
import json
import math

import pytest
from hypothesis import given, strategies as st

from delayfbsde.cli import run
from delayfbsde.config import ConfigError, parse_config

BASE = {"preset": {"name": "zero"}, "grid": {"T": 1.0, "N": 16}, "M": 200, "seed": 5}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_converge_zero_preset(tmp_path):
    cfg = dict(BASE, epsilon_pairs=[[0.5, 0.25]])
    assert run(["converge", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    r = rows(tmp_path / "o" / "converge.csv")
    assert [x["statistic"] for x in r] == ["X", "Y", "Z"]
    assert all(float(x["C"]) == 0.0 for x in r)
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["seed"] == 5 and s["contraction"]["satisfied"]
    assert "wall_time_s" in s and s["backend"] in ("numba", "numpy")


def test_simulate_eps_zero_matches_skeleton(tmp_path):
    cfg = {"preset": {"name": "linear_delay", "params": {"a0": 0.1, "c0": 0.5, "k0": 0.05, "G": 0.1, "g0": 1.0}},
           "grid": {"T": 1.0, "N": 16}, "epsilons": [0.0, 0.2], "M": 100, "emit_paths": 2}
    assert run(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    sim = rows(tmp_path / "o" / "simulate.csv")
    skel = rows(tmp_path / "o" / "skeleton.csv")
    zero = [r["X"] for r in sim if r["epsilon"] == "0.0" and r["path"] == "0"]
    assert zero == [r["X"] for r in skel]
    assert len(sim) == 2 * 2 * 17


def test_rerun_is_byte_identical(tmp_path):
    cfg = dict(BASE, preset={"name": "pure_noise"}, epsilon_pairs=[[0.5, 0.25]], epsilons=[0.5])
    path = write(tmp_path, cfg)
    for d, threads in (("a", "1"), ("b", "3")):
        assert run(["converge", "--config", path, "--out", str(tmp_path / d), "--threads", threads]) == 0
    for f in ("converge.csv", "converge_moments.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_flag_overrides(tmp_path):
    cfg = dict(BASE, preset={"name": "pure_noise"}, epsilons=[0.5], deltas=[0.5])
    path = write(tmp_path, cfg)
    assert run(["deviation", "--config", path, "--out", str(tmp_path / "a"), "--seed", "9"]) == 0
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["seed"] == 9 and s["config"]["seed"] == 9


def test_summary_echo_is_lossless(tmp_path):
    cfg = dict(BASE, preset={"name": "pure_noise"}, epsilons=[0.5, 0.25], deltas=[0.5])
    assert run(["deviation", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    again = parse_config(s["config"])
    assert again == parse_config(dict(cfg, out=str(tmp_path / "o")))
    assert run(["deviation", "--config", write(tmp_path, s["config"], "echo.json"),
                "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "o" / "deviation.csv").read_bytes() == (tmp_path / "p" / "deviation.csv").read_bytes()


def test_variation_and_ldp_outputs(tmp_path):
    cfg = dict(BASE, preset={"name": "linear", "params": {"g0": 2.0}}, epsilons=[0.3], partitions=[4, 16])
    assert run(["variation", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "v")]) == 0
    r = rows(tmp_path / "v" / "variation.csv")
    assert [float(x["V_hat"]) for x in r] == pytest.approx([2.0, 2.0])
    cfg = dict(BASE, preset={"name": "pure_noise"}, epsilons=[0.5, 0.25], deltas=[1.0], M=2000)
    assert run(["ldp", "--config", write(tmp_path, cfg, "l.json"), "--out", str(tmp_path / "l")]) == 0
    s = json.loads((tmp_path / "l" / "summary.json").read_text())
    assert s["results"]["ldp"][0]["I2_star"] == pytest.approx(0.5, rel=0.05)


@pytest.mark.parametrize("patch,key", [
    ({"preset": {"name": "cubic"}}, "preset.name"),
    ({"preset": {"name": "linear", "params": {"a9": 1.0}}}, "preset.params.a9"),
    ({"preset": {"name": "linear", "params": {"a0": 1.0, "K": 0.01}}}, "preset.params"),
    ({"colour": 1}, "colour"),
    ({"grid": {"T": 1.0}}, "grid.N"),
    ({"grid": {"T": -1.0, "N": 4}}, "grid.T"),
    ({"epsilons": [1.5]}, "epsilons[0]"),
    ({"epsilon_pairs": [[0.2, 0.2]]}, "epsilon_pairs[0]"),
    ({"tolerances": {"bsde_tol": 0}}, "tolerances.bsde_tol"),
    ({"tolerances": {"rtol": 1}}, "tolerances.rtol"),
    ({"M": 0}, "M"),
])
def test_validation_errors_name_key(patch, key):
    with pytest.raises(ConfigError) as e:
        parse_config(dict(BASE, **patch))
    assert e.value.key == key


def test_missing_preset_exit_code(tmp_path, capsys):
    cfg = {"grid": {"T": 1.0, "N": 4}}
    assert run(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "preset" in capsys.readouterr().err
    assert run(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert run(["variation", "--config", write(tmp_path, dict(BASE, epsilons=[0.1], partitions=[5])),
                "--out", str(tmp_path / "o")]) == 2
    assert run(["deviation", "--config", write(tmp_path, BASE), "--out", str(tmp_path / "o")]) == 2


def test_unconverged_exit_code(tmp_path):
    cfg = dict(BASE, preset={"name": "linear_delay", "params": {"k1": 5.0, "g0": 1.0, "w0": 0.0}},
               epsilons=[0.1], tolerances={"max_iter": 2})
    assert run(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_nan_results_exit_code(tmp_path):
    # no paths crossing at any epsilon: slope cannot be fitted
    cfg = dict(BASE, preset={"name": "pure_noise"}, epsilons=[0.01, 0.005], deltas=[3.0], M=200)
    assert run(["ldp", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


@given(st.floats(0.1, 5), st.integers(1, 64), st.lists(st.floats(0, 1), max_size=3), st.integers(0, 2 ** 64 - 1))
def test_parse_echo_roundtrip(T, N, eps, seed):
    cfg = parse_config(dict(BASE, grid={"T": T, "N": N}, epsilons=eps, seed=seed))
    again = parse_config(json.loads(json.dumps(cfg.echo())))
    assert again == cfg
    assert not any(isinstance(v, float) and math.isnan(v) for v in cfg.echo().values())
