"""Strict JSON experiment configuration."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .coefficients import PARAM_KEYS, PRESETS, LinearCoefficients, make_preset
from .core import TimeGrid


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


TOLERANCE_DEFAULTS = {
    "bsde_tol": 1e-12,
    "max_iter": 100,
    "basis_degree": 2,
    "rate_budget": 200,
}

TOP_KEYS = ("preset", "grid", "x", "epsilons", "epsilon_pairs", "deltas", "M", "seed",
            "tolerances", "partitions", "component", "emit_paths", "out")


@dataclass
class ExperimentConfig:
    preset: str
    params: dict
    T: float
    N: int
    x: float = 0.0
    epsilons: list = field(default_factory=list)
    epsilon_pairs: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    M: int = 1000
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    partitions: list = field(default_factory=lambda: [8, 32])
    component: str = "X"
    emit_paths: int = 1
    out: str | None = None

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    def coefficients(self) -> LinearCoefficients:
        return make_preset(self.preset, **self.params)

    def echo(self) -> dict:
        """Dictionary that ``parse_config`` maps back to an identical config."""
        d = asdict(self)
        return {
            "preset": {"name": d["preset"], "params": d["params"]},
            "grid": {"T": d["T"], "N": d["N"]},
            "x": d["x"],
            "epsilons": d["epsilons"],
            "epsilon_pairs": [list(p) for p in d["epsilon_pairs"]],
            "deltas": d["deltas"],
            "M": d["M"],
            "seed": d["seed"],
            "tolerances": d["tolerances"],
            "partitions": d["partitions"],
            "component": d["component"],
            "emit_paths": d["emit_paths"],
            "out": d["out"],
        }


def _real(key, v, lo=-math.inf, hi=math.inf, lo_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v) or v > hi or v < lo or (lo_open and v == lo):
        raise ConfigError(key, f"value {v!r} out of range")
    return v


def _int(key, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}")
    return v


def _list(key, v):
    if not isinstance(v, list):
        raise ConfigError(key, "expected a list")
    return v


def _strict(key, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(key, "expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}" if key else unknown[0], "unknown key")


def parse_config(raw: dict) -> ExperimentConfig:
    _strict("", raw, TOP_KEYS)
    if "preset" not in raw:
        raise ConfigError("preset", "missing")
    preset = raw["preset"]
    _strict("preset", preset, ("name", "params"))
    if "name" not in preset:
        raise ConfigError("preset.name", "missing")
    name = preset["name"]
    if name not in PRESETS:
        raise ConfigError("preset.name", f"unknown preset {name!r}")
    params = preset.get("params", {})
    _strict("preset.params", params, PARAM_KEYS)
    params = {k: _real(f"preset.params.{k}", v) for k, v in params.items()}

    if "grid" not in raw:
        raise ConfigError("grid", "missing")
    _strict("grid", raw["grid"], ("T", "N"))
    for k in ("T", "N"):
        if k not in raw["grid"]:
            raise ConfigError(f"grid.{k}", "missing")
    T = _real("grid.T", raw["grid"]["T"], 0.0, lo_open=True)
    N = _int("grid.N", raw["grid"]["N"], 1)

    eps = [_real(f"epsilons[{i}]", e, 0.0, 1.0) for i, e in enumerate(_list("epsilons", raw.get("epsilons", [])))]
    pairs = []
    for i, p in enumerate(_list("epsilon_pairs", raw.get("epsilon_pairs", []))):
        key = f"epsilon_pairs[{i}]"
        if not isinstance(p, list) or len(p) != 2:
            raise ConfigError(key, "expected [eps1, eps2]")
        e1 = _real(key, p[0], 0.0, 1.0, lo_open=True)
        e2 = _real(key, p[1], 0.0, 1.0, lo_open=True)
        if not e2 < e1:
            raise ConfigError(key, "need eps2 < eps1")
        pairs.append([e1, e2])
    deltas = [_real(f"deltas[{i}]", d, 0.0, lo_open=True) for i, d in enumerate(_list("deltas", raw.get("deltas", [])))]
    tol = dict(TOLERANCE_DEFAULTS)
    given = raw.get("tolerances", {})
    _strict("tolerances", given, TOLERANCE_DEFAULTS)
    for k, v in given.items():
        if isinstance(TOLERANCE_DEFAULTS[k], int):
            tol[k] = _int(f"tolerances.{k}", v, 0 if k == "basis_degree" else 1)
        else:
            tol[k] = _real(f"tolerances.{k}", v, 0.0, lo_open=True)
    parts = [_int(f"partitions[{i}]", p, 1) for i, p in enumerate(_list("partitions", raw.get("partitions", [8, 32])))]
    component = raw.get("component", "X")
    if component not in ("X", "Y"):
        raise ConfigError("component", "expected 'X' or 'Y'")
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a path string")
    cfg = ExperimentConfig(
        preset=name, params=params, T=T, N=N,
        x=_real("x", raw.get("x", 0.0)),
        epsilons=eps, epsilon_pairs=pairs, deltas=deltas,
        M=_int("M", raw.get("M", 1000), 1),
        seed=_int("seed", raw.get("seed", 0), 0),
        tolerances=tol, partitions=parts, component=component,
        emit_paths=_int("emit_paths", raw.get("emit_paths", 1), 0),
        out=out,
    )
    try:
        cfg.coefficients()
    except KeyError as e:
        raise ConfigError("preset.params", str(e.args[0])) from None
    except ValueError as e:
        raise ConfigError("preset.params", str(e)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON ({e})") from None
    return parse_config(raw)
