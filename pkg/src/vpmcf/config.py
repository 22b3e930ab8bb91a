"""Run configuration: TOML files with ``--set key=value`` overrides."""

from __future__ import annotations

import copy
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .curve import InitialShapeSpec, InvalidSpecError, SHAPE_PARAMS, Topology, build_profile
from .flow import StepPolicy
from .monitor import DEFAULT_ALPHAS, Tolerances

OUTPUT_ENV = "VPMCF_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: InitialShapeSpec
    policy: StepPolicy
    horizon: float
    observe_every: int = 500
    alpha_list: tuple = DEFAULT_ALPHAS
    c_alpha: dict | None = None
    tolerances: Tolerances = Tolerances()
    tol_cmc: float | None = None
    tol_shape: float = 1e-3
    stop_on_convergence: bool = True
    output_dir: Path = Path("output")
    emit_svg: bool = True
    svg_every: int = 0  # steps between snapshots; 0 = first and last only
    seed: int = 0
    source: dict = field(default_factory=dict, compare=False)


_SQRT = re.compile(r"^\s*sqrt\(\s*([0-9.eE+-]+)\s*\)\s*$")


def parse_alpha(value) -> float:
    """A number, or the string ``sqrt(x)``, so that sqrt(2) can be written exactly."""
    if isinstance(value, str):
        m = _SQRT.match(value)
        if not m:
            raise ConfigError(f"alpha must be a number or 'sqrt(x)', got {value!r}")
        return math.sqrt(float(m.group(1)))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"alpha must be a number, got {value!r}")
    return float(value)


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"bad key in --set {text!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {text!r}: {part!r} is not a table")
        node[path[-1]] = value
    return data


_SECTIONS = {
    "scenario": {"kind", "params", "topology", "n", "N"},
    "policy": {"mode", "cfl_safety", "dt_max", "redistribution_period", "volume_projection", "pinch_epsilon"},
    "run": {"horizon", "observe_every", "seed", "stop_on_convergence"},
    "monitor": {"alpha_list", "c_alpha", "slack", "kp_ratio", "h_rel", "H_rel", "cap_rel", "a2_window", "t_burn"},
    "convergence": {"tol_cmc", "tol_shape"},
    "output": {"dir", "emit_svg", "svg_every"},
}


def _section(data, name):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - _SECTIONS[name]
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    return sec


def _number(sec, key, default, kind=float, positive=False, name=""):
    value = sec.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}{key} must be a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{name}{key} must be an integer, got {value!r}")
    value = kind(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name}{key} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{name}{key} must be positive, got {value}")
    return value


def _bool(sec, key, default, name=""):
    value = sec.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{name}{key} must be true or false, got {value!r}")
    return value


def from_dict(data: dict, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    sc = _section(data, "scenario")
    if "kind" not in sc:
        raise ConfigError("[scenario] needs a kind")
    if sc["kind"] not in SHAPE_PARAMS:
        raise ConfigError(f"unknown scenario kind {sc['kind']!r}; expected one of {sorted(SHAPE_PARAMS)}")
    params = sc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("[scenario.params] must be a table")
    try:
        topo = Topology.parse(sc["topology"]) if "topology" in sc else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = InitialShapeSpec(
        sc["kind"], dict(params), topo,
        _number(sc, "n", 2, int, True, "scenario."), _number(sc, "N", 400, int, True, "scenario."),
    )
    try:
        build_profile(spec)  # surfaces parameter errors now rather than mid-run
    except InvalidSpecError as exc:
        raise ConfigError(f"scenario: {exc}") from None

    po = _section(data, "policy")
    try:
        policy = StepPolicy(
            cfl_safety=_number(po, "cfl_safety", StepPolicy.cfl_safety, name="policy."),
            dt_max=_number(po, "dt_max", StepPolicy.dt_max, name="policy."),
            redistribution_period=_number(po, "redistribution_period", StepPolicy.redistribution_period, int, name="policy."),
            volume_projection=_bool(po, "volume_projection", True, "policy."),
            mode=po.get("mode", StepPolicy.mode),
            pinch_epsilon=_number(po, "pinch_epsilon", None, name="policy."),
        )
    except ValueError as exc:
        raise ConfigError(f"policy: {exc}") from None

    ru = _section(data, "run")
    if "horizon" not in ru:
        raise ConfigError("[run] needs a horizon")
    horizon = _number(ru, "horizon", None, name="run.")
    if not horizon > 0:
        raise ConfigError(f"run.horizon must be positive, got {horizon}")
    observe_every = _number(ru, "observe_every", 500, int, name="run.")
    if observe_every < 1:
        raise ConfigError("run.observe_every must be >= 1")

    mo = _section(data, "monitor")
    alphas = tuple(parse_alpha(a) for a in mo.get("alpha_list", ["sqrt(2)", 2.0]))
    if not alphas or any(not a > 1 for a in alphas):
        raise ConfigError("monitor.alpha_list must hold values > 1")
    c_alpha = None
    if "c_alpha" in mo:
        if not isinstance(mo["c_alpha"], dict):
            raise ConfigError("monitor.c_alpha must be a table alpha -> threshold")
        c_alpha = {parse_alpha(_alpha_key(k)): float(v) for k, v in mo["c_alpha"].items()}
    tol_fields = {k: mo[k] for k in ("slack", "kp_ratio", "h_rel", "H_rel", "cap_rel", "a2_window", "t_burn") if k in mo}
    try:
        tolerances = Tolerances(**tol_fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    co = _section(data, "convergence")
    tol_cmc = _number(co, "tol_cmc", None, positive=True, name="convergence.")
    tol_shape = _number(co, "tol_shape", 1e-3, positive=True, name="convergence.")

    ou = _section(data, "output")
    out_dir = env.get(OUTPUT_ENV) or ou.get("dir", "output")
    svg_every = _number(ou, "svg_every", 0, int, name="output.")
    if svg_every < 0:
        raise ConfigError("output.svg_every must be >= 0")

    return RunConfig(
        scenario=spec, policy=policy, horizon=horizon, observe_every=observe_every, alpha_list=alphas,
        c_alpha=c_alpha, tolerances=tolerances, tol_cmc=tol_cmc, tol_shape=tol_shape,
        stop_on_convergence=_bool(ru, "stop_on_convergence", True, "run."),
        output_dir=Path(out_dir), emit_svg=_bool(ou, "emit_svg", True, "output."), svg_every=svg_every,
        seed=_number(ru, "seed", 0, int, name="run."), source=data,
    )


def _alpha_key(key: str):
    try:
        return float(key)
    except ValueError:
        return key


def load(path, overrides=(), env: dict | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(apply_overrides(data, overrides), env)
