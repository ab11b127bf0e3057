"""Scenario files: INI sections with matrices written as bracketed lists.

Example::

    [scenario]
    name = l63_etkf
    mode = boundedness          ; or memory-loss
    seed = 20240601
    replicates = 2
    horizon = 500
    expect_bounded = true

    [model]
    id = lorenz63               ; lorenz63 | lorenz96 | linear | navier_stokes
    h = 0.05
    noise = 1.0

    [observation]
    H = identity                ; identity | first_q:k | every_other | every:k | diag:[..] | [[..]]

    [filter]
    kind = etkf
    K = 10
    inflation = uniform         ; none | additive | uniform
    lambda = 0.1
"""
import ast
import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, EnkfLabError
from ..filters import KINDS, InflationScheme
from ..models import linear_contraction, lorenz63, lorenz96
from ..navier_stokes import truncated_navier_stokes
from ..observations import ObservationOperator, whiten_and_reduce

MODES = ("boundedness", "memory-loss")
MODEL_IDS = ("lorenz63", "lorenz96", "linear", "navier_stokes")


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    seed: int
    model_id: str
    model_params: dict
    H_spec: str
    kind: str
    K: int
    horizon: int
    replicates: int = 1
    gamma_spec: str = None
    inflation: InflationScheme = field(default_factory=InflationScheme.none)
    expect_bounded: bool = True
    output_dir: str = "results"
    init: dict = field(default_factory=dict)
    criterion: dict = field(default_factory=dict)
    memory: dict = field(default_factory=dict)
    source: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model_id not in MODEL_IDS:
            raise ConfigError(f"unknown model id {self.model_id!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown filter kind {self.kind!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.K < 2:
            raise ConfigError("ensemble size K must be >= 2")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            self.inflation.check_for(self.kind)
        except EnkfLabError as exc:
            raise ConfigError(str(exc)) from None

    def build_model(self):
        try:
            return build_model(self.model_id, self.model_params)
        except EnkfLabError as exc:
            raise ConfigError(f"model: {exc}") from None

    def build_observation(self, d):
        try:
            H = parse_observation(self.H_spec, d)
            if self.gamma_spec:
                change = whiten_and_reduce(H, parse_matrix(self.gamma_spec))
                H = change.obs_map @ H
            return ObservationOperator(H)
        except EnkfLabError as exc:
            raise ConfigError(f"observation: {exc}") from None


def parse_matrix(text):
    try:
        value = ast.literal_eval(text.strip())
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"cannot parse matrix {text!r}: {exc}") from None
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"matrix {text!r} has non-finite entries")
    return arr


def parse_observation(spec, d):
    """Observation matrix from a shorthand or a literal."""
    s = spec.strip()
    if s == "identity":
        return np.eye(d)
    if s == "every_other":
        return np.eye(d)[::2]
    if s.startswith("first_q:"):
        q = _int(s.split(":", 1)[1], "first_q")
        if not 1 <= q <= d:
            raise ConfigError(f"first_q needs 1 <= q <= {d}, got {q}")
        return np.eye(d)[:q]
    if s.startswith("every:"):
        k = _int(s.split(":", 1)[1], "every")
        if k < 1:
            raise ConfigError("every:k needs k >= 1")
        return np.eye(d)[::k]
    if s.startswith("diag:"):
        v = parse_matrix(s.split(":", 1)[1]).reshape(-1)
        if v.size != d:
            raise ConfigError(f"diag needs {d} entries, got {v.size}")
        return np.diag(v)
    H = np.atleast_2d(parse_matrix(s))
    if H.ndim != 2 or H.shape[1] != d:
        raise ConfigError(f"observation matrix needs {d} columns, got shape {H.shape}")
    return H


def _int(text, what):
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {text!r}") from None


def _float(text, what):
    try:
        return float(str(text).strip())
    except ValueError:
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None


def _bool(text, what):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {text!r}")


_MODEL_KEYS = {
    "lorenz63": {"sigma": _float, "r": _float, "b": _float, "h": _float, "n_sub": _int, "noise": _float},
    "lorenz96": {"N": _int, "F": _float, "h": _float, "n_sub": _int, "noise": _float},
    "linear": {"A": None, "R": None, "dim": _int, "beta": _float, "h": _float},
    "navier_stokes": {"N": _int, "nu": _float, "forcing": _float, "h": _float, "n_sub": _int},
}


def _model_params(model_id, section):
    keys = _MODEL_KEYS[model_id]
    lower = {k.lower(): k for k in keys}
    params = {}
    for raw, value in section.items():
        if raw == "id":
            continue
        key = lower.get(raw.lower())
        if key is None:
            raise ConfigError(f"unknown key {raw!r} for model {model_id}")
        conv = keys[key]
        params[key] = value.strip() if conv is None else conv(value, f"model.{key}")
    return params


def build_model(model_id, params):
    p = dict(params)
    if model_id == "lorenz63":
        return lorenz63(**p)
    if model_id == "lorenz96":
        return lorenz96(**p)
    if model_id == "navier_stokes":
        return truncated_navier_stokes(**p)
    if model_id == "linear":
        dim = p.pop("dim", None)
        A = parse_matrix(p.pop("A")) if "A" in p else None
        if A is None:
            raise ConfigError("linear model needs A")
        if A.ndim == 0:
            if dim is None:
                raise ConfigError("scalar A needs dim")
            A = float(A) * np.eye(dim)
        R = p.pop("R", None)
        if R is not None:
            R = parse_matrix(R)
            if R.ndim == 0:
                R = float(R) * np.eye(A.shape[0])
        return linear_contraction(A, R, **p)
    raise ConfigError(f"unknown model id {model_id!r}")


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def load_config(path, seed=None, output_dir=None):
    """Parse a scenario file; ``seed`` and ``output_dir`` override the file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for sec in ("scenario", "model", "observation", "filter"):
        if not cp.has_section(sec):
            raise ConfigError(f"{path}: missing section [{sec}]")
    sc, md, ob, fl = cp["scenario"], cp["model"], cp["observation"], cp["filter"]
    if "seed" not in sc and seed is None:
        raise ConfigError(f"{path}: seed must be given explicitly")
    model_id = md.get("id", "").strip()
    if model_id not in MODEL_IDS:
        raise ConfigError(f"{path}: unknown model id {model_id!r}")
    kind = fl.get("kind", "").strip().lower()
    infl_kind = fl.get("inflation", "none").strip().lower()
    try:
        inflation = InflationScheme(infl_kind, _float(fl.get("lambda", "0"), "filter.lambda"))
    except EnkfLabError as exc:
        raise ConfigError(str(exc)) from None
    init = {k: _float(v, f"init.{k}") for k, v in _section(cp, "init").items()}
    crit = dict(_section(cp, "criterion"))
    criterion = {
        "enabled": _bool(crit.get("enabled", "false"), "criterion.enabled"),
        "draws": _int(crit.get("draws", "200"), "criterion.draws"),
        "n_cloud": _int(crit.get("n_cloud", "150"), "criterion.n_cloud"),
        "n_shell": _int(crit.get("n_shell", "100"), "criterion.n_shell"),
        "spinup": _int(crit.get("spinup", "100"), "criterion.spinup"),
        "shell_factor": _float(crit.get("shell_factor", "2.0"), "criterion.shell_factor"),
    }
    if "M" in crit:
        criterion["M"] = _float(crit["M"], "criterion.M")
    if "shift" in crit:
        criterion["shift"] = parse_matrix(crit["shift"]).reshape(-1).tolist()
    memory = {k: _float(v, f"memory.{k}") for k, v in _section(cp, "memory").items()}
    try:
        return ExperimentConfig(
            name=sc.get("name", path.stem).strip(),
            mode=sc.get("mode", "boundedness").strip(),
            seed=int(seed) if seed is not None else _int(sc["seed"], "scenario.seed"),
            model_id=model_id,
            model_params=_model_params(model_id, md),
            H_spec=ob.get("H", "identity"),
            gamma_spec=ob.get("gamma"),
            kind=kind,
            K=_int(fl.get("K", "0"), "filter.K"),
            horizon=_int(sc.get("horizon", "0"), "scenario.horizon"),
            replicates=_int(sc.get("replicates", "1"), "scenario.replicates"),
            inflation=inflation,
            expect_bounded=_bool(sc.get("expect_bounded", "true"), "scenario.expect_bounded"),
            output_dir=output_dir or cp.get("output", "dir", fallback="results"),
            init=init, criterion=criterion, memory=memory, source=str(path),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
