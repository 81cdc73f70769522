"""TOML experiment configs.

Schema (every table optional except ``[env]``; unknown keys are rejected)::

    [experiment]
    slots = 200          # T >= 1
    reps = 100           # >= 1
    seed = 0             # base seed; repetition r uses seed + r
    workers = 1          # process pool size for repetitions
    methods = ["tvbo", "ctx-tvbo", "ti-bo", "mab", "bco"]

    [env]                # fields of MecConfig
    M = 2
    N = 2
    distances = [[20.0, 13.0], [15.0, 18.0]]   # M rows of N metres
    K_rician = 4.0
    eta = 0.2
    # W, sigma2, xi, beta_d, beta_e, P_peak, f_peak, A_d, phi, PL,
    # f_c_mean, L_mean, I_mean, residual_var, obs_noise_std

    [bo]                 # shared by tvbo / ctx-tvbo / ti-bo (fields of BOSettings)
    zeta = 2.0
    gamma = 0.1
    refit_every = 10
    restarts = 5
    sigma_exponent = 1

    [methods.tvbo]       # per-method overrides of [bo]
    rho = 0.048
    [methods.ctx-tvbo]
    rho = 0.02
    l_s = 0.2
    [methods.mab]
    gamma = 0.1
    levels = 5
    [methods.bco]
    gamma = 0.1
    delta = 0.1
    step = 0.05
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..agents import BOSettings
from ..baselines import BCOParams
from ..mec_env import MecConfig

METHODS = ("tvbo", "ctx-tvbo", "ti-bo", "mab", "bco")
BO_METHODS = ("tvbo", "ctx-tvbo", "ti-bo")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """Everything one method's experiment depends on."""

    env: MecConfig
    method: str
    slots: int = 200
    reps: int = 100
    seed: int = 0
    workers: int = 1
    bo: BOSettings = field(default_factory=BOSettings)
    gamma: float = 0.1
    levels: int = 5
    bco: BCOParams = field(default_factory=BCOParams)

    def __post_init__(self):
        if self.method not in METHODS + ("oracle",):
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.slots < 1:
            raise ConfigError("slots must be >= 1")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.method == "tvbo" and self.bo.contextual:
            raise ConfigError("tvbo is non-contextual; use ctx-tvbo")
        if self.method == "ctx-tvbo" and not self.bo.contextual:
            raise ConfigError("ctx-tvbo needs bo.contextual = true")


@dataclass
class ExperimentConfig:
    env: MecConfig
    slots: int = 200
    reps: int = 100
    seed: int = 0
    workers: int = 1
    methods: tuple = METHODS
    bo: dict = field(default_factory=dict)
    method_params: dict = field(default_factory=dict)
    source: Optional[str] = None

    def spec(self, method: str, **overrides) -> ExperimentSpec:
        """Resolve the :class:`ExperimentSpec` for ``method``.

        ``overrides`` may set ``slots``, ``reps``, ``seed``, ``workers`` or any
        method parameter (e.g. ``rho``).
        """
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
        top = {k: overrides.pop(k) for k in ("slots", "reps", "seed", "workers") if k in overrides}
        params = dict(self.method_params.get(method, {}))
        params.update(overrides)
        kw = dict(
            env=self.env,
            method=method,
            slots=top.get("slots", self.slots),
            reps=top.get("reps", self.reps),
            seed=top.get("seed", self.seed),
            workers=top.get("workers", self.workers),
        )
        if method in BO_METHODS:
            merged = {**self.bo, **params}
            merged["contextual"] = method == "ctx-tvbo"
            if method == "ti-bo":
                merged["rho"] = 0.0
            _check_keys(merged, _field_names(BOSettings), f"methods.{method}")
            kw["bo"] = BOSettings(**merged)
        elif method == "mab":
            _check_keys(params, {"gamma", "levels"}, "methods.mab")
            kw["gamma"] = params.get("gamma", self.bo.get("gamma", 0.1))
            kw["levels"] = params.get("levels", 5)
        else:
            _check_keys(params, {"gamma", "delta", "step", "x0", "x_floor"}, "methods.bco")
            kw["gamma"] = params.pop("gamma", self.bo.get("gamma", 0.1))
            kw["bco"] = BCOParams(**params)
        return ExperimentSpec(**kw)


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def parse_config(data: dict[str, Any], source: Optional[str] = None) -> ExperimentConfig:
    _check_keys(data, {"experiment", "env", "bo", "methods"}, "top level")
    if "env" not in data:
        raise ConfigError("missing [env] table")
    env_fields = _field_names(MecConfig)
    _check_keys(data["env"], env_fields, "env")
    try:
        env = MecConfig(**data["env"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[env]: {exc}") from exc
    exp = data.get("experiment", {})
    _check_keys(exp, {"slots", "reps", "seed", "workers", "methods"}, "experiment")
    bo = data.get("bo", {})
    _check_keys(bo, _field_names(BOSettings) - {"contextual"}, "bo")
    methods = data.get("methods", {})
    _check_keys(methods, set(METHODS), "methods")
    listed = tuple(exp.get("methods", METHODS))
    for m in listed:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} in experiment.methods")
    cfg = ExperimentConfig(
        env=env,
        slots=int(exp.get("slots", 200)),
        reps=int(exp.get("reps", 100)),
        seed=int(exp.get("seed", 0)),
        workers=int(exp.get("workers", 1)),
        methods=listed,
        bo=dict(bo),
        method_params={k: dict(v) for k, v in methods.items()},
        source=source,
    )
    for m in METHODS:  # validate every method table eagerly
        cfg.spec(m)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, str(path))


def load_preset(name: str) -> ExperimentConfig:
    """Load a shipped preset (``a``, ``b`` or ``c``)."""
    fname = f"preset_{name.lower()}.toml"
    ref = resources.files("mecbo.presets").joinpath(fname)
    if not ref.is_file():
        raise ConfigError(f"no preset named {name!r}")
    data = tomllib.loads(ref.read_text())
    return parse_config(data, f"preset:{name}")


def with_env(cfg: ExperimentConfig, **env_overrides) -> ExperimentConfig:
    return replace(cfg, env=replace(cfg.env, **env_overrides))
