"""Experiment configuration: strict JSON parsing and simulation assembly.

``parse_config`` turns a raw dict (usually loaded from JSON) into an
ExperimentConfig, rejecting unknown fields anywhere in the tree and
enforcing cross-field rules (e.g. double-average needs the sgd-nesterov
base, beta = 1 is never valid). ``resolved_dict`` dumps every field
explicitly, defaults included, so a run can always be reproduced from its
resolved.json alone. ``build_simulation`` turns the config into a ready
Simulation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .base_optimizers import BaseOptimizerConfig
from .comm_protocols import PROTOCOL_NAMES, DelayModel
from .errors import ConfigError
from .numerics import (
    STREAM_MISC,
    NoiseModel,
    build_logistic,
    build_mlp,
    build_quadratic,
    rng_stream,
)
from .simkernel import Simulation
from .slowmo import GammaSchedule, SlowMoConfig
from .topology import TOPOLOGY_KINDS


def _take(raw: dict, allowed: dict, path: str) -> dict:
    """Pop known keys (applying defaults); any leftover key is an error."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    out = {}
    raw = dict(raw)
    for key, default in allowed.items():
        out[key] = raw.pop(key, default)
    if raw:
        where = f" in {path}" if path else ""
        raise ConfigError(f"unknown config field(s){where}: {sorted(raw)}")
    return out


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    m: int = 1
    dimension: int = 10
    heterogeneity: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    # quadratic
    l_min: float = 1.0
    l_max: float = 1.0
    samples_per_worker: int = 0
    sample_spread: float = 1.0
    # logistic / mlp
    input_dim: int = 4
    hidden: int = 8

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic", "mlp"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if self.m < 1:
            raise ConfigError("problem.m must be >= 1")
        if self.heterogeneity < 0:
            raise ConfigError("heterogeneity must be >= 0")
        if self.kind == "quadratic":
            if self.l_min <= 0 or self.l_max < self.l_min:
                raise ConfigError("need 0 < l_min <= l_max")
            if self.noise.kind == "minibatch" and self.samples_per_worker < 1:
                raise ConfigError(
                    "minibatch noise on a quadratic needs samples_per_worker >= 1"
                )
        else:
            if self.samples_per_worker < 1:
                raise ConfigError(f"{self.kind} needs samples_per_worker >= 1")


@dataclass(frozen=True)
class InitConfig:
    kind: str = "zeros"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zeros", "gaussian"):
            raise ConfigError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class OsgpConfig:
    staleness: int = 4
    delay: DelayModel = field(default_factory=DelayModel)

    def __post_init__(self):
        if self.staleness < 0:
            raise ConfigError("osgp.staleness must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    base: BaseOptimizerConfig
    slowmo: SlowMoConfig
    gamma: GammaSchedule
    protocol: str = "allreduce"
    topology: str = "exponential-directed"
    custom_rounds: tuple = ()
    osgp: OsgpConfig = field(default_factory=OsgpConfig)
    init: InitConfig = field(default_factory=InitConfig)
    T: int | None = None
    total_steps: int | None = None
    seed: int = 0
    metric_cadence: int = 1
    log_bias: bool = False
    execution: str = "sequential"
    grid: dict = field(default_factory=dict)


def parse_config(raw: dict) -> ExperimentConfig:
    top = _take(raw, {
        "problem": {},
        "base": {},
        "slowmo": {},
        "gamma": {},
        "protocol": "allreduce",
        "topology": {},
        "osgp": {},
        "init": {},
        "T": None,
        "total_steps": None,
        "seed": 0,
        "metric_cadence": 1,
        "log_bias": False,
        "execution": "sequential",
        "grid": {},
    }, "")

    prob_raw = _take(top["problem"], {
        "kind": "quadratic", "m": 1, "dimension": 10, "heterogeneity": 0.0,
        "noise": {}, "l_min": 1.0, "l_max": 1.0, "samples_per_worker": 0,
        "sample_spread": 1.0, "input_dim": 4, "hidden": 8,
    }, "problem")
    noise_raw = _take(prob_raw.pop("noise"), {
        "kind": "additive-gaussian", "sigma2": 0.0, "batch_size": 0,
    }, "problem.noise")
    noise = NoiseModel(**noise_raw)
    problem = ProblemConfig(noise=noise, **prob_raw)

    base_raw = _take(top["base"], {
        "kind": "plain-sgd", "buffer_strategy": "reset", "beta_local": 0.9,
        "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
    }, "base")
    base = BaseOptimizerConfig(**base_raw)

    slowmo_raw = _take(top["slowmo"], {
        "alpha": 1.0, "beta": 0.7, "tau": 12, "noaverage": False,
    }, "slowmo")
    slowmo = SlowMoConfig(**slowmo_raw)

    gamma_raw = _take(top["gamma"], {
        "kind": "constant", "value": 0.1, "milestones": [], "decay": 0.1,
    }, "gamma")
    gamma = GammaSchedule(
        value=gamma_raw["value"], kind=gamma_raw["kind"],
        milestones=tuple(gamma_raw["milestones"]), decay=gamma_raw["decay"],
    )

    topo_raw = _take(top["topology"], {
        "kind": "exponential-directed", "rounds": [],
    }, "topology")
    if topo_raw["kind"] not in TOPOLOGY_KINDS:
        raise ConfigError(f"unknown topology kind {topo_raw['kind']!r}")
    custom_rounds = tuple(
        tuple((int(e[0]), int(e[1])) for e in rnd) for rnd in topo_raw["rounds"]
    )
    if topo_raw["kind"] == "custom" and not custom_rounds:
        raise ConfigError("custom topology needs a nonempty rounds list")

    osgp_raw = _take(top["osgp"], {"staleness": 4, "delay": {}}, "osgp")
    delay_raw = _take(osgp_raw.pop("delay"), {
        "kind": "constant", "rounds": 0, "p": 0.5, "cap": 8,
    }, "osgp.delay")
    osgp = OsgpConfig(staleness=osgp_raw["staleness"], delay=DelayModel(**delay_raw))

    init_raw = _take(top["init"], {"kind": "zeros", "scale": 1.0}, "init")
    init = InitConfig(**init_raw)

    protocol = top["protocol"]
    if protocol not in PROTOCOL_NAMES:
        raise ConfigError(f"unknown protocol {protocol!r}")
    if protocol == "double-average" and base.kind != "sgd-nesterov":
        raise ConfigError(
            "double-average averages momentum buffers and requires the "
            "sgd-nesterov base"
        )
    if protocol == "double-average" and slowmo.noaverage:
        raise ConfigError("double-average cannot run with noaverage")

    if (top["T"] is None) == (top["total_steps"] is None):
        raise ConfigError("specify exactly one of T / total_steps")
    if top["execution"] not in ("sequential", "parallel"):
        raise ConfigError("execution must be 'sequential' or 'parallel'")
    if top["metric_cadence"] < 1:
        raise ConfigError("metric_cadence must be >= 1")

    return ExperimentConfig(
        problem=problem, base=base, slowmo=slowmo, gamma=gamma,
        protocol=protocol, topology=topo_raw["kind"], custom_rounds=custom_rounds,
        osgp=osgp, init=init, T=top["T"], total_steps=top["total_steps"],
        seed=int(top["seed"]), metric_cadence=int(top["metric_cadence"]),
        log_bias=bool(top["log_bias"]), execution=top["execution"],
        grid=dict(top["grid"]),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(raw)


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Every field explicit, defaults included; JSON-serializable."""
    out = asdict(cfg)
    out["gamma"]["milestones"] = list(out["gamma"]["milestones"])
    out["custom_rounds"] = [list(map(list, rnd)) for rnd in out["custom_rounds"]]
    # topology nests back the way parse_config reads it
    out["topology"] = {"kind": out["topology"], "rounds": out.pop("custom_rounds")}
    return out


def build_problem(cfg: ExperimentConfig):
    p = cfg.problem
    if p.kind == "quadratic":
        return build_quadratic(
            m=p.m, dimension=p.dimension, noise=p.noise, seed=cfg.seed,
            l_min=p.l_min, l_max=p.l_max, heterogeneity=p.heterogeneity,
            samples_per_worker=p.samples_per_worker, sample_spread=p.sample_spread,
        )
    if p.kind == "logistic":
        return build_logistic(
            m=p.m, dimension=p.dimension, samples_per_worker=p.samples_per_worker,
            noise=p.noise, seed=cfg.seed, heterogeneity=p.heterogeneity,
        )
    return build_mlp(
        m=p.m, input_dim=p.input_dim, hidden=p.hidden,
        samples_per_worker=p.samples_per_worker, noise=p.noise,
        seed=cfg.seed, heterogeneity=p.heterogeneity,
    )


def initial_point(cfg: ExperimentConfig, dimension: int) -> np.ndarray:
    if cfg.init.kind == "zeros":
        return np.zeros(dimension)
    rng = rng_stream(cfg.seed, STREAM_MISC, 5)
    return cfg.init.scale * rng.standard_normal(dimension)


def build_simulation(cfg: ExperimentConfig, seed: int | None = None) -> Simulation:
    """Assemble the Simulation; ``seed`` overrides the config's seed."""
    if seed is not None:
        cfg = replace_seed(cfg, seed)
    problem = build_problem(cfg)
    return Simulation(
        problem=problem,
        base_config=cfg.base,
        slowmo_config=cfg.slowmo,
        protocol=cfg.protocol,
        gamma=cfg.gamma,
        T=cfg.T,
        total_steps=cfg.total_steps,
        topology=cfg.topology,
        custom_rounds=cfg.custom_rounds or None,
        staleness=cfg.osgp.staleness,
        delay=cfg.osgp.delay,
        seed=cfg.seed,
        x0=initial_point(cfg, problem.dimension),
        metric_cadence=cfg.metric_cadence,
        log_bias=cfg.log_bias,
        parallel=cfg.execution == "parallel",
    )


def replace_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, seed=int(seed))
