"""Experiment configuration: a strict-schema JSON file.

Unknown keys are rejected with the line number where the key appears. The
model block is either explicit matrices or a named preset (optionally with
field overrides); the noise block defaults to six-sigma bounds derived from
the model; the learner block mirrors SgdConfig plus the initialization
strategy; the sweep block is the (M, T, seeds) grid of the experiment
runner.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .learner import SgdConfig
from .model import NoiseConfig, SystemModel, mass_spring

__all__ = ["ExperimentConfig", "load_config", "parse_config", "config_hash"]

_MODEL_KEYS = {"preset", "A", "H", "Q", "R", "P0", "m0"}
_NOISE_KEYS = {"family", "kappa_xi", "kappa_omega", "bound_sigmas"}
_LEARNER_KEYS = {"step_size", "batch_size", "horizon", "max_iters", "seed",
                 "safeguard", "target_rho", "init", "L0"}
_SWEEP_KEYS = {"M", "T", "seeds"}
_OUTPUT_KEYS = {"directory", "formats"}
_TOP_KEYS = {"model", "noise", "learner", "sweep", "output"}

PRESETS = {"mass_spring": mass_spring}


@dataclass
class ExperimentConfig:
    model: SystemModel
    noise: NoiseConfig
    learner: SgdConfig
    init_strategy: str = "surrogate_dare"
    init_gain: np.ndarray | None = None
    sweep_M: list = field(default_factory=lambda: [100])
    sweep_T: list = field(default_factory=lambda: [50])
    sweep_seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "out"
    formats: tuple = ("csv", "json")
    raw: dict = field(default_factory=dict)


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _require_known(block: dict, allowed: set, block_name: str, text: str):
    for key in block:
        if key not in allowed:
            line = _line_of(text, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(
                f"unknown key {key!r} in block {block_name!r}{where}"
            )


def _require_type(value, types, name):
    if not isinstance(value, types):
        raise ConfigError(f"{name} has the wrong type ({type(value).__name__})")
    return value


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    _require_known(raw, _TOP_KEYS, "top level", text)

    model_block = _require_type(raw.get("model", {"preset": "mass_spring"}),
                                dict, "model block")
    _require_known(model_block, _MODEL_KEYS, "model", text)
    try:
        model = _build_model(model_block)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad model block: {exc}") from exc

    noise_block = _require_type(raw.get("noise", {}), dict, "noise block")
    _require_known(noise_block, _NOISE_KEYS, "noise", text)
    try:
        noise = _build_noise(noise_block, model)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad noise block: {exc}") from exc

    learner_block = _require_type(raw.get("learner", {}), dict, "learner block")
    _require_known(learner_block, _LEARNER_KEYS, "learner", text)
    init_strategy = learner_block.get("init", "surrogate_dare")
    init_gain = learner_block.get("L0")
    if init_gain is not None:
        init_gain = np.asarray(init_gain, dtype=float)
    sgd_kwargs = {k: learner_block[k] for k in learner_block
                  if k not in ("init", "L0")}
    try:
        learner = SgdConfig(**sgd_kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad learner block: {exc}") from exc
    if init_strategy not in ("surrogate_dare", "zero_if_stable", "user"):
        raise ConfigError(f"unknown init strategy {init_strategy!r}")
    if init_strategy == "user" and init_gain is None:
        raise ConfigError("init strategy 'user' requires an L0 matrix")

    sweep_block = _require_type(raw.get("sweep", {}), dict, "sweep block")
    _require_known(sweep_block, _SWEEP_KEYS, "sweep", text)
    sweep_M = [int(v) for v in sweep_block.get("M", [learner.batch_size])]
    sweep_T = [int(v) for v in sweep_block.get("T", [learner.horizon])]
    sweep_seeds = [int(v) for v in sweep_block.get("seeds", [learner.seed])]
    if min(len(sweep_M), len(sweep_T), len(sweep_seeds)) < 1:
        raise ConfigError("sweep lists must be nonempty")

    output_block = _require_type(raw.get("output", {}), dict, "output block")
    _require_known(output_block, _OUTPUT_KEYS, "output", text)
    out_dir = output_block.get("directory", "out")
    formats = tuple(output_block.get("formats", ["csv", "json"]))
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {fmt!r}")

    return ExperimentConfig(
        model=model, noise=noise, learner=learner,
        init_strategy=init_strategy, init_gain=init_gain,
        sweep_M=sweep_M, sweep_T=sweep_T, sweep_seeds=sweep_seeds,
        out_dir=out_dir, formats=formats, raw=raw,
    )


def _build_model(block: dict) -> SystemModel:
    if "preset" in block:
        name = block["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        base = PRESETS[name]()
        overrides = {k: v for k, v in block.items() if k != "preset"}
        if not overrides:
            return base
        fields = {"A": base.A, "H": base.H, "Q": base.Q, "R": base.R,
                  "P0": base.P0, "m0": base.m0}
        fields.update(overrides)
        return SystemModel(**fields)
    missing = {"A", "H", "Q", "R", "P0"} - set(block)
    if missing:
        raise ConfigError(f"model block missing {sorted(missing)}")
    return SystemModel(A=block["A"], H=block["H"], Q=block["Q"],
                       R=block["R"], P0=block["P0"], m0=block.get("m0"))


def _build_noise(block: dict, model: SystemModel) -> NoiseConfig:
    sigmas = float(block.get("bound_sigmas", 6.0))
    family = block.get("family", "truncated_gaussian")
    default = NoiseConfig.default_for(model, sigmas=sigmas, family=family)
    return NoiseConfig(
        kappa_xi=float(block.get("kappa_xi", default.kappa_xi)),
        kappa_omega=float(block.get("kappa_omega", default.kappa_omega)),
        family=family,
    )


def config_hash(raw: dict) -> str:
    import hashlib

    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
