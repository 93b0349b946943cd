"""Experiment configuration: YAML parsing with line-aware validation.

Every field is checked before any pipeline work starts; diagnostics name the
offending dotted key and, when the value came from a file, its line number.
Unknown keys are rejected with a closest-match suggestion.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .datagen import NoiseSpec
from .hmc import HMCConfig

__all__ = [
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "RegularizerConfig",
    "ArchitectureConfig",
    "DataConfig",
    "MapConfig",
    "MethodConfig",
    "ExperimentConfig",
    "parse_config",
    "config_from_dict",
    "config_hash",
    "apply_env_overrides",
]

PROBLEMS = ("hyperelasticity", "mechanochemistry", "gaussian-demo")
METHODS = ("svgd", "psvgd", "hmc")

# learning rates the reference experiments use per regularizer order
DEFAULT_MAP_LR = {0: 0.08, 1: 0.01, 2: 0.005}
DEFAULT_HIDDEN = {
    "hyperelasticity": (30, 30),
    "mechanochemistry": (4, 16, 4),
    "gaussian-demo": (4,),
}


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


@dataclass(frozen=True)
class RegularizerConfig:
    p: int = 2
    lam: float = 0.0
    mc_samples: int = 1


@dataclass(frozen=True)
class ArchitectureConfig:
    hidden: tuple[int, ...]
    with_biases: bool = True


@dataclass(frozen=True)
class DataConfig:
    n: int = 80
    eps: float = 0.2
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0


@dataclass(frozen=True)
class MapConfig:
    lr: float
    epochs: int = 4000
    seed: int = 7  # weight initialization stream
    gate_seed: int | None = None  # gate noise stream; defaults to ``seed``

    @property
    def resolved_gate_seed(self) -> int:
        return self.seed if self.gate_seed is None else self.gate_seed


@dataclass(frozen=True)
class MethodConfig:
    kind: str = "svgd"
    particles: int = 10
    iterations: int = 1000
    lr: float = 0.005
    spread: float = 0.05
    seed: int = 1
    subspace_threshold: float = 0.99
    post_prune_lambda: float = 1e-3
    hmc: HMCConfig | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    output_dir: str
    regularizer: RegularizerConfig
    architecture: ArchitectureConfig
    data: DataConfig
    map: MapConfig
    method: MethodConfig

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# schema-driven extraction


def _fail(key: str, msg: str, lines: dict) -> None:
    raise ConfigValidationError(f"{key}: {msg}", line=lines.get(key))


def _check_unknown(section: dict, allowed, prefix: str, lines: dict) -> None:
    for key in section:
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed, n=1)
            msg = f"unknown key {key!r}"
            if hint:
                msg += f" (did you mean {hint[0]!r}?)"
            dotted = f"{prefix}.{key}" if prefix else key
            raise ConfigValidationError(f"{dotted}: {msg}", line=lines.get(dotted))


def _get(section: dict, key: str, default, kind, prefix: str, lines: dict):
    dotted = f"{prefix}.{key}" if prefix else key
    if key not in section:
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind in (int, float) and isinstance(value, bool):
        _fail(dotted, f"expected {kind.__name__}, got bool", lines)
    if kind is not None and not isinstance(value, kind):
        _fail(dotted, f"expected {kind.__name__}, got {type(value).__name__}", lines)
    return value


def _subsection(raw: dict, key: str, lines: dict) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        _fail(key, "expected a mapping", lines)
    return value


def _noise_from(section: dict, prefix: str, lines: dict) -> NoiseSpec:
    _check_unknown(section, ("kind", "level", "seed"), prefix, lines)
    kind = _get(section, "kind", "none", str, prefix, lines)
    level = _get(section, "level", 0.0, float, prefix, lines)
    seed = _get(section, "seed", 0, int, prefix, lines)
    try:
        return NoiseSpec(kind=kind, level=level, seed=seed)
    except ValueError as e:
        raise ConfigValidationError(f"{prefix}: {e}", line=lines.get(prefix)) from e


def config_from_dict(raw: dict, lines: dict | None = None) -> ExperimentConfig:
    """Validate a nested plain dict; ``lines`` maps dotted keys to line numbers."""
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigValidationError("top level must be a mapping")
    _check_unknown(
        raw,
        ("problem", "output_dir", "regularizer", "architecture", "data", "map", "method"),
        "",
        lines,
    )

    problem = raw.get("problem")
    if problem is None:
        _fail("problem", "is required", lines)
    if problem not in PROBLEMS:
        _fail("problem", f"must be one of {PROBLEMS}, got {problem!r}", lines)

    reg_raw = _subsection(raw, "regularizer", lines)
    _check_unknown(reg_raw, ("p", "lambda", "mc_samples"), "regularizer", lines)
    p = _get(reg_raw, "p", 2, int, "regularizer", lines)
    if p not in (0, 1, 2):
        _fail("regularizer.p", f"must be 0, 1 or 2, got {p}", lines)
    lam = _get(reg_raw, "lambda", 0.0, float, "regularizer", lines)
    if lam < 0.0:
        _fail("regularizer.lambda", f"must be non-negative, got {lam}", lines)
    mc = _get(reg_raw, "mc_samples", 1, int, "regularizer", lines)
    if mc < 1:
        _fail("regularizer.mc_samples", f"must be >= 1, got {mc}", lines)
    regularizer = RegularizerConfig(p=p, lam=lam, mc_samples=mc)

    arch_raw = _subsection(raw, "architecture", lines)
    _check_unknown(arch_raw, ("hidden", "with_biases"), "architecture", lines)
    hidden = _get(arch_raw, "hidden", list(DEFAULT_HIDDEN[problem]), list, "architecture", lines)
    if not hidden or not all(isinstance(h, int) and h >= 1 for h in hidden):
        _fail("architecture.hidden", f"must be a list of positive ints, got {hidden}", lines)
    with_biases = _get(arch_raw, "with_biases", True, bool, "architecture", lines)
    architecture = ArchitectureConfig(hidden=tuple(hidden), with_biases=with_biases)

    data_raw = _subsection(raw, "data", lines)
    _check_unknown(data_raw, ("n", "eps", "noise", "seed"), "data", lines)
    n = _get(data_raw, "n", 80, int, "data", lines)
    if n < 1:
        _fail("data.n", f"must be >= 1, got {n}", lines)
    eps = _get(data_raw, "eps", 0.2, float, "data", lines)
    if not 0.0 <= eps < 1.0:
        _fail("data.eps", f"must be in [0, 1), got {eps}", lines)
    noise = _noise_from(_subsection(data_raw, "noise", lines), "data.noise", lines)
    data = DataConfig(n=n, eps=eps, noise=noise, seed=_get(data_raw, "seed", 0, int, "data", lines))

    map_raw = _subsection(raw, "map", lines)
    _check_unknown(map_raw, ("lr", "epochs", "seed", "gate_seed"), "map", lines)
    lr = _get(map_raw, "lr", DEFAULT_MAP_LR[p], float, "map", lines)
    if lr <= 0.0:
        _fail("map.lr", f"must be positive, got {lr}", lines)
    epochs = _get(map_raw, "epochs", 4000, int, "map", lines)
    if epochs < 0:
        _fail("map.epochs", f"must be >= 0, got {epochs}", lines)
    map_cfg = MapConfig(
        lr=lr,
        epochs=epochs,
        seed=_get(map_raw, "seed", 7, int, "map", lines),
        gate_seed=_get(map_raw, "gate_seed", None, int, "map", lines),
    )

    meth_raw = _subsection(raw, "method", lines)
    _check_unknown(
        meth_raw,
        ("kind", "particles", "iterations", "lr", "spread", "seed",
         "subspace_threshold", "post_prune_lambda", "hmc"),
        "method",
        lines,
    )
    kind = _get(meth_raw, "kind", "svgd", str, "method", lines)
    if kind not in METHODS:
        _fail("method.kind", f"must be one of {METHODS}, got {kind!r}", lines)
    particles = _get(meth_raw, "particles", 10, int, "method", lines)
    if particles < 1:
        _fail("method.particles", f"must be >= 1, got {particles}", lines)
    iterations = _get(meth_raw, "iterations", 1000, int, "method", lines)
    if iterations < 0:
        _fail("method.iterations", f"must be >= 0, got {iterations}", lines)
    mlr = _get(meth_raw, "lr", 0.005, float, "method", lines)
    if mlr <= 0.0:
        _fail("method.lr", f"must be positive, got {mlr}", lines)
    spread = _get(meth_raw, "spread", 0.05, float, "method", lines)
    if spread < 0.0:
        _fail("method.spread", f"must be >= 0, got {spread}", lines)
    thr = _get(meth_raw, "subspace_threshold", 0.99, float, "method", lines)
    if not 0.0 < thr <= 1.0:
        _fail("method.subspace_threshold", f"must be in (0, 1], got {thr}", lines)
    ppl = _get(meth_raw, "post_prune_lambda", 1e-3, float, "method", lines)
    if ppl < 0.0:
        _fail("method.post_prune_lambda", f"must be >= 0, got {ppl}", lines)
    hmc_raw = _subsection(meth_raw, "hmc", lines)
    hmc_cfg = None
    if hmc_raw or kind == "hmc":
        _check_unknown(
            hmc_raw,
            ("step_size", "n_leapfrog", "chain_length", "burn_in", "thinning"),
            "method.hmc",
            lines,
        )
        try:
            hmc_cfg = HMCConfig(
                step_size=_get(hmc_raw, "step_size", 0.005, float, "method.hmc", lines),
                n_leapfrog=_get(hmc_raw, "n_leapfrog", 10, int, "method.hmc", lines),
                chain_length=_get(hmc_raw, "chain_length", 2000, int, "method.hmc", lines),
                burn_in=_get(hmc_raw, "burn_in", 200, int, "method.hmc", lines),
                thinning=_get(hmc_raw, "thinning", 1, int, "method.hmc", lines),
            )
        except ValueError as e:
            raise ConfigValidationError(f"method.hmc: {e}", line=lines.get("method.hmc")) from e
    method = MethodConfig(
        kind=kind, particles=particles, iterations=iterations, lr=mlr, spread=spread,
        seed=_get(meth_raw, "seed", 1, int, "method", lines),
        subspace_threshold=thr, post_prune_lambda=ppl, hmc=hmc_cfg,
    )

    output_dir = _get(raw, "output_dir", f"runs/{problem}", str, "", lines)
    return ExperimentConfig(
        problem=problem, output_dir=output_dir, regularizer=regularizer,
        architecture=architecture, data=data, map=map_cfg, method=method,
    )


# ---------------------------------------------------------------------------
# YAML front end


def _collect_lines(node, prefix: str, out: dict) -> None:
    if not isinstance(node, yaml.MappingNode):
        return
    for key_node, value_node in node.value:
        dotted = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
        out[dotted] = key_node.start_mark.line + 1
        _collect_lines(value_node, dotted, out)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as e:
        line = None
        mark = getattr(e, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigParseError(f"{path}: {e}", line=line) from e
    if raw is None:
        raise ConfigParseError(f"{path}: empty config")
    lines: dict = {}
    if node is not None:
        _collect_lines(node, "", lines)
    return config_from_dict(raw, lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable content hash of a fully-resolved configuration.

    The output directory is excluded: it says where artifacts go, not what
    gets computed, so runs of one configuration in two directories hash the
    same (and produce byte-identical artifacts).
    """
    doc = cfg.to_dict()
    doc.pop("output_dir", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def apply_env_overrides(cfg: ExperimentConfig) -> ExperimentConfig:
    """Honor STEINUQ_OUTPUT_DIR; thread-count overrides are read at import."""
    out = os.environ.get("STEINUQ_OUTPUT_DIR")
    if out:
        from dataclasses import replace

        cfg = replace(cfg, output_dir=out)
    return cfg
