"""Experiment configuration files.

YAML, one experiment per file: a system, optional parameter overrides,
a potential, and a list of method rows. Parsing goes through
yaml.compose rather than safe_load so every complaint can point at
file:line:column and the offending key path.

Method rows accept the short aliases N, n, e and R for particles,
steps, ess_threshold and replications. A row without a seed gets one
derived from the master seed and its position, so adding a row never
reshuffles the randomness of the rows before it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import yaml

from .potentials import KINDS, PotentialSpec
from .samplers import METHODS, STATISTICS, MethodConfig
from .streams import Stream
from .systems import SYSTEM_NAMES, normalize_system_name

_METHOD_ALIASES = {"N": "particles", "n": "steps", "e": "ess_threshold",
                   "R": "replications"}
_METHOD_KEYS = {"method", "particles", "steps", "ess_threshold", "seed",
                "replications"}
_POTENTIAL_KEYS = {"kind", "alpha", "alpha1", "alpha2"}
_TOP_KEYS = {"system", "system_params", "potential", "methods", "seed",
             "statistic"}


class ConfigError(ValueError):
    pass


class _NamedSource(io.StringIO):
    """StringIO whose .name lands in the yaml marks (so in error text)."""

    def __init__(self, text, name):
        super().__init__(text)
        self.name = name


def _fail(node, path, message):
    mark = node.start_mark
    where = f"{mark.name}:{mark.line + 1}:{mark.column + 1}"
    raise ConfigError(f"{where}: {path}: {message}")


def _scalar(node, path):
    if not isinstance(node, yaml.ScalarNode):
        _fail(node, path, "expected a scalar value")
    tag = node.tag.rsplit(":", 1)[-1]
    v = node.value
    if tag == "int":
        return int(v.replace("_", ""), 0)
    if tag == "float":
        return float(v.replace("_", ""))
    if tag == "bool":
        return v.lower() in ("true", "yes", "on")
    if tag == "null":
        return None
    return v


def _mapping(node, path):
    """MappingNode -> {str key: child node}, rejecting duplicates."""
    if not isinstance(node, yaml.MappingNode):
        _fail(node, path, "expected a mapping")
    out = {}
    for key_node, value_node in node.value:
        key = _scalar(key_node, path)
        if not isinstance(key, str):
            _fail(key_node, path, "keys must be strings")
        if key in out:
            _fail(key_node, f"{path}.{key}" if path else key, "duplicate key")
        out[key] = value_node
    return out


def _int(node, path):
    v = _scalar(node, path)
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(node, path, f"expected an integer, got {v!r}")
    return v


def _number(node, path):
    v = _scalar(node, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(node, path, f"expected a number, got {v!r}")
    return float(v)


def _str(node, path):
    v = _scalar(node, path)
    if not isinstance(v, str):
        _fail(node, path, f"expected a string, got {v!r}")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    system: str
    system_params: dict = field(default_factory=dict)
    potential: PotentialSpec = PotentialSpec()
    methods: tuple = ()
    seed: int = 20260816
    statistic: str = "failure"


def _parse_potential(node, path):
    fields = _mapping(node, path)
    kw = {}
    for key, vn in fields.items():
        kp = f"{path}.{key}"
        if key not in _POTENTIAL_KEYS:
            _fail(vn, kp, f"unknown potential field (one of {sorted(_POTENTIAL_KEYS)})")
        if key == "kind":
            kind = _str(vn, kp)
            if kind not in KINDS or kind == "custom":
                _fail(vn, kp, f"kind must be one of {[k for k in KINDS if k != 'custom']}")
            kw["kind"] = kind
        else:
            kw[key] = _number(vn, kp)
    spec = PotentialSpec(**kw)
    try:
        spec.validate()
    except ValueError as exc:
        _fail(node, path, str(exc))
    return spec


def _parse_method(node, path, master_seed, index):
    fields = _mapping(node, path)
    kw = {}
    for key, vn in fields.items():
        name = _METHOD_ALIASES.get(key, key)
        kp = f"{path}.{key}"
        if name not in _METHOD_KEYS:
            _fail(vn, kp, f"unknown method field (one of {sorted(_METHOD_KEYS | set(_METHOD_ALIASES))})")
        if name in kw:
            _fail(vn, kp, f"duplicate setting for {name}")
        if name == "method":
            v = _str(vn, kp)
            if v not in METHODS:
                _fail(vn, kp, f"method must be one of {list(METHODS)}")
            kw[name] = v
        elif name == "ess_threshold":
            kw[name] = _number(vn, kp)
        else:
            kw[name] = _int(vn, kp)
    if "method" not in kw:
        _fail(node, path, "method row needs a 'method' field")
    if "seed" not in kw:
        kw["seed"] = Stream(master_seed).child("method", index).key
    cfg = MethodConfig(**kw)
    try:
        cfg.validate()
    except ValueError as exc:
        _fail(node, path, str(exc))
    return cfg


def parse_config(text: str, name: str = "<config>",
                 seed_override: int = None) -> ExperimentConfig:
    """Parse one experiment. seed_override replaces the master seed
    before method seeds are derived; rows with their own seed keep it.
    """
    try:
        root = yaml.compose(_NamedSource(text, name), Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{name}: not valid YAML: {exc}") from exc
    if root is None:
        raise ConfigError(f"{name}: empty configuration")
    if isinstance(root, yaml.ScalarNode):
        _fail(root, "", "expected a mapping at the top level")
    top = _mapping(root, "")
    for key, vn in top.items():
        if key not in _TOP_KEYS:
            _fail(vn, key, f"unknown setting (one of {sorted(_TOP_KEYS)})")
    if "system" not in top:
        raise ConfigError(f"{name}: missing required setting 'system'")
    system = normalize_system_name(_str(top["system"], "system"))
    if system not in SYSTEM_NAMES:
        _fail(top["system"], "system", f"unknown system (one of {sorted(SYSTEM_NAMES)})")

    params = {}
    if "system_params" in top:
        for key, vn in _mapping(top["system_params"], "system_params").items():
            kp = f"system_params.{key}"
            v = _scalar(vn, kp)
            if v is None:
                _fail(vn, kp, "parameter overrides cannot be null")
            params[key] = v

    seed = _int(top["seed"], "seed") if "seed" in top else 20260816
    if not (0 <= seed < 2**64):
        _fail(top["seed"], "seed", "seed must fit in 64 bits")
    if seed_override is not None:
        seed = seed_override

    potential = PotentialSpec()
    if "potential" in top:
        potential = _parse_potential(top["potential"], "potential")

    statistic = "failure"
    if "statistic" in top:
        statistic = _str(top["statistic"], "statistic")
        if statistic not in STATISTICS:
            _fail(top["statistic"], "statistic",
                  f"unknown statistic (one of {sorted(STATISTICS)})")

    if "methods" not in top:
        raise ConfigError(f"{name}: missing required setting 'methods'")
    mnode = top["methods"]
    if not isinstance(mnode, yaml.SequenceNode) or not mnode.value:
        _fail(mnode, "methods", "expected a non-empty list of method rows")
    methods = tuple(_parse_method(row, f"methods[{i}]", seed, i)
                    for i, row in enumerate(mnode.value))

    return ExperimentConfig(system=system, system_params=params,
                            potential=potential, methods=methods,
                            seed=seed, statistic=statistic)


def load_config(path: str, seed_override: int = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), name=path, seed_override=seed_override)
