"""JSON configuration schemas for the command-line pipeline."""

import json

import jsonschema

from .exceptions import ConfigError
from .models import MODEL_KINDS

__all__ = ["SCHEMAS", "load_config", "validate_config", "proposal_kwargs"]

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}

_PROPOSAL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "w_t": {"type": "number", "minimum": 0},
        "w_u": {"type": "number", "exclusiveMinimum": 0},
        "w_n": {"type": "number", "minimum": 0},
        "d": _pos_int,
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "tau": _nonneg_int,
        "p": _prob,
        "q": _prob,
        "bisection_min": _pos_int,
        "bisection_max": _pos_int,
        "epsilon_bracket": {"type": "number", "exclusiveMinimum": 0},
        "entry_moves": _nonneg_int,
        "node_moves": _nonneg_int,
        "category_moves": _nonneg_int,
        "partition_moves": _nonneg_int,
        "replace_moves": _nonneg_int,
        "swap_moves": _nonneg_int,
        "greedy_tol": {"type": "number", "exclusiveMinimum": 0},
        "greedy_max_iter": _pos_int,
        "exhaustive_max_n": _pos_int,
    },
}

_PRIOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lam": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "sample_theta": {"type": "boolean"},
    },
}

_MODEL = {"enum": list(MODEL_KINDS)}

SCHEMAS = {
    "generate": {
        "type": "object",
        "additionalProperties": False,
        "required": ["N", "model", "M"],
        "properties": {
            "N": {"type": "integer", "minimum": 2},
            "model": _MODEL,
            "M": _pos_int,
            "seed": _nonneg_int,
            "graph": {"enum": ["er", "planted"]},
            "avg_degree": {"type": "number", "minimum": 0},
            "w_mean": _num,
            "w_sd": {"type": "number", "minimum": 0},
            "groups": _pos_int,
            "mu": _prob,
            "theta": _num,
            "mode": {"enum": ["chain", "parallel", "iid"]},
        },
    },
    "reconstruct": {
        "type": "object",
        "additionalProperties": False,
        "required": ["dataset", "model"],
        "properties": {
            "dataset": {"type": "string"},
            "model": _MODEL,
            "seed": _nonneg_int,
            "proposal": _PROPOSAL,
            "prior": _PRIOR,
        },
    },
    "sample": {
        "type": "object",
        "additionalProperties": False,
        "required": ["model"],
        "properties": {
            "dataset": {"type": "string"},
            "model": _MODEL,
            "seed": _nonneg_int,
            "chains": _pos_int,
            "sweeps": _pos_int,
            "burn_in": _nonneg_int,
            "thin": _pos_int,
            "threads": _pos_int,
            "snapshots": {"type": "boolean"},
            "conditional_mean": {"type": "boolean"},
            "reference": {"type": "string"},
            "proposal": _PROPOSAL,
            "prior": _PRIOR,
            "protocol": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"const": "map-vs-mp"},
                    "truth": {"type": "string"},
                    "M": {"type": "array", "items": _pos_int, "minItems": 1},
                    "seeds": {"type": "array", "items": _nonneg_int, "minItems": 1},
                    "mode": {"enum": ["chain", "parallel"]},
                },
            },
        },
    },
    "compare": {
        "type": "object",
        "additionalProperties": False,
        "required": ["dataset", "marginals"],
        "properties": {
            "dataset": {"type": "string"},
            "marginals": {"type": "string"},
            "bins": {"type": "integer", "minimum": 2},
            "fractions": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            "top_k": _pos_int,
        },
    },
    "bench-scaling": {
        "type": "object",
        "additionalProperties": False,
        "required": ["N"],
        "properties": {
            "N": {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 2},
            "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "rounds": _nonneg_int,
            "seed": _nonneg_int,
            "sweeps_per_node": {"type": "number", "exclusiveMinimum": 0},
            "min_sweeps": _pos_int,
            "mixes": {
                "type": "object",
                "minProperties": 1,
                "additionalProperties": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "w_t": {"type": "number", "minimum": 0},
                        "w_u": {"type": "number", "exclusiveMinimum": 0},
                        "w_n": {"type": "number", "minimum": 0},
                        "d": _pos_int,
                    },
                },
            },
        },
    },
}


def _location(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate_config(command, cfg):
    """Validate ``cfg`` against the schema of ``command``; raise ConfigError."""
    schema = SCHEMAS.get(command)
    if schema is None:
        raise ConfigError(f"unknown command {command!r}")
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_location(e)}: {e.message}" for e in errors)
        raise ConfigError(f"invalid {command} config: {msg}")
    # constraints that JSON Schema cannot express across fields
    if command == "generate":
        N = cfg["N"]
        if cfg.get("avg_degree", 0) >= N - 1:
            raise ConfigError(f"avg_degree: must be below N - 1 = {N - 1}")
        if cfg["model"] == "gaussian" and cfg.get("theta", 1.0) <= 0:
            raise ConfigError("theta: gaussian instances need theta > 0")
    if command == "sample":
        if cfg.get("burn_in", 0) >= cfg.get("sweeps", 200):
            raise ConfigError("burn_in: must be smaller than sweeps")
        if "protocol" not in cfg and "dataset" not in cfg:
            raise ConfigError("dataset: required unless a protocol is given")
        if "protocol" in cfg and "truth" not in cfg["protocol"]:
            raise ConfigError("protocol/truth: required for map-vs-mp")
    prop = cfg.get("proposal", {})
    if prop.get("bisection_min", 1) > prop.get("bisection_max", 4):
        raise ConfigError("proposal/bisection_min: must not exceed bisection_max")
    return cfg


def load_config(path, command):
    """Read a JSON config file and validate it for ``command``."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return validate_config(command, cfg)


def proposal_kwargs(cfg):
    return dict(cfg.get("proposal", {}))
