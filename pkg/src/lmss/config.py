"""JSON run configurations: schemas and conversion to library objects.

Every subcommand accepts one JSON document. Fields common to all commands
are ``command``, ``seed`` and ``output_dir``; the rest are command
specific. Unknown fields are rejected at every level.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema
import numpy as np

from .existence import example_hurst
from .hurst import KINDS, HurstSpec, Rect
from .quadrature import QuadratureSpec

COMMANDS = ("simulate", "localtime", "check-existence", "verify-lemmas",
            "scan-increments", "scaling-probe", "calibrate-constants")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_ALPHA = {"type": "number", "exclusiveMinimum": 0, "maximum": 2}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_POSVEC = {"type": "array", "items": _POS, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SPEC_SCHEMA = _obj({"kind": {"enum": list(KINDS)}, "params": {"type": "object"},
                    "m": _VEC, "M": _VEC, "c": _NONNEG}, ["kind", "params"])
RECT_SCHEMA = _obj({"lower": _VEC, "upper": _VEC}, ["lower", "upper"])
EXAMPLE_SCHEMA = _obj({"m": {"type": "integer", "minimum": 2}, "q": _NONNEG, "k": _POS,
                       "upper": _POS}, ["m", "q", "k"])
QUAD_SCHEMA = _obj({"truncation_L": _POS, "panels_per_axis": _INT1,
                    "order": {"type": "integer", "minimum": 2}, "target_rel_err": _POS,
                    "singularity_split": {"type": "boolean"}, "max_power": _POS})

_FIELD = {"spec": SPEC_SCHEMA, "example": EXAMPLE_SCHEMA, "rect": RECT_SCHEMA,
          "alpha": _ALPHA, "d": _INT1}
_SIM = dict(_FIELD, eval_density={"type": "integer", "minimum": 2}, spacing=_POS,
            truncation_L=_POS, replicate={"type": "integer", "minimum": 0})

COMMAND_PROPS = {
    "simulate": _SIM,
    "localtime": dict(_SIM, bins=_INT1, bandwidth=_POS, x=_VEC, k=_POS),
    "check-existence": dict(_FIELD, equality_tol=_POS,
                            grid_density={"type": "integer", "minimum": 3}),
    "verify-lemmas": dict(
        _FIELD,
        quad=QUAD_SCHEMA,
        int_equiv={"type": "array", "items": _obj(
            {"alpha": _POS, "beta": _NONNEG, "a": _NONNEG, "b": _POS, "t0": _NONNEG,
             "A_list": _POSVEC}, ["alpha", "beta", "a", "b", "t0"])},
        triangle=_obj({"alphas": _POSVEC, "trials": _INT1, "N": _INT1}),
        p_weights={"type": "array", "items": _obj(
            {"h": _POSVEC, "d": _INT1, "n": _INT1}, ["h", "d", "n"])},
        sum_z={"type": "array", "items": _obj(
            {"n": {"type": "integer", "minimum": 1, "maximum": 3},
             "l": {"type": "integer", "minimum": 0}, "b": {"type": "array", "items": _NONNEG},
             "alpha": _ALPHA, "calibration": _INT1, "held_out": _INT1,
             "directions": _INT1, "margin": _POS}, ["n", "b"])},
    ),
    "scan-increments": dict(_FIELD, quad=QUAD_SCHEMA, pairs=_INT1, edge=_POS, corner=_NONNEG),
    "scaling-probe": dict(
        _FIELD, probe={"enum": ["moment", "holder"]},
        n={"type": "integer", "minimum": 0, "maximum": 3}, deltas=_POSVEC, replicates=_INT1,
        x=_VEC, a=_VEC, t=_VEC, radii=_POSVEC, eval_density={"type": "integer", "minimum": 2},
        tolerance=_NONNEG, truncation_L=_POS),
    "calibrate-constants": {
        "quad": QUAD_SCHEMA,
        "constants": {"type": "array", "items": _obj(
            {"alpha": _ALPHA, "h": _VEC}, ["alpha", "h"])},
        "envelopes": {"type": "array", "items": _obj(
            {"spec": SPEC_SCHEMA, "example": EXAMPLE_SCHEMA, "rect": RECT_SCHEMA,
             "alpha": _ALPHA, "pairs": _INT1, "seed": {"type": "integer", "minimum": 0}},
            ["rect"])},
    },
}


def schema_for(command: str) -> dict:
    props = {"command": {"enum": list(COMMANDS)},
             "seed": {"type": "integer", "minimum": 0},
             "output_dir": {"type": "string"}}
    props.update(COMMAND_PROPS[command])
    return _obj(props)


class ConfigError(ValueError):
    """The configuration does not satisfy the schema or its invariants."""


def validate(config: dict, command: str) -> dict:
    """Schema-check ``config`` for ``command``; raises :class:`ConfigError`."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(config, dict):
        raise ConfigError("configuration must be a JSON object")
    if config.get("command", command) != command:
        raise ConfigError(f"config is for {config['command']!r}, not {command!r}")
    try:
        jsonschema.validate(config, schema_for(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None
    if "spec" in config and "example" in config:
        raise ConfigError("give either 'spec' or 'example', not both")
    return config


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON text, ignoring ``output_dir``."""
    doc = {k: v for k, v in config.items() if k != "output_dir"}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_spec(doc: dict, default_h=(0.5,)) -> tuple[HurstSpec, Rect | None]:
    """Hurst spec and its natural rectangle (``None`` unless from an example)."""
    try:
        if "example" in doc:
            ex = doc["example"]
            return example_hurst(ex["m"], ex["q"], ex["k"], ex.get("upper"))
        if "spec" in doc:
            return HurstSpec.from_dict(doc["spec"]), None
        return HurstSpec.constant(default_h), None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid Hurst spec: {exc}") from None


def load_rect(doc: dict, N: int, default: Rect | None = None) -> Rect:
    try:
        if "rect" in doc:
            rect = Rect(tuple(doc["rect"]["lower"]), tuple(doc["rect"]["upper"]))
        else:
            rect = default or Rect((0.0,) * N, (1.0,) * N)
    except ValueError as exc:
        raise ConfigError(f"invalid rect: {exc}") from None
    if rect.dim != N:
        raise ConfigError(f"rect has dimension {rect.dim}, spec has {N}")
    return rect


def load_quad(doc: dict | None, **defaults) -> QuadratureSpec:
    settings = dict(defaults)
    settings.update(doc or {})
    try:
        return QuadratureSpec(**settings)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def as_point(x, N: int, name: str) -> np.ndarray:
    x = np.asarray(x, float)
    if x.shape != (N,):
        raise ConfigError(f"{name} must have {N} components")
    return x
