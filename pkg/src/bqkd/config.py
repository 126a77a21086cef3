"""JSON run configuration: schema, validation and conversion to :class:`RunConfig`."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .adversary import EveStrategy
from .engine import RunConfig
from .errors import ConfigInvalid
from .qudit import random_unitary

_PROB_LIST = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
              "minItems": 2, "maxItems": 3}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {
    "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}}

EVE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["none", "subspace", "intercept_resend", "copy", "general", "two_way"]},
        "blocks": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "bases": {"type": "array", "items": {"enum": ["B0", "B1", "B2", "F"]}, "minItems": 1},
        "d_eve": {"type": "integer", "minimum": 1},
        "backward_d_eve": {"type": "integer", "minimum": 1},
        "unitary_seed": {"type": "integer"},
        "backward_unitary_seed": {"type": "integer"},
        "unitary": _MATRIX,
        "backward_unitary": _MATRIX,
        "identity": {"type": "boolean"},
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bqkd run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["protocol", "dim", "rounds"],
    "properties": {
        "protocol": {"enum": ["bQKD", "bSQKD", "BB84Qudit", "SQKD07"]},
        "dim": {"type": "integer", "minimum": 2},
        "rounds": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "alice_basis_probs": _PROB_LIST,
        "bob_basis_probs": _PROB_LIST,
        "bob_measure_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "check_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "abort_qber_threshold": {"type": "number", "minimum": 0, "maximum": 1},
        "eve": EVE_SCHEMA,
        "trials": {"type": "integer", "minimum": 1},
        "detection_class": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        "l_max": {"type": "integer", "minimum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report": {"type": "string"},
                "qber_csv": {"type": "string"},
                "detection_csv": {"type": "string"},
                "transcript": {"type": "string"},
            },
        },
    },
}


@dataclass
class ConfigFile:
    run: RunConfig
    trials: int = 1
    detection_class: tuple | None = None
    l_max: int = 6
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _matrix(rows) -> np.ndarray:
    arr = np.array(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
        raise ConfigInvalid("explicit unitaries must be square arrays of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _unitary(spec: dict, d: int, prefix: str, d_eve: int) -> np.ndarray:
    size = d * d_eve
    if spec.get(f"{prefix}unitary") is not None:
        return _matrix(spec[f"{prefix}unitary"])
    if spec.get("identity"):
        return np.eye(size, dtype=complex)
    seed = spec.get(f"{prefix}unitary_seed")
    if seed is None:
        raise ConfigInvalid(f"eve needs '{prefix}unitary' or '{prefix}unitary_seed' (or identity)")
    return random_unitary(size, np.random.default_rng(seed))


def eve_from_dict(spec: dict | None, d: int) -> EveStrategy:
    if not spec or spec["kind"] == "none":
        return EveStrategy.none()
    kind = spec["kind"]
    try:
        if kind == "subspace":
            return EveStrategy.subspace(spec["blocks"])
        if kind == "intercept_resend":
            return EveStrategy.intercept_resend(spec["bases"])
        if kind == "copy":
            return EveStrategy.copy(d)
        d_eve = spec.get("d_eve", d)
        desc = dict(spec)
        desc.pop("unitary", None)
        desc.pop("backward_unitary", None)
        if kind == "general":
            return EveStrategy.general(_unitary(spec, d, "", d_eve), d_eve, description=desc)
        bd = spec.get("backward_d_eve", d_eve)
        return EveStrategy.two_way(_unitary(spec, d, "", d_eve), _unitary(spec, d, "backward_", bd),
                                   d_eve, bd, description=desc)
    except KeyError as exc:
        raise ConfigInvalid(f"eve kind {kind!r} needs field {exc}") from None
    except ConfigInvalid:
        raise
    except Exception as exc:
        raise ConfigInvalid(f"bad eve specification: {exc}") from exc


def resolve_seed(cli_seed: int | None, config_seed: int | None) -> int:
    """``--seed`` wins, then the ``BQKD_SEED`` environment variable, then the file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("BQKD_SEED")
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise ConfigInvalid(f"BQKD_SEED is not an integer: {env!r}") from None
    return int(config_seed or 0)


def parse_config(doc: dict, seed: int | None = None) -> ConfigFile:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    d = doc["dim"]
    run = RunConfig(
        protocol=doc["protocol"],
        dim=d,
        rounds=doc["rounds"],
        seed=resolve_seed(seed, doc.get("seed")),
        alice_basis_probs=doc.get("alice_basis_probs"),
        bob_basis_probs=doc.get("bob_basis_probs"),
        bob_measure_prob=doc.get("bob_measure_prob", 0.5),
        check_fraction=doc.get("check_fraction", 0.1),
        abort_qber_threshold=doc.get("abort_qber_threshold", 0.0),
        eve=eve_from_dict(doc.get("eve"), d),
    )
    cls = tuple(doc["detection_class"]) if "detection_class" in doc else None
    return ConfigFile(run, doc.get("trials", 1), cls, doc.get("l_max", 6), doc.get("output", {}), doc)


def load_config(path: str | Path, seed: int | None = None) -> ConfigFile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc, seed)
