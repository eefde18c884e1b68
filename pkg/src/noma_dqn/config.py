"""JSON configuration: parsing, validation, overrides, and canonical re-emission.

A config document has up to four sections, each optional::

    {"factory": {...}, "propagation": {...}, "agent": {...}, "experiment": {...}}

Missing keys take the defaults of the corresponding dataclass. Unknown
sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from . import __version__
from .channel import PropagationConfig
from .dqn import AgentConfig
from .env import FactoryConfig
from .experiment import ExperimentPlan


class ConfigError(ValueError):
    pass


SECTIONS = {
    "factory": FactoryConfig,
    "propagation": PropagationConfig,
    "agent": AgentConfig,
    "experiment": ExperimentPlan,
}

# JSON key -> dataclass field, where they differ
_ALIASES = {"factory": {"lambda": "lam"}}


def _json_key(section: str, field_name: str) -> str:
    for k, v in _ALIASES.get(section, {}).items():
        if v == field_name:
            return k
    return field_name


def _fields(section: str) -> Dict[str, dataclasses.Field]:
    fields = {f.name: f for f in dataclasses.fields(SECTIONS[section])}
    fields.pop("propagation", None)
    return {_json_key(section, name): f for name, f in fields.items()}


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if default and isinstance(default[0], float):
            items = [_coerce(section, key, v, 0.0) for v in value]
        elif default and isinstance(default[0], int):
            items = [_coerce(section, key, v, 0) for v in value]
        else:
            items = list(value)
        return tuple(items)
    return value


def _build(section: str, values: Dict[str, Any], **extra):
    kwargs = {f.name: values[key] for key, f in _fields(section).items() if key in values}
    try:
        return SECTIONS[section](**kwargs, **extra)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


@dataclass(frozen=True)
class RunManifest:
    factory: FactoryConfig
    agent: AgentConfig
    plan: ExperimentPlan
    config_path: Optional[str] = None
    output_dir: Optional[str] = None
    version: str = __version__

    @property
    def seeds(self):
        return self.plan.seeds

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Resolved configuration in config-file form (every key present)."""
        out = {}
        objs = {"factory": self.factory, "propagation": self.factory.propagation,
                "agent": self.agent, "experiment": self.plan}
        for section, obj in objs.items():
            out[section] = {}
            for key, f in _fields(section).items():
                v = getattr(obj, f.name)
                out[section][key] = list(v) if isinstance(v, tuple) else v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def manifest_from_dict(doc: Any, config_path: Optional[str] = None,
                       output_dir: Optional[str] = None) -> RunManifest:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    resolved = {}
    for section in SECTIONS:
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a JSON object")
        fields = _fields(section)
        bad = set(body) - set(fields)
        if bad:
            raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(bad))}")
        resolved[section] = {k: _coerce(section, k, v, _default(fields[k]))
                             for k, v in body.items()}
    prop = _build("propagation", resolved["propagation"])
    factory = _build("factory", resolved["factory"], propagation=prop)
    agent = _build("agent", resolved["agent"])
    plan = _build("experiment", resolved["experiment"])
    return RunManifest(factory, agent, plan, config_path, output_dir)


def apply_overrides(doc: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``section.key=value`` overrides; values parse as JSON, else as strings."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, raw = item.split("=", 1)
        section, key = path.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc.setdefault(section, {})
        if not isinstance(doc[section], dict):
            raise ConfigError(f"section {section!r} must be a JSON object")
        doc[section][key] = value
    return doc


def load_document(path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None


def parse_config(path, overrides: Iterable[str] = (), output_dir=None) -> RunManifest:
    doc = apply_overrides(load_document(path), overrides)
    return manifest_from_dict(doc, str(path), output_dir)
