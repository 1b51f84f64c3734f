"""Flat ``section.key = value`` run configuration.

Example::

    # runs/ablation.cfg
    name = window50
    seed = 7
    window = 50
    methods = rule, fc-lstm
    sim.duration = 120
    train.epochs = 4
    net.dropout = 0.5

Top-level keys set :class:`ExperimentConfig` fields; ``sim``, ``ukf``,
``geom``, ``thr``, ``train`` and ``svm`` address the nested configs and
``net`` overrides fields of both network architectures.  Every key has a
default, so an empty file gives the benchmark configuration.
"""
from __future__ import annotations

import ast
import dataclasses
from pathlib import Path

from .experiment import ExperimentConfig, METHODS
from .nn.network import NetworkConfig

RunConfig = ExperimentConfig

SECTIONS = ("sim", "ukf", "geom", "thr", "train", "svm")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigParseError(ValueError):
    pass


def _field_types(cls):
    return {f.name: f for f in dataclasses.fields(cls)}


def _parse_value(text, default, where):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigParseError(f"{where}: expected a boolean, got {text!r}")
    if isinstance(default, str):
        return text.strip("'\"")
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        if default is None:
            return text.strip("'\"")
        raise ConfigParseError(f"{where}: cannot parse {text!r}") from None
    if isinstance(default, float) and isinstance(value, int):
        value = float(value)
    if isinstance(default, tuple) and isinstance(value, (list, tuple)):
        value = tuple(value)
    if default is not None and not isinstance(value, type(default)):
        raise ConfigParseError(f"{where}: expected {type(default).__name__}, got {text!r}")
    return value


def parse_methods(text):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [s.strip() for s in str(text).replace(" ", ",").split(",") if s.strip()]
    if items == ["all"]:
        return METHODS
    unknown = [m for m in items if m not in METHODS]
    if unknown or not items:
        raise ConfigParseError(f"unknown methods {unknown}; choose from {', '.join(METHODS)} or 'all'")
    return tuple(m for m in METHODS if m in items)


def parse_pairs(lines, source="<config>"):
    pairs = []
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"{source}:{n}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip(), f"{source}:{n}"))
    return pairs


def apply_pairs(cfg, pairs):
    """Return ``cfg`` with every (key, value, where) triple applied."""
    top = {}
    nested = {s: {} for s in SECTIONS}
    net = dict(cfg.net_overrides)
    top_fields = _field_types(ExperimentConfig)
    net_default = NetworkConfig()
    for key, value, where in pairs:
        if "." in key:
            section, name = key.split(".", 1)
            if section == "net":
                if not hasattr(net_default, name):
                    raise ConfigParseError(f"{where}: unknown key {key!r}")
                net[name] = _parse_value(value, getattr(net_default, name), where)
                continue
            if section not in SECTIONS:
                raise ConfigParseError(f"{where}: unknown section {section!r}")
            current = getattr(cfg, section)
            if name not in _field_types(type(current)):
                raise ConfigParseError(f"{where}: unknown key {key!r}")
            nested[section][name] = _parse_value(value, getattr(current, name), where)
        else:
            if key not in top_fields or key in SECTIONS or key == "net_overrides":
                raise ConfigParseError(f"{where}: unknown key {key!r}")
            if key == "methods":
                top[key] = parse_methods(value)
            else:
                top[key] = _parse_value(value, getattr(cfg, key), where)
    for section, changes in nested.items():
        if changes:
            try:
                top[section] = dataclasses.replace(getattr(cfg, section), **changes)
            except (TypeError, ValueError) as exc:
                raise ConfigParseError(f"[{section}] {exc}") from None
    top["net_overrides"] = tuple(sorted(net.items()))
    return cfg.replace(**top)


def parse_config(text, source="<config>", base=None):
    return apply_pairs(base or RunConfig(), parse_pairs(text.splitlines(), source))


def load_config(path=None):
    if path is None:
        return RunConfig()
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def dump_config(cfg):
    """Inverse of :func:`parse_config` (values written with ``repr``)."""
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(value):
                lines.append(f"{f.name}.{g.name} = {_fmt(getattr(value, g.name))}")
        elif f.name == "net_overrides":
            lines += [f"net.{k} = {_fmt(v)}" for k, v in value]
        elif f.name == "methods":
            lines.append(f"methods = {', '.join(value)}")
        else:
            lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return repr(value)
