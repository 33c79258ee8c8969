import json
import logging as log
import os
from typing import List, NamedTuple, Optional, Sequence

from .common import ConfigError


class RunConfig(NamedTuple):
    command: str
    config_path: Optional[str] = None
    overrides: Sequence[str] = ()
    out_dir: str = 'runs'


def _is_config(value) -> bool:
    return isinstance(value, tuple) and hasattr(value, '_fields')


def tuple_to_dict(cfg) -> dict:
    out = {}
    for field in cfg._fields:
        value = getattr(cfg, field)
        if _is_config(value):
            out[field] = tuple_to_dict(value)
        elif isinstance(value, tuple):
            out[field] = list(value)
        else:
            out[field] = value
    return out


def _coerce(key: str, default, value):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ('true', 'false', '1', '0', 'yes', 'no'):
            return value.lower() in ('true', '1', 'yes')
        raise ConfigError(f'{key}: expected a boolean, got {value!r}')
    if isinstance(default, tuple):
        items = value.split(',') if isinstance(value, str) else value
        try:
            return tuple(type(default[0])(v) for v in items) if default else tuple(items)
        except (TypeError, ValueError):
            raise ConfigError(f'{key}: expected a list of numbers, got {value!r}')
    if isinstance(default, (int, float)):
        try:
            parsed = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f'{key}: expected a number, got {value!r}')
        if isinstance(default, int):
            if parsed != int(parsed):
                raise ConfigError(f'{key}: expected an integer, got {value!r}')
            return int(parsed)
        return parsed
    return str(value)


def tuple_from_dict(cls, values: dict, prefix: str = ''):
    """
    Rebuilds a (nested) NamedTuple config from plain dicts. Missing keys keep
    their defaults; unknown keys are rejected.
    """
    defaults = cls()
    unknown = sorted(set(values) - set(cls._fields))
    if unknown:
        raise ConfigError('unknown config key {}{}'.format(prefix, unknown[0]))
    changes = {}
    for field, value in values.items():
        default = getattr(defaults, field)
        if _is_config(default):
            if not isinstance(value, dict):
                raise ConfigError(f'{prefix}{field}: expected a section')
            changes[field] = tuple_from_dict(type(default), value, prefix=f'{prefix}{field}.')
        else:
            changes[field] = _coerce(prefix + field, default, value)
    return defaults._replace(**changes)


def _set_path(cfg, path: List[str], raw: str, full_key: str):
    field = path[0]
    if field not in cfg._fields:
        raise ConfigError(f'unknown config key {full_key}')
    current = getattr(cfg, field)
    if len(path) > 1:
        if not _is_config(current):
            raise ConfigError(f'unknown config key {full_key}')
        return cfg._replace(**{field: _set_path(current, path[1:], raw, full_key)})
    if _is_config(current):
        raise ConfigError(f'{full_key} is a section, set one of its keys instead')
    return cfg._replace(**{field: _coerce(full_key, current, raw)})


def apply_overrides(cfg, overrides: Sequence[str]):
    """
    Applies `key=value` overrides with dotted keys (`loss.alpha=0.5`). A
    `model.preset=NAME` override is applied before all others so that explicit
    model widths win over the preset.
    """
    from .params import preset

    pairs = []
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f'override {item!r} is not of the form key=value')
        key, raw = item.split('=', 1)
        pairs.append((key.strip(), raw.strip()))

    for key, raw in pairs:
        if key == 'model.preset':
            cfg = cfg._replace(model=preset(raw))
    for key, raw in pairs:
        if key != 'model.preset':
            cfg = _set_path(cfg, key.split('.'), raw, key)
    return cfg


def load_config(path: str, cls):
    try:
        with open(path) as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'cannot read config file {path}: {e}')
    if not isinstance(values, dict):
        raise ConfigError(f'{path}: expected a JSON object at the top level')
    return tuple_from_dict(cls, values)


def write_config(cfg, out_dir: str, name: str = 'config.json') -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, 'w') as f:
        json.dump(tuple_to_dict(cfg), f, indent=2, sort_keys=True)
        f.write('\n')
    log.debug('wrote effective config to {}'.format(path))
    return path
