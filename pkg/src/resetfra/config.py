"""JSON system configurations, bundled presets and the thread-pool helper."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .element import LoopConfig, make_element
from .errors import ConfigError
from .hosidf import hosidf_pp
from .lti import TransferFunction

__all__ = ['SystemConfig', 'load_config', 'load_case', 'list_cases',
           'config_from_dict', 'validate_config', 'config_hash',
           'parallel_map', 'thread_count', 'SCHEMA']

SCHEMA = json.loads(resources.files(__package__).joinpath('schema.json').read_text())
_VALIDATOR = jsonschema.Draft7Validator(SCHEMA)

ANALYSIS_DEFAULTS = {
    'n_h': 31,
    'f_min': 0.01,
    'f_max': 1000.0,
    'points': 200,
    'dt': None,
    'freqs_hz': [],
    'periods': 60,
    'duration': None,
}


@dataclass(frozen=True)
class SystemConfig:
    """A validated configuration: the loop plus analysis defaults."""

    name: str
    loop: LoopConfig
    analysis: dict
    raw: dict = field(repr=False)

    @property
    def digest(self) -> str:
        return config_hash(self.raw)


def validate_config(data: dict) -> None:
    """Raise :class:`ConfigError` listing every schema violation."""
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


def config_hash(data: dict) -> str:
    """SHA-256 of the canonical JSON form, truncated to 16 hex digits."""
    canon = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _rational(block: dict | None) -> tuple[TransferFunction, object]:
    """Product of ``num/den`` and all ``factors``; the gain is returned
    separately because a crossover gain needs the finished loop."""
    tf = TransferFunction.gain(1.0)
    if block is None:
        return tf, 1.0
    if 'num' in block:
        tf = TransferFunction(block['num'], block['den'])
    for fac in block.get('factors', []):
        tf = tf * TransferFunction(fac['num'], fac['den'])
    return tf, block.get('gain', 1.0)


def _crossover_gain(loop: LoopConfig, f_hz: float) -> float:
    w = 2 * np.pi * f_hz
    l1 = (hosidf_pp(loop.controller, loop.k_rc, w, 1)
          * complex(loop.c2.freqresp(w)) * complex(loop.plant.freqresp(w)))
    if not abs(l1) > 0:
        raise ConfigError(f"open loop vanishes at {f_hz} Hz; cannot place crossover")
    return 1.0 / abs(l1)


def config_from_dict(data: dict) -> SystemConfig:
    """Validate ``data`` and build the loop it describes.

    A ``gain`` of ``{"unity_crossover_hz": f}`` on ``c2`` or ``plant`` scales
    that block so the first-harmonic open loop has unit magnitude at ``f``.
    """
    validate_config(data)
    ctl = data['controller']
    rc = make_element(ctl['kind'], ctl.get('params', {}), ctl.get('gamma', 0.0))
    c2, c2_gain = _rational(data.get('c2'))
    plant, p_gain = _rational(data['plant'])
    if 'num' not in data['plant'] and not data['plant'].get('factors'):
        raise ConfigError("plant needs num/den or factors")
    inp = data.get('input', {})
    fixed = {}
    for key, gain in (('c2', c2_gain), ('plant', p_gain)):
        fixed[key] = float(gain) if not isinstance(gain, dict) else 1.0
    loop = LoopConfig(rc, plant * TransferFunction.gain(fixed['plant']),
                      c2 * TransferFunction.gain(fixed['c2']),
                      k_rc=float(ctl.get('k_rc', 1.0)),
                      input_node=inp.get('node', 'reference'),
                      amplitude=float(inp.get('amplitude', 1.0)),
                      name=data['name'])
    for key, gain in (('c2', c2_gain), ('plant', p_gain)):
        if isinstance(gain, dict):
            k = _crossover_gain(loop, gain['unity_crossover_hz'])
            loop = loop.replace(**{key: getattr(loop, key) * TransferFunction.gain(k)})
    analysis = {**ANALYSIS_DEFAULTS, **data.get('analysis', {})}
    if analysis['n_h'] % 2 == 0:
        raise ConfigError("analysis.n_h must be odd")
    if analysis['f_min'] >= analysis['f_max']:
        raise ConfigError("analysis.f_min must be below f_max")
    return SystemConfig(data['name'], loop, analysis, data)


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(data)


def _preset_dir():
    return resources.files(__package__).joinpath('presets')


def list_cases() -> list[str]:
    """Names of the bundled presets, sorted."""
    return sorted(p.name[:-5] for p in _preset_dir().iterdir()
                  if p.name.endswith('.json'))


def load_case(name: str) -> SystemConfig:
    entry = _preset_dir().joinpath(f'{name}.json')
    if not entry.is_file():
        raise ConfigError(f"unknown case {name!r}; available: {', '.join(list_cases())}")
    return config_from_dict(json.loads(entry.read_text()))


def thread_count() -> int:
    """Worker count: ``RESETFRA_THREADS`` if set, else the CPU count."""
    env = os.environ.get('RESETFRA_THREADS')
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"RESETFRA_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("RESETFRA_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items) -> list:
    """Order-preserving map over a thread pool sized by :func:`thread_count`."""
    items = list(items)
    n = min(thread_count(), max(len(items), 1))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
