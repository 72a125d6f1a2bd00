"""Runtime configuration settings"""
import os
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


def _env_int(name, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(f"CRITICAL: {name} must be an integer, got: {raw[:50]}")


def _env_fraction(name, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError):
        raise RuntimeError(f"CRITICAL: {name} must be a number, got: {raw[:50]}")


class Config:
    """Environment-driven defaults"""

    # Debug mode selects verbose logging
    is_debug = os.environ.get("TPIR_DEBUG") == "1"

    LOG_LEVEL = "DEBUG" if is_debug else "INFO"

    # Field used when a run does not name one
    FIELD_MODULUS = _env_int("TPIR_FIELD_MODULUS", 65537)
    if FIELD_MODULUS < 2:
        raise RuntimeError(f"CRITICAL: TPIR_FIELD_MODULUS must be at least 2, got: {FIELD_MODULUS}")

    DEFAULT_SEED = _env_int("TPIR_SEED", 0)

    # Rejection sampling cap for scrambler draws
    SCRAMBLER_RETRIES = _env_int("TPIR_SCRAMBLER_RETRIES", 64)

    # Statistical privacy audit
    STAT_SAMPLES = _env_int("TPIR_STAT_SAMPLES", 5000)
    MIN_STAT_SAMPLES = _env_int("TPIR_MIN_STAT_SAMPLES", 1000)
    SIGNIFICANCE = _env_fraction("TPIR_SIGNIFICANCE", Fraction(1, 100))
    if not 0 < SIGNIFICANCE < 1:
        raise RuntimeError(f"CRITICAL: TPIR_SIGNIFICANCE must lie in (0, 1), got: {SIGNIFICANCE}")

    # Default statistical instance: N=3, T=2, L=(9,9) over GF(19)
    STAT_SERVERS = 3
    STAT_COLLUSION = 2
    STAT_LENGTHS = (9, 9)
    STAT_FIELD_MODULUS = 19

    # Exhaustive collusion enumeration limit for audits
    MAX_AUDIT_SERVERS = 8


# Keys accepted in a flat key=value config file
CONFIG_FILE_KEYS = {
    'servers', 'collusion', 'lengths', 'priors', 'theta', 'seed', 'field',
    'out', 'lift', 'stats', 'samples', 'significance', 'json_style', 'mutant',
}


@dataclass(frozen=True)
class RunConfig:
    """Settings for one command invocation"""
    servers: Optional[int] = None
    collusion: Optional[int] = None
    lengths: List[int] = field(default_factory=list)
    priors: Optional[List[Fraction]] = None
    theta: Optional[int] = None
    seed: int = Config.DEFAULT_SEED
    field_modulus: int = Config.FIELD_MODULUS
    out: Optional[str] = None
    lift: bool = False
    stats: bool = False
    samples: int = Config.STAT_SAMPLES
    significance: Fraction = Config.SIGNIFICANCE
    json_style: bool = False
    mutant: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'servers': self.servers,
            'collusion': self.collusion,
            'lengths': [str(length) for length in self.lengths],
            'priors': [str(prior) for prior in self.priors] if self.priors is not None else None,
            'theta': self.theta,
            'seed': str(self.seed),
            'field': str(self.field_modulus),
        }


def read_config_file(path: str) -> Dict[str, str]:
    """
    Read a flat key=value file. Blank lines and lines starting with '#'
    are skipped; dashes in keys are accepted as underscores.
    """
    values = {}
    with open(path, 'r') as handle:
        for line_number, raw_line in enumerate(handle, start=1):
            line = raw_line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ValueError(f"{path}:{line_number}: expected key=value, got: {line[:50]}")
            key, value = line.split('=', 1)
            key = key.strip().replace('-', '_')
            if key not in CONFIG_FILE_KEYS:
                raise ValueError(f"{path}:{line_number}: unknown key '{key}'")
            values[key] = value.strip()
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return values


def load_run_config(path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig: config file first, then flags (None means "not given").
    Raises ValueError with a diagnostic when a value cannot be parsed.
    """
    from validators import parse_bool, parse_fraction_list, parse_int, parse_int_list

    merged: Dict[str, Any] = {}
    if path:
        merged.update(read_config_file(path))
    merged.update({key: value for key, value in overrides.items() if value is not None})

    config = RunConfig()
    parsers = {
        'servers': ('servers', parse_int),
        'collusion': ('collusion', parse_int),
        'lengths': ('lengths', parse_int_list),
        'priors': ('priors', parse_fraction_list),
        'theta': ('theta', parse_int),
        'seed': ('seed', parse_int),
        'field': ('field_modulus', parse_int),
        'samples': ('samples', parse_int),
        'lift': ('lift', parse_bool),
        'stats': ('stats', parse_bool),
        'json_style': ('json_style', parse_bool),
    }
    updates: Dict[str, Any] = {}
    for key, raw in merged.items():
        if key in parsers:
            attribute, parser = parsers[key]
            value, error = parser(raw)
            if error:
                raise ValueError(f"Invalid {key}: {error}")
            updates[attribute] = value
        elif key == 'significance':
            values, error = parse_fraction_list(raw)
            if error or len(values) != 1:
                raise ValueError(f"Invalid significance: {error or 'expected one value'}")
            updates['significance'] = values[0]
        elif key in ('out', 'mutant'):
            updates[key] = str(raw)
    return replace(config, **updates)
