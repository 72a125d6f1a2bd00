"""Input parsers and validators for run settings"""
import re
from fractions import Fraction

_INTEGER_PATTERN = re.compile(r'^[+-]?\d+$')


def parse_int(raw):
    """Parse one integer. Returns tuple: (value, error_message)"""
    if isinstance(raw, bool):
        return None, f"expected an integer, got: {raw}"
    if isinstance(raw, int):
        return raw, None
    text = str(raw).strip()
    if not _INTEGER_PATTERN.match(text):
        return None, f"expected an integer, got: {text[:50]}"
    return int(text), None


def _split_values(raw):
    """Split on commas or semicolons, dropping empty entries"""
    if isinstance(raw, (list, tuple)):
        return [str(item).strip() for item in raw if str(item).strip()]
    return [part.strip() for part in re.split(r'[,;]', str(raw)) if part.strip()]


def parse_int_list(raw):
    """
    Parse comma or semicolon separated integers.
    Returns tuple: (values, error_message)
    """
    if raw is None or not str(raw).strip():
        return [], "at least one value is required"
    values = []
    invalid = []
    for part in _split_values(raw):
        value, error = parse_int(part)
        if error:
            invalid.append(part)
        else:
            values.append(value)
    if invalid:
        return [], f"not integers: {', '.join(invalid)}"
    if not values:
        return [], "at least one value is required"
    return values, None


def parse_fraction_list(raw):
    """
    Parse exact rationals written as "a/b" or finite decimals ("0.99").
    Returns tuple: (values, error_message)
    """
    if raw is None or not str(raw).strip():
        return [], "at least one value is required"
    values = []
    invalid = []
    for part in _split_values(raw):
        try:
            values.append(Fraction(part))
        except (ValueError, ZeroDivisionError):
            invalid.append(part)
    if invalid:
        return [], f"not exact rationals: {', '.join(invalid)}"
    return values, None


def parse_bool(raw):
    """Parse a boolean flag value. Returns tuple: (value, error_message)"""
    if isinstance(raw, bool):
        return raw, None
    text = str(raw).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True, None
    if text in ('0', 'false', 'no', 'off', ''):
        return False, None
    return None, f"expected a boolean, got: {text[:50]}"


def validate_priors(priors, count):
    """Priors must be positive, one per message, and sum to one"""
    if len(priors) != count:
        return f"expected {count} priors, got {len(priors)}"
    if any(prior <= 0 for prior in priors):
        return "priors must be positive"
    if sum(priors) != 1:
        return f"priors must sum to 1, got {sum(priors)}"
    return None


def validate_collusion(servers, collusion):
    """Collusion parameter must satisfy 1 <= T < N"""
    if servers is None or collusion is None:
        return "both servers and collusion are required"
    if servers < 2:
        return f"need at least 2 servers, got {servers}"
    if not 1 <= collusion < servers:
        return f"collusion must satisfy 1 <= T < N, got T={collusion}, N={servers}"
    return None
