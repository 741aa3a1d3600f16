"""
Flat dotted-key run configuration: parsing, validation, serialization.

The format is one `section.key = value` assignment per line, with `#`
comments. Every key has a default, so an empty document is a valid
channel run. Unknown keys and out-of-range values are rejected with the
offending key named, so a typo cannot silently fall back to a default.
"""

from dataclasses import dataclass, fields
import math


class ConfigError(ValueError):
    pass


_EXPERIMENTS = ("channel", "convective", "custom")
_METHODS = ("kacanov", "kacanov_convective", "zarantonello")
_ZETA_VARIANTS = ("inverse", "shifted")

# kappa and method defaults depend on the experiment; None means
# "resolve after parsing"
_EXPERIMENT_KAPPA = {"channel": math.sqrt(2.0), "convective": 1.0,
                     "custom": 1.0}
_EXPERIMENT_METHOD = {"channel": "kacanov", "convective": "kacanov_convective",
                      "custom": "kacanov"}


@dataclass
class RunConfig:
    experiment: str = "channel"
    sigma: float = 0.3
    nu: float = 1.0
    kappa: float = None
    method: str = None
    delta_rule: str = "adaptive_n"
    max_inner: int = 100
    theta: float = 0.5
    C_graph: float = 4.0
    criterion_exponent: float = 1.0
    zeta_variant: str = "inverse"
    max_elements: int = 10000
    max_outer: int = 200
    directory: str = "out"
    vtk_stride: int = 0

    def __post_init__(self):
        if self.kappa is None:
            self.kappa = _EXPERIMENT_KAPPA[self.experiment]
        if self.method is None:
            self.method = _EXPERIMENT_METHOD[self.experiment]


def _parse_choice(allowed):
    def conv(raw):
        if raw not in allowed:
            raise ValueError("accepted values: {}".format(", ".join(allowed)))
        return raw
    return conv


def _parse_float(low=None, low_open=False, high=None):
    def conv(raw):
        try:
            v = float(raw)
        except ValueError:
            raise ValueError("accepted values: a number")
        if not math.isfinite(v):
            raise ValueError("accepted values: a finite number")
        if low is not None and (v <= low if low_open else v < low):
            op = ">" if low_open else ">="
            raise ValueError("accepted values: {} {}".format(op, low))
        if high is not None and v > high:
            raise ValueError("accepted values: <= {}".format(high))
        return v
    return conv


def _parse_int(low):
    def conv(raw):
        try:
            v = int(raw)
        except ValueError:
            raise ValueError("accepted values: an integer")
        if v < low:
            raise ValueError("accepted values: >= {}".format(low))
        return v
    return conv


def _parse_str(raw):
    return raw


def _parse_kappa(raw):
    try:
        v = float(raw)
    except ValueError:
        raise ValueError("accepted values: 1 or 1.4142135623730951")
    if not (abs(v - 1.0) < 1e-12 or abs(v - math.sqrt(2.0)) < 1e-12):
        raise ValueError(
            "accepted values: 1 (Frobenius convention) or "
            "1.4142135623730951 (doubled-inner-product convention)")
    return v


# dotted key -> (attribute, converter)
_KEYS = {
    "experiment": ("experiment", _parse_choice(_EXPERIMENTS)),
    "physics.sigma": ("sigma", _parse_float(low=0.0)),
    "physics.nu": ("nu", _parse_float(low=0.0, low_open=True)),
    "physics.kappa": ("kappa", _parse_kappa),
    "solver.method": ("method", _parse_choice(_METHODS)),
    "solver.delta_rule": ("delta_rule", _parse_choice(("adaptive_n",))),
    "solver.max_inner": ("max_inner", _parse_int(1)),
    "adapt.theta": ("theta", _parse_float(low=0.0, low_open=True, high=1.0)),
    "adapt.C_graph": ("C_graph", _parse_float(low=0.0, low_open=True)),
    "adapt.criterion_exponent": (
        "criterion_exponent", _parse_float(low=0.0, low_open=True)),
    "adapt.zeta_variant": ("zeta_variant", _parse_choice(_ZETA_VARIANTS)),
    "budget.max_elements": ("max_elements", _parse_int(1)),
    "budget.max_outer": ("max_outer", _parse_int(1)),
    "output.directory": ("directory", _parse_str),
    "output.vtk_stride": ("vtk_stride", _parse_int(0)),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEYS.items()}


def parse_config(text):
    """
    Parse a dotted-key document into a RunConfig, applying defaults for
    missing keys. Raises ConfigError naming the key for anything
    unknown, repeated, malformed, or out of range.
    """
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(
                "line {}: expected 'key = value', got {!r}".format(
                    lineno, body))
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(
                "unknown key '{}'; accepted keys: {}".format(
                    key, ", ".join(sorted(_KEYS))))
        if key in seen:
            raise ConfigError("key '{}' given twice".format(key))
        attr, conv = _KEYS[key]
        try:
            seen[attr] = conv(raw)
        except ValueError as exc:
            raise ConfigError("key '{}': {!r} invalid; {}".format(
                key, raw, exc)) from None
    return RunConfig(**seen)


def serialize_config(config):
    """Emit the full key set in a fixed order; parse round-trips it."""
    lines = []
    for f in fields(RunConfig):
        key = _ATTR_TO_KEY[f.name]
        lines.append("{} = {}".format(key, getattr(config, f.name)))
    return "\n".join(lines) + "\n"


def describe_defaults():
    """The default channel configuration as a parseable document."""
    return serialize_config(RunConfig())
