"""Experiment configuration: a line-based ``key = value`` format.

Blank lines and ``#`` comments are ignored, lists are comma separated,
``none`` clears an optional value.  Every key has a default except
``experiment``.
"""

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import MissingRequired, ParseError, UnknownKey

EXPERIMENTS = ("mse-vs-snr", "mse-vs-rho", "mm-trace", "rate-vs-snr", "rate-vs-k",
               "table-hyperparams", "train", "gen-data")
METHOD_TAGS = ("ls", "lmmse", "dncnn", "ffdnet", "genie")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    M: int = 10
    K: int = 10
    rho1: float = 0.6
    rho2: float = 0.6
    rho3: float = 0.6
    T_p: int = None                     # defaults to K + 1
    snr_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    gamma_tr_db: float = -10.0          # single training SNR (mse-vs-rho, mm-trace, rates)
    rho_grid: tuple = (0.0, 0.3, 0.6, 0.9)
    gamma_bar_db: tuple = (-5.0, 0.0, 5.0)
    K_grid: tuple = (2, 8, 32, 128)
    T_c: int = 196
    trials: int = 2000
    seed: int = 0
    methods: tuple = ("ls", "lmmse")
    mm_inits: int = 5
    mm_epsilon: float = 1e-6
    mm_max_iter: int = 2000
    arch: str = "dncnn"
    D: int = 8
    N_f: int = 4
    D_grid: tuple = (4, 6, 8, 10)
    N_f_grid: tuple = (4, 8)
    train_snr_db: tuple = (0.0,)
    n_train: int = 16000
    n_val: int = 8000
    n_test: int = 6000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 100
    patience: int = 5
    max_epochs: int = 200
    improvement_delta: float = 1e-5
    out_dir: str = "out"
    weights: str = None
    dncnn_weights: str = None
    ffdnet_weights: str = None
    dataset: str = None
    threads: int = 1

    @property
    def pilot_length(self):
        return self.T_p if self.T_p is not None else self.K + 1

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_INT_TUPLES = {"K_grid", "D_grid", "N_f_grid"}
_FLOAT_TUPLES = {"snr_db", "rho_grid", "gamma_bar_db", "train_snr_db"}
_STR_TUPLES = {"methods"}
_OPTIONAL_INT = {"T_p"}
_OPTIONAL_STR = {"weights", "dncnn_weights", "ffdnet_weights", "dataset"}
_INTS = {"M", "K", "T_c", "trials", "seed", "mm_inits", "mm_max_iter", "D", "N_f",
         "n_train", "n_val", "n_test", "batch_size", "patience", "max_epochs", "threads"}
_STRS = {"experiment", "arch", "out_dir"}

KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _OPTIONAL_INT | _OPTIONAL_STR and raw.lower() == "none":
        return None
    if key in _INT_TUPLES:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if key in _FLOAT_TUPLES:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if key in _STR_TUPLES:
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if key in _INTS or key in _OPTIONAL_INT:
        return int(raw)
    if key in _STRS or key in _OPTIONAL_STR:
        if not raw:
            raise ValueError("empty value")
        return raw
    return float(raw)


def _validate_value(key, value):
    """Return an error message or None."""
    if key.startswith("rho") and key != "rho_grid" and not 0.0 <= value < 1.0:
        return f"{key} must lie in [0, 1)"
    if key == "rho_grid" and not all(0.0 <= r < 1.0 for r in value):
        return "rho_grid entries must lie in [0, 1)"
    if key == "experiment" and value not in EXPERIMENTS:
        return f"unknown experiment {value!r}"
    if key == "arch" and value not in ("dncnn", "ffdnet"):
        return f"unknown architecture {value!r}"
    if key == "methods" and not all(m in METHOD_TAGS for m in value):
        return f"unknown method in {value!r}"
    if key in _INTS and key != "seed" and value < 1:
        return f"{key} must be >= 1"
    if key == "seed" and not 0 <= value < 2 ** 64:
        return "seed must be an unsigned 64-bit integer"
    if key in _INT_TUPLES | _FLOAT_TUPLES | _STR_TUPLES and not value:
        return f"{key} must not be empty"
    if key in ("mm_epsilon", "learning_rate", "beta1", "beta2", "adam_epsilon",
               "improvement_delta") and not value > 0:
        return f"{key} must be positive"
    if key in ("beta1", "beta2") and not value < 1:
        return f"{key} must be < 1"
    return None


def _check_consistency(cfg):
    if cfg.T_p is not None and cfg.T_p < cfg.K + 1:
        raise ParseError(f"T_p={cfg.T_p} is shorter than K+1={cfg.K + 1}")
    if cfg.pilot_length >= cfg.T_c:
        raise ParseError(f"pilot length {cfg.pilot_length} must be below T_c={cfg.T_c}")
    paths = [p for p in (cfg.weights, cfg.dncnn_weights, cfg.ffdnet_weights, cfg.dataset,
                         cfg.out_dir) if p is not None]
    resolved = [str(Path(p).resolve()) for p in paths]
    if len(set(resolved)) != len(resolved):
        raise ParseError("configured paths must be distinct")


def _coerce(key, value, lineno=None):
    if key not in KEYS:
        raise UnknownKey(f"unknown key {key!r}", lineno)
    if isinstance(value, str):
        try:
            value = _parse_value(key, value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", lineno) from None
    msg = None if value is None else _validate_value(key, value)
    if msg:
        raise ParseError(msg, lineno)
    return value


def parse_config(text, overrides=None, defaults=None):
    """Parse config text.

    ``defaults`` fill keys the text leaves unset; ``overrides`` replace
    whatever the text says.  Both map keys to strings or typed values.
    """
    values = {key: _coerce(key, v) for key, v in (defaults or {}).items()}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", lineno)
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key in seen:
            raise ParseError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        values[key] = _coerce(key, raw, lineno)
        seen[key] = lineno
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    if "experiment" not in values:
        raise MissingRequired("'experiment' is required")
    cfg = ExperimentConfig(**values)
    _check_consistency(cfg)
    return cfg


def load_config(path, overrides=None, defaults=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides, defaults)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg):
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n"
                   for f in fields(cfg))
