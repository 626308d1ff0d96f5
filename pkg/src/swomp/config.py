"""Simulation configuration and its flat ``key = value`` file format.

Example file::

    # wideband sweep
    K = 16
    M = 80, 120
    snr_grid_dB = -15:10:5
    algorithms = swomp, omp
    seed = 7
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .channel import DEFAULT_ROLLOFF, DEFAULT_SYMBOL_PERIOD, ChannelConfig
from .exceptions import InvalidConfigurationError
from .recovery import RecoveryConfig

ALGORITHMS = ("swomp", "ss-swomp-th", "omp")


def parse_float_list(text):
    """Parse ``"a, b, c"`` or an inclusive range ``"start:stop:step"``."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidConfigurationError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step == 0 or (stop - start) / step < 0:
            raise InvalidConfigurationError(f"empty or infinite range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(n))
    return tuple(float(p) for p in text.split(",") if p.strip())


def parse_int_list(text):
    vals = parse_float_list(text)
    if any(v != int(v) for v in vals):
        raise InvalidConfigurationError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def parse_algorithms(text):
    names = tuple(p.strip() for p in str(text).split(",") if p.strip())
    if names == ("all",):
        return ALGORITHMS
    bad = [n for n in names if n not in ALGORITHMS]
    if bad or not names:
        raise InvalidConfigurationError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS} or 'all'")
    return names


def _parse_optional_float(text):
    text = str(text).strip().lower()
    return None if text in ("", "none", "genie") else float(text)


def _parse_optional_int(text):
    text = str(text).strip().lower()
    return None if text in ("", "none") else int(text)


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo sweep parameters.

    ``epsilon=None`` sets the halting threshold to the true noise variance at
    each SNR point; ``max_iters=None`` means ``2 * N_c * L``.
    """

    N_t: int = 32
    N_r: int = 32
    L_r: int = 4
    L_t: int = 1
    K: int = 16
    N_c: int = 4
    L: int = 4
    G_t: int = 64
    G_r: int = 64
    M: tuple = (80, 120)
    N_Q: int = 2
    rolloff: float = DEFAULT_ROLLOFF
    T_s: float = DEFAULT_SYMBOL_PERIOD
    snr_grid_dB: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0)
    trials: int = 100
    seed: int = 0
    grid_mode: str = "on"
    algorithms: tuple = ALGORITHMS
    epsilon: Optional[float] = None
    max_iters: Optional[int] = None
    k_p: int = 4
    beta: float = 0.025
    sigma2_mode: str = "genie"
    false_alarm: float = 0.05
    N_s: int = 2
    threads: int = 1

    def __post_init__(self):
        for name in ("N_t", "N_r", "L_r", "K", "N_c", "L", "G_t", "G_r", "N_Q", "trials",
                     "k_p", "N_s", "threads"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise InvalidConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.L_t != 1:
            raise InvalidConfigurationError("only L_t = 1 is supported")
        if not self.M or any(int(m) < 1 for m in self.M):
            raise InvalidConfigurationError("M must be a non-empty list of positive integers")
        if not self.snr_grid_dB or not all(math.isfinite(s) for s in self.snr_grid_dB):
            raise InvalidConfigurationError("snr_grid_dB must be a non-empty list of finite values")
        if self.N_c > self.K:
            raise InvalidConfigurationError(f"N_c={self.N_c} exceeds K={self.K}")
        if self.N_s > min(self.N_t, self.N_r):
            raise InvalidConfigurationError("N_s exceeds min(N_t, N_r)")
        if self.k_p > self.K:
            raise InvalidConfigurationError("k_p exceeds K")
        if self.seed < 0:
            raise InvalidConfigurationError("seed must be non-negative")
        if self.epsilon is not None and self.epsilon < 0:
            raise InvalidConfigurationError("epsilon must be non-negative")
        parse_algorithms(",".join(self.algorithms))
        # surface channel and recovery parameter errors at construction time
        self.channel_config()
        self.recovery_config(1.0)

    def channel_config(self):
        return ChannelConfig(n_tx=self.N_t, n_rx=self.N_r, n_paths=self.L, n_taps=self.N_c,
                             symbol_period=self.T_s, rolloff=self.rolloff, grid_mode=self.grid_mode)

    def recovery_config(self, sigma2):
        """Solver settings for noise variance ``sigma2``."""
        eps = sigma2 if self.epsilon is None else self.epsilon
        max_iters = 2 * self.N_c * self.L if self.max_iters is None else self.max_iters
        return RecoveryConfig(epsilon=eps, max_iters=max_iters, k_p=self.k_p, beta=self.beta,
                              sigma2_mode=self.sigma2_mode, false_alarm=self.false_alarm)

    def with_overrides(self, **changes):
        """Copy with the non-``None`` entries of ``changes`` applied."""
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    def metadata(self):
        """Ordered ``(key, value)`` pairs describing the results.

        ``threads`` is left out because it never changes the output.
        """
        out = []
        for k, v in asdict(self).items():
            if k == "threads":
                continue
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            out.append((k, _fmt(v) if not isinstance(v, str) else v))
        return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {
    "M": parse_int_list,
    "snr_grid_dB": parse_float_list,
    "algorithms": parse_algorithms,
    "epsilon": _parse_optional_float,
    "max_iters": _parse_optional_int,
    "grid_mode": lambda s: str(s).strip(),
    "sigma2_mode": lambda s: str(s).strip(),
}


def parse_value(key, text):
    """Convert the string ``text`` to the type of :class:`SimConfig` field ``key``."""
    names = {f.name: f for f in fields(SimConfig)}
    if key not in names:
        raise InvalidConfigurationError(f"unknown configuration key {key!r}")
    try:
        if key in _PARSERS:
            return _PARSERS[key](text)
        default = names[key].default
        if isinstance(default, bool):
            return str(text).strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(str(text).strip())
        return float(str(text).strip())
    except InvalidConfigurationError:
        raise
    except ValueError as exc:
        raise InvalidConfigurationError(f"bad value for {key}: {text!r}") from exc


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict of typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise InvalidConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = parse_value(key, val)
    return values


def load_config(path=None, **overrides):
    """Read a config file (optional) and apply non-``None`` overrides."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise InvalidConfigurationError(str(exc)) from exc


def dump_config(cfg: SimConfig):
    """Serialize ``cfg`` in the same format :func:`parse_config_text` reads."""
    lines = []
    for k, v in cfg.metadata():
        lines.append(f"{k} = {'none' if v == 'None' else v}")
    return "\n".join(lines) + "\n"
