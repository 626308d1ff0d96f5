"""Geometric frequency-selective mmWave MIMO channels.

Channels are built from ``L`` discrete paths observed through uniform linear
arrays with half-wavelength spacing and a raised-cosine band-limiting filter::

    H_d = sqrt(Nt*Nr / (L*rho)) * sum_l alpha_l * p_rc(d*Ts - tau_l) * a_R(phi_l) a_T(theta_l)^H
    H[k] = sum_d H_d * exp(-2j*pi*k*d / K)

All vectorisations in the package are column-major (``order="F"``), so that
``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from ._validation import as_generator, check_positive_int
from .exceptions import InvalidConfigurationError, InvalidDimensionError, UnsupportedModeError

# 802.11ad symbol period, as quoted (the unit only scales delays).
DEFAULT_SYMBOL_PERIOD = 1.0 / 1760
DEFAULT_ROLLOFF = 0.8


def ula_steering(angle, n):
    """Half-wavelength ULA response, ``sqrt(1/n) * exp(1j*m*pi*cos(angle))``.

    ``angle`` may be a scalar (returns shape ``(n,)``) or an array of angles
    (returns shape ``(n, len(angle))``, one column per angle).
    """
    n = check_positive_int(n, "n")
    angle = np.asarray(angle, dtype=float)
    m = np.arange(n)
    phase = np.pi * np.multiply.outer(m, np.cos(angle))
    return np.exp(1j * phase) / math.sqrt(n)


def raised_cosine(t, Ts, rolloff=DEFAULT_ROLLOFF):
    """Raised-cosine impulse response evaluated at ``t`` (scalar or array).

    ``p(t) = sinc(t/Ts) cos(pi*b*t/Ts) / (1 - (2*b*t/Ts)**2)`` with the removable
    singularity at ``|t| = Ts/(2b)`` replaced by ``(pi/4) sinc(1/(2b))``.
    """
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    x = np.asarray(t, dtype=float) / Ts
    if rolloff == 0.0:
        out = np.sinc(x)
        return out if out.ndim else float(out)
    denom = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.abs(denom) < 1e-10
    safe = np.where(singular, 1.0, denom)
    out = np.where(
        singular,
        (np.pi / 4) * np.sinc(1.0 / (2.0 * rolloff)),
        np.sinc(x) * np.cos(np.pi * rolloff * x) / safe,
    )
    return out if out.ndim else float(out)


@functools.lru_cache(maxsize=32)
def pulse_energy(num_taps, rolloff=DEFAULT_ROLLOFF):
    """Mean of ``sum_d p_rc(d*Ts - tau)**2`` for ``tau ~ U[0, (num_taps-1)*Ts]``.

    By Parseval this is also the subcarrier average of ``|sum_d p_rc(d*Ts - tau) e^{-j2pi kd/K}|**2``
    (for ``num_taps <= K``), i.e. the energy the sampled pulse contributes to
    ``E_k ||H[k]||_F^2``. The result does not depend on ``Ts``.
    """
    num_taps = check_positive_int(num_taps, "num_taps")
    if num_taps == 1:
        return float(raised_cosine(0.0, 1.0, rolloff) ** 2)
    span = num_taps - 1
    total = 0.0
    for d in range(num_taps):
        val, _ = integrate.quad(lambda x: raised_cosine(d - x, 1.0, rolloff) ** 2, 0.0, span,
                                limit=200, epsabs=1e-13, epsrel=1e-12)
        total += val
    return total / span


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array with half-wavelength element spacing."""

    num_antennas: int
    element_spacing: float = field(default=0.5, init=False)

    def __post_init__(self):
        check_positive_int(self.num_antennas, "num_antennas")

    def steering(self, angle):
        return ula_steering(angle, self.num_antennas)


@dataclass(frozen=True)
class PathParams:
    gain: complex
    delay: float
    aoa: float
    aod: float


@dataclass(frozen=True)
class DictionaryPair:
    """Transmit/receive dictionaries sampled on a grid uniform in ``cos(angle)``.

    The grid holds the spatial frequencies ``1 - 2g/G`` (``g = 0..G-1``), so
    the angles ``arccos(.)`` increase from 0 and stay inside ``[0, pi)``.
    """

    grid_tx: np.ndarray
    grid_rx: np.ndarray
    A_tilde_T: np.ndarray
    A_tilde_R: np.ndarray

    @property
    def n_tx(self):
        return self.A_tilde_T.shape[0]

    @property
    def n_rx(self):
        return self.A_tilde_R.shape[0]

    @property
    def G_t(self):
        return self.grid_tx.size

    @property
    def G_r(self):
        return self.grid_rx.size

    @property
    def size(self):
        return self.G_t * self.G_r

    @functools.cached_property
    def psi(self):
        """Dense ``conj(A_T) kron A_R`` of shape ``(Nt*Nr, Gt*Gr)``."""
        return np.kron(self.A_tilde_T.conj(), self.A_tilde_R)

    def atom_index(self, tx_index, rx_index):
        """Linear column index of the (AoD, AoA) grid pair in ``psi``."""
        return np.asarray(tx_index) * self.G_r + np.asarray(rx_index)

    def split_index(self, index):
        """Inverse of :meth:`atom_index`: returns ``(tx_index, rx_index)``."""
        return np.divmod(np.asarray(index), self.G_r)

    def psi_columns(self, index):
        """Columns of ``psi`` for the given atom indices without forming ``psi``."""
        t, r = self.split_index(np.atleast_1d(index))
        At = self.A_tilde_T[:, t].conj()
        Ar = self.A_tilde_R[:, r]
        # column j is kron(At[:, j], Ar[:, j])
        return (At[:, None, :] * Ar[None, :, :]).reshape(-1, t.size)

    def locate(self, aod, aoa, atol=1e-12):
        """Grid indices of an (AoD, AoA) pair, or ``None`` if it is off the grid."""
        t = np.flatnonzero(np.abs(self.grid_tx - aod) <= atol)
        r = np.flatnonzero(np.abs(self.grid_rx - aoa) <= atol)
        if t.size == 0 or r.size == 0:
            return None
        return int(t[0]), int(r[0])


def grid_angles(G):
    G = check_positive_int(G, "grid size")
    return np.arccos(1.0 - 2.0 * np.arange(G) / G)


def build_dictionary(N_t, N_r, G_t, G_r):
    """Steering-vector dictionaries for the extended virtual channel model."""
    N_t = check_positive_int(N_t, "N_t")
    N_r = check_positive_int(N_r, "N_r")
    grid_tx = grid_angles(G_t)
    grid_rx = grid_angles(G_r)
    return DictionaryPair(grid_tx=grid_tx, grid_rx=grid_rx,
                          A_tilde_T=ula_steering(grid_tx, N_t),
                          A_tilde_R=ula_steering(grid_rx, N_r))


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int = 32
    n_rx: int = 32
    n_paths: int = 4
    n_taps: int = 4
    symbol_period: float = DEFAULT_SYMBOL_PERIOD
    rolloff: float = DEFAULT_ROLLOFF
    pathloss: float = 1.0
    grid_mode: str = "on"
    normalize_pulse_energy: bool = True

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_paths", "n_taps"):
            check_positive_int(getattr(self, name), name)
        if self.grid_mode not in ("on", "off"):
            raise InvalidConfigurationError(f"grid_mode must be 'on' or 'off', got {self.grid_mode!r}")
        if self.symbol_period <= 0 or self.pathloss <= 0:
            raise InvalidConfigurationError("symbol_period and pathloss must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise InvalidConfigurationError("rolloff must lie in [0, 1]")


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple
    taps: np.ndarray
    symbol_period: float
    pathloss: float
    scale: float
    rolloff: float = DEFAULT_ROLLOFF
    on_grid: bool = False

    @property
    def num_taps(self):
        return self.taps.shape[0]

    @property
    def shape(self):
        return self.taps.shape[1:]

    def tap_profile(self, K):
        """``(L, K)`` array of ``sum_d p_rc(d*Ts - tau_l) e^{-j 2pi k d/K}``."""
        d = np.arange(self.num_taps)
        delays = np.array([p.delay for p in self.paths])
        P = raised_cosine(d[None, :] * self.symbol_period - delays[:, None], self.symbol_period, self.rolloff)
        return P @ _dft_phasors(self.num_taps, K)

    def freq_response(self, k, K):
        return freq_response(self, k, K)

    def freq_responses(self, K):
        """All ``K`` subcarrier responses stacked into shape ``(K, Nr, Nt)``."""
        _check_taps_vs_fft(self.num_taps, K)
        F = _dft_phasors(self.num_taps, K)
        return np.tensordot(F, self.taps, axes=([0], [0]))


def _dft_phasors(num_taps, K):
    # (num_taps, K) matrix of exp(-j 2 pi k d / K)
    return np.exp(-2j * np.pi * np.outer(np.arange(num_taps), np.arange(K)) / K)


def _check_taps_vs_fft(num_taps, K):
    K = check_positive_int(K, "K")
    if num_taps > K:
        raise InvalidConfigurationError(f"N_c={num_taps} exceeds the FFT size K={K}")
    return K


def draw_channel(cfg: ChannelConfig, rng=None, dictionary: Optional[DictionaryPair] = None):
    """Draw one channel realization.

    In on-grid mode the AoAs and AoDs are drawn without replacement from the
    dictionary grids (``dictionary`` is required); otherwise they are uniform
    on ``[0, pi)``. Gains are ``CN(0, 1/E_p)`` where ``E_p`` is
    :func:`pulse_energy`, so that the subcarrier-averaged channel energy is
    ``Nt*Nr/rho`` in expectation.
    """
    rng = as_generator(rng)
    L = cfg.n_paths
    Ts = cfg.symbol_period
    if cfg.grid_mode == "on":
        if dictionary is None:
            raise InvalidConfigurationError("on-grid channels need a dictionary")
        if L > dictionary.G_t or L > dictionary.G_r:
            raise InvalidConfigurationError("more paths than grid points")
        if dictionary.n_tx != cfg.n_tx or dictionary.n_rx != cfg.n_rx:
            raise InvalidDimensionError("dictionary array sizes do not match the channel")
        aod = dictionary.grid_tx[rng.choice(dictionary.G_t, size=L, replace=False)]
        aoa = dictionary.grid_rx[rng.choice(dictionary.G_r, size=L, replace=False)]
    else:
        aod = rng.uniform(0.0, np.pi, size=L)
        aoa = rng.uniform(0.0, np.pi, size=L)
    delays = rng.uniform(0.0, (cfg.n_taps - 1) * Ts, size=L)
    var = 1.0 / pulse_energy(cfg.n_taps, cfg.rolloff) if cfg.normalize_pulse_energy else 1.0
    gains = math.sqrt(var / 2) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))

    scale = math.sqrt(cfg.n_tx * cfg.n_rx / (L * cfg.pathloss))
    A_R = ula_steering(aoa, cfg.n_rx)
    A_T = ula_steering(aod, cfg.n_tx)
    d = np.arange(cfg.n_taps)
    P = raised_cosine(d[:, None] * Ts - delays[None, :], Ts, cfg.rolloff)  # (N_c, L)
    taps = scale * np.einsum("rl,dl,tl->drt", A_R, P * gains[None, :], A_T.conj())
    paths = tuple(PathParams(complex(g), float(t), float(r), float(a))
                  for g, t, r, a in zip(gains, delays, aoa, aod))
    return ChannelRealization(paths=paths, taps=taps, symbol_period=Ts, pathloss=cfg.pathloss,
                              scale=scale, rolloff=cfg.rolloff, on_grid=cfg.grid_mode == "on")


def freq_response(ch: ChannelRealization, k, K):
    """Channel matrix ``H[k] = sum_d H_d exp(-j 2 pi k d / K)``."""
    K = _check_taps_vs_fft(ch.num_taps, K)
    if not 0 <= k < K:
        raise InvalidDimensionError(f"subcarrier index {k} outside [0, {K})")
    phasors = np.exp(-2j * np.pi * k * np.arange(ch.num_taps) / K)
    return np.tensordot(phasors, ch.taps, axes=([0], [0]))


def _grid_indices(ch, dictionary):
    if not ch.on_grid:
        raise UnsupportedModeError("off-grid channels have no exact sparse representation")
    out = []
    for p in ch.paths:
        loc = dictionary.locate(p.aod, p.aoa)
        if loc is None:
            raise UnsupportedModeError(f"path angles ({p.aod}, {p.aoa}) are not on the dictionary grid")
        out.append(loc)
    return out


def true_support(ch, dictionary):
    """Sorted atom indices carrying the channel (colliding paths are merged)."""
    idx = [dictionary.atom_index(t, r) for t, r in _grid_indices(ch, dictionary)]
    return np.unique(np.asarray(idx, dtype=np.intp))


def sparse_vectors(ch, dictionary, K):
    """``(K, Gt*Gr)`` array whose row ``k`` is ``h_v[k]`` with ``psi @ h_v[k] = vec(H[k])``."""
    K = _check_taps_vs_fft(ch.num_taps, K)
    locs = _grid_indices(ch, dictionary)
    profile = ch.tap_profile(K)  # (L, K)
    gains = np.array([p.gain for p in ch.paths])
    h = np.zeros((K, dictionary.size), dtype=complex)
    for ell, (t, r) in enumerate(locs):
        # colliding paths accumulate
        h[:, dictionary.atom_index(t, r)] += ch.scale * gains[ell] * profile[ell]
    return h


def true_sparse_vector(ch, dictionary, k, K):
    """The on-grid sparse vector ``h_v[k] = vec(Delta[k])`` for one subcarrier."""
    K = _check_taps_vs_fft(ch.num_taps, K)
    if not 0 <= k < K:
        raise InvalidDimensionError(f"subcarrier index {k} outside [0, {K})")
    return sparse_vectors(ch, dictionary, K)[k]
