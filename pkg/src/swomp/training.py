"""Training frames, the measurement operator and combined-noise whitening.

Each of the ``M`` training frames uses one analog precoding vector ``f`` (a
single transmit RF chain) and an ``Nr x Lr`` analog combiner ``W`` whose
entries are quantized phases. After compensating the QPSK training symbol,
frame ``m`` observes ``W^H H[k] f + W^H n``, so with the dictionary
``psi = conj(A_T) kron A_R`` the stacked model for every subcarrier is::

    y[k] = phi @ vec(H[k]) + n_c[k] = upsilon @ h_v[k] + n_c[k],   Cov(n_c) = sigma2 * C_w

``C_w`` is block diagonal with the combiner Gram matrices ``W^H W`` on its
diagonal. It is factorized as ``C_w = D_w D_w^H`` with ``D_w`` upper
triangular, so ``D_w^{-1}`` is the whitening transform.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from ._validation import as_generator, check_complex_array, check_positive_int
from .channel import DictionaryPair
from .exceptions import IllConditionedCombinerError, InvalidDimensionError

logger = logging.getLogger(__name__)

DEFAULT_QUANT_BITS = 2


@dataclass(frozen=True)
class TrainingEnsemble:
    """Training precoders ``f`` (M, Nt), combiners ``W`` (M, Nr, Lr) and symbols (M, K)."""

    f: np.ndarray
    W: np.ndarray
    symbols: np.ndarray
    quant_bits: int

    @property
    def num_frames(self):
        return self.f.shape[0]

    @property
    def n_tx(self):
        return self.f.shape[1]

    @property
    def n_rx(self):
        return self.W.shape[1]

    @property
    def n_rf(self):
        return self.W.shape[2]

    @property
    def num_subcarriers(self):
        return self.symbols.shape[1]


def draw_training(rng, M, N_t, N_r, L_r, N_Q=DEFAULT_QUANT_BITS, K=1):
    """Pseudorandom quantized-phase training vectors and QPSK training symbols.

    Phases are i.i.d. uniform over ``{2*pi*q / 2**N_Q}``; precoder entries have
    squared modulus ``1/N_t`` and combiner entries ``1/N_r``.
    """
    M = check_positive_int(M, "M")
    N_t = check_positive_int(N_t, "N_t")
    N_r = check_positive_int(N_r, "N_r")
    L_r = check_positive_int(L_r, "L_r")
    N_Q = check_positive_int(N_Q, "N_Q")
    K = check_positive_int(K, "K")
    rng = as_generator(rng)
    levels = 2 ** N_Q
    f = np.exp(2j * np.pi * rng.integers(levels, size=(M, N_t)) / levels) / np.sqrt(N_t)
    W = np.exp(2j * np.pi * rng.integers(levels, size=(M, N_r, L_r)) / levels) / np.sqrt(N_r)
    symbols = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(4, size=(M, K))))
    return TrainingEnsemble(f=f, W=W, symbols=symbols, quant_bits=N_Q)


def _upper_cholesky(block):
    """Upper-triangular ``U`` with ``block = U @ U^H``.

    Obtained from the ordinary Cholesky factor of the index-reversed matrix.
    """
    rev = block[::-1, ::-1]
    lower = np.linalg.cholesky(rev)
    return np.ascontiguousarray(lower[::-1, ::-1])


def factor_blocks(blocks):
    """Factorize every Hermitian block, retrying once with diagonal jitter."""
    out = np.empty_like(blocks)
    for m, block in enumerate(blocks):
        try:
            out[m] = _upper_cholesky(block)
        except np.linalg.LinAlgError:
            n = block.shape[0]
            jitter = 1e-12 * np.real(np.trace(block)) / n
            logger.warning("combiner Gram block %d not PD, retrying with jitter %.3g", m, jitter)
            try:
                out[m] = _upper_cholesky(block + jitter * np.eye(n))
            except np.linalg.LinAlgError as exc:
                raise IllConditionedCombinerError(f"Gram block {m} is not positive definite") from exc
    return out


@dataclass(frozen=True)
class MeasurementOperator:
    """Stacked training operator shared by all subcarriers.

    Attributes
    ----------
    phi : ndarray or None
        ``(M*Lr, Nt*Nr)``; row block ``m`` is ``f_m^T kron W_m^H``.
    upsilon : ndarray
        ``(M*Lr, Gt*Gr)`` combined matrix ``phi @ psi``.
    chol_blocks : ndarray
        ``(M, Lr, Lr)`` upper-triangular factors with ``W_m^H W_m = U_m U_m^H``.
    upsilon_w : ndarray
        Whitened combined matrix ``D_w^{-1} upsilon``.
    dictionary : DictionaryPair or None
        Source of ``psi``; ``None`` when built from raw matrices.
    """

    phi: Optional[np.ndarray]
    upsilon: np.ndarray
    gram_blocks: np.ndarray
    chol_blocks: np.ndarray
    upsilon_w: np.ndarray
    dictionary: Optional[DictionaryPair] = None

    @property
    def num_frames(self):
        return self.gram_blocks.shape[0]

    @property
    def block_size(self):
        return self.gram_blocks.shape[1]

    @property
    def num_measurements(self):
        return self.upsilon.shape[0]

    @property
    def num_atoms(self):
        return self.upsilon.shape[1]

    @property
    def psi(self):
        if self.dictionary is None:
            raise AttributeError("operator was built without a dictionary")
        return self.dictionary.psi

    @property
    def noise_coupling(self):
        """Dense block-diagonal ``C_w``."""
        return linalg.block_diag(*self.gram_blocks)

    @property
    def chol(self):
        """Dense block-diagonal upper-triangular ``D_w`` with ``C_w = D_w D_w^H``."""
        return linalg.block_diag(*self.chol_blocks)

    def whiten(self, v):
        return whiten(self, v)

    @classmethod
    def from_matrices(cls, upsilon, noise_coupling=None, block_size=None, dictionary=None):
        """Build an operator from a combined matrix and a block-diagonal ``C_w``.

        ``noise_coupling=None`` means white noise (``C_w = I``). ``block_size``
        is inferred from the block structure when omitted.
        """
        upsilon = check_complex_array(upsilon, "upsilon", ndim=2)
        n = upsilon.shape[0]
        if noise_coupling is None:
            blocks = np.ones((n, 1, 1), dtype=complex)
        else:
            C = check_complex_array(noise_coupling, "noise_coupling", shape=(n, n))
            if not np.allclose(C, C.conj().T, atol=1e-12 * np.abs(C).max()):
                raise ValueError("noise_coupling must be Hermitian")
            if block_size is None:
                block_size = _infer_block_size(C)
            if n % block_size:
                raise InvalidDimensionError("block_size does not divide the number of measurements")
            blocks = np.stack([C[i:i + block_size, i:i + block_size] for i in range(0, n, block_size)])
            off = C - linalg.block_diag(*blocks)
            if np.any(np.abs(off) > 1e-12 * np.abs(C).max()):
                raise ValueError("noise_coupling is not block diagonal with the given block size")
        chol_blocks = factor_blocks(blocks)
        upsilon_w = _solve_blocks(chol_blocks, upsilon)
        return cls(phi=None, upsilon=upsilon, gram_blocks=blocks, chol_blocks=chol_blocks,
                   upsilon_w=upsilon_w, dictionary=dictionary)


def _infer_block_size(C):
    n = C.shape[0]
    mask = np.abs(C) > 0
    width = 1
    for i in range(n):
        nz = np.flatnonzero(mask[i])
        width = max(width, nz.max() - i + 1 if nz.size else 1)
    while n % width:
        width += 1
    return width


def _solve_blocks(chol_blocks, v):
    M, Lr, _ = chol_blocks.shape
    vb = v.reshape(M, Lr, -1)
    out = np.empty_like(vb, dtype=np.result_type(v, chol_blocks))
    for m in range(M):
        out[m] = linalg.solve_triangular(chol_blocks[m], vb[m], lower=False, check_finite=False)
    return out.reshape(v.shape)


def build_operator(tr: TrainingEnsemble, dictionary: DictionaryPair):
    """Assemble ``phi``, ``upsilon = phi @ psi``, the noise coupling and its factors.

    ``upsilon`` is formed through the Kronecker mixed-product rule
    ``(f^T kron W^H)(conj(A_T) kron A_R) = (f^T conj(A_T)) kron (W^H A_R)``,
    which avoids materializing ``psi``.
    """
    if dictionary.n_tx != tr.n_tx or dictionary.n_rx != tr.n_rx:
        raise InvalidDimensionError("training and dictionary array sizes differ")
    M, Lr = tr.num_frames, tr.n_rf
    Wh = tr.W.conj().transpose(0, 2, 1)  # (M, Lr, Nr)
    phi = (tr.f[:, None, :, None] * Wh[:, :, None, :]).reshape(M * Lr, tr.n_tx * tr.n_rx)
    a = tr.f @ dictionary.A_tilde_T.conj()  # (M, Gt)
    b = Wh @ dictionary.A_tilde_R  # (M, Lr, Gr)
    upsilon = (a[:, None, :, None] * b[:, :, None, :]).reshape(M * Lr, dictionary.size)
    gram = tr.W.conj().transpose(0, 2, 1) @ tr.W
    chol_blocks = factor_blocks(gram)
    upsilon_w = _solve_blocks(chol_blocks, upsilon)
    return MeasurementOperator(phi=phi, upsilon=upsilon, gram_blocks=gram, chol_blocks=chol_blocks,
                               upsilon_w=upsilon_w, dictionary=dictionary)


def whiten(op: MeasurementOperator, v):
    """``D_w^{-1} v`` by block triangular solves (``v`` is a vector or a column stack)."""
    v = np.asarray(v)
    if v.shape[0] != op.num_measurements:
        raise InvalidDimensionError(f"expected leading dimension {op.num_measurements}, got {v.shape}")
    return _solve_blocks(op.chol_blocks, v)


@dataclass(frozen=True)
class ReceivedEnsemble:
    """Symbol-compensated observations ``y`` with shape ``(K, M*Lr)``.

    ``noise`` is the compensated combined noise actually added and
    ``sigma2_true`` its variance; estimators must not read either outside
    genie mode.
    """

    y: np.ndarray
    sigma2_true: float
    noise: np.ndarray

    @property
    def num_subcarriers(self):
        return self.y.shape[0]


def synthesize_received(ch, tr: TrainingEnsemble, op: MeasurementOperator, sigma2, rng=None, noise=None):
    """Simulate the training phase over all ``K`` subcarriers of ``tr``.

    Per frame ``m`` and subcarrier ``k`` the raw sample is
    ``W_m^H (H[k] f_m s_m[k] + n)`` with ``n ~ CN(0, sigma2 I)``; it is then
    multiplied by ``conj(s_m[k])``.

    Parameters
    ----------
    noise : ndarray, optional
        Pre-drawn unit-variance antenna noise of shape ``(K, M, Nr)``; scaled by
        ``sqrt(sigma2)``. Drawn from ``rng`` when omitted.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    K = tr.num_subcarriers
    M, Nr = tr.num_frames, tr.n_rx
    H = ch.freq_responses(K)  # (K, Nr, Nt)
    if H.shape[1:] != (Nr, tr.n_tx):
        raise InvalidDimensionError("channel and training array sizes differ")
    if noise is None:
        rng = as_generator(rng)
        noise = (rng.standard_normal((K, M, Nr)) + 1j * rng.standard_normal((K, M, Nr))) / np.sqrt(2)
    elif noise.shape != (K, M, Nr):
        raise InvalidDimensionError(f"noise must have shape {(K, M, Nr)}")
    s = tr.symbols.T  # (K, M)
    received = np.einsum("krt,mt->kmr", H, tr.f) * s[:, :, None] + np.sqrt(sigma2) * noise
    raw = np.einsum("mrl,kmr->kml", tr.W.conj(), received)
    comp = raw * s.conj()[:, :, None]
    y = comp.reshape(K, M * tr.n_rf)
    n_c = (np.einsum("mrl,kmr->kml", tr.W.conj(), np.sqrt(sigma2) * noise) * s.conj()[:, :, None])
    return ReceivedEnsemble(y=y, sigma2_true=float(sigma2), noise=n_c.reshape(K, M * tr.n_rf))
