"""Cramer-Rao bounds for the path gains on a known (true) support.

With ``y[k] ~ CN(upsilon_T xi[k], sigma2 C_w)`` the Fisher information of the
complex gains is ``upsilon_T^H (sigma2 C_w)^{-1} upsilon_T``; it is the same
for every subcarrier because the training operator is frequency flat.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import DegenerateSupportError
from .channel import ula_steering
from .training import MeasurementOperator, whiten


@dataclass(frozen=True)
class CrlbReport:
    fim: np.ndarray
    crlb: np.ndarray
    gamma_xi: np.ndarray
    gamma_H: np.ndarray
    ncrlb: float


def fim(op: MeasurementOperator, support, sigma2):
    """Fisher information ``upsilon_T^H (sigma2 C_w)^{-1} upsilon_T`` of the gains on ``support``."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    A = op.upsilon_w[:, np.asarray(support, dtype=np.intp)]
    F = A.conj().T @ A / sigma2
    return 0.5 * (F + F.conj().T)


def crlb(information):
    """Invert a Fisher information matrix through its Cholesky factor.

    Raises :class:`DegenerateSupportError` if the matrix is not positive definite.
    """
    information = np.atleast_2d(information)
    try:
        c, lower = linalg.cho_factor(information, lower=True)
    except linalg.LinAlgError as exc:
        raise DegenerateSupportError("Fisher information is not positive definite") from exc
    d = np.abs(np.diag(c))
    if d.min() <= 1e-8 * d.max():
        raise DegenerateSupportError("Fisher information is numerically singular")
    inv = linalg.cho_solve((c, lower), np.eye(information.shape[0], dtype=information.dtype))
    return 0.5 * (inv + inv.conj().T)


def khatri_rao(A_T, A_R):
    """Column-wise Kronecker product ``conj(A_T) o A_R`` (mapping gains to ``vec(H)``)."""
    A_T = np.asarray(A_T)
    A_R = np.asarray(A_R)
    if A_T.shape[1] != A_R.shape[1]:
        raise ValueError("A_T and A_R need the same number of columns")
    return (A_T.conj()[:, None, :] * A_R[None, :, :]).reshape(-1, A_T.shape[1])


def gamma_channel(bound, A_T_on_support, A_R_on_support):
    """Total variance bound on ``vec(H[k])``: ``trace(B CRLB B^H)`` with ``B = conj(A_T) o A_R``."""
    B = khatri_rao(A_T_on_support, A_R_on_support)
    # trace(B C B^H) = sum(conj(B) * (B C)) without forming the N x N matrix
    val = np.sum((B @ bound) * B.conj()).real
    return float(max(val, 0.0))


def ncrlb(gamma_H, true_channels):
    """``sum_k gamma_H[k] / sum_k ||H[k]||_F^2``."""
    gamma_H = np.broadcast_to(np.asarray(gamma_H, dtype=float), (len(true_channels),))
    energy = float(np.sum(np.abs(np.asarray(true_channels)) ** 2))
    return float(np.sum(gamma_H)) / energy


def crlb_report(op: MeasurementOperator, support, sigma2, true_channels):
    """Everything needed for the NCRLB curve on one realization.

    ``support`` are atom indices into the operator's dictionary; the steering
    matrices on the support are read from that dictionary.
    """
    support = np.asarray(support, dtype=np.intp)
    K = len(true_channels)
    F = fim(op, support, sigma2)
    C = crlb(F)
    t, r = op.dictionary.split_index(support)
    g_H = gamma_channel(C, op.dictionary.A_tilde_T[:, t], op.dictionary.A_tilde_R[:, r])
    gamma_xi = np.full(K, float(np.trace(C).real))
    gamma_H = np.full(K, g_H)
    return CrlbReport(fim=F, crlb=C, gamma_xi=gamma_xi, gamma_H=gamma_H,
                      ncrlb=ncrlb(gamma_H, true_channels))


def path_crlb_report(op: MeasurementOperator, ch, sigma2, K):
    """Bound for the path gains with the true (possibly off-grid) angles known.

    Uses ``upsilon_T = phi @ (conj(A_T) o A_R)`` evaluated at the true AoDs and
    AoAs, so it also applies when the angles are off the dictionary grid.
    """
    if op.phi is None:
        raise AttributeError("operator was built without the raw training matrix phi")
    n_tx = ch.shape[1]
    n_rx = ch.shape[0]
    A_T = ula_steering(np.array([p.aod for p in ch.paths]), n_tx)
    A_R = ula_steering(np.array([p.aoa for p in ch.paths]), n_rx)
    B = khatri_rao(A_T, A_R)
    A_w = whiten(op, op.phi @ B)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    F = A_w.conj().T @ A_w / sigma2
    F = 0.5 * (F + F.conj().T)
    C = crlb(F)
    g_H = gamma_channel(C, A_T, A_R)
    H = ch.freq_responses(K)
    gamma_H = np.full(K, g_H)
    return CrlbReport(fim=F, crlb=C, gamma_xi=np.full(K, float(np.trace(C).real)),
                      gamma_H=gamma_H, ncrlb=ncrlb(gamma_H, H))
