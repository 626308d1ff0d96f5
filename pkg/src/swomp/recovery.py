"""Sparse recovery of the virtual channel vectors ``h_v[k]``.

Three greedy solvers share the same building blocks:

* :func:`swomp` -- simultaneous weighted OMP. One support for all subcarriers,
  atoms chosen by the summed magnitude of the whitened correlations
  ``c[k] = upsilon_w^H D_w^{-1} r[k]``, gains refit by weighted least squares.
* :func:`ss_swomp_th` -- the same loop, but the correlation sum only runs over
  the ``k_p`` strongest subcarriers, followed by pruning of atoms whose average
  power falls below ``beta * P*``.
* :func:`omp_per_subcarrier` -- the baseline: an independent, unweighted OMP
  per subcarrier.

Data are passed as ``y`` with shape ``(K, M*Lr)`` (one row per subcarrier).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from ._validation import check_complex_array
from .exceptions import InvalidConfigurationError, InvalidDimensionError, SingularSupportError
from .training import MeasurementOperator, whiten

# relative pivot size below which a support is declared rank deficient
RANK_TOL = 1e-10


@dataclass
class OpCounter:
    """Complex multiply-accumulate counts, bucketed by algorithm stage."""

    projection: int = 0
    selection: int = 0
    wls: int = 0
    residual: int = 0
    mse: int = 0
    whitening: int = 0
    thresholding: int = 0
    iterations: int = 0
    # projection MACs of each iteration, in order
    projection_per_iteration: list = field(default_factory=list)

    @property
    def total(self):
        return (self.projection + self.selection + self.wls + self.residual
                + self.mse + self.whitening + self.thresholding)

    def add_projection(self, n):
        self.projection += n
        self.projection_per_iteration.append(n)


@dataclass(frozen=True)
class RecoveryConfig:
    """Halting and tuning parameters shared by the solvers.

    Parameters
    ----------
    epsilon : float
        Halting threshold on the weighted residual MSE (genie mode sets it to
        the true noise variance).
    max_iters : int, optional
        Cap on the support size; ``None`` means the number of measurements.
    k_p : int
        Number of subcarriers used for atom selection in :func:`ss_swomp_th`.
    beta : float
        Pruning fraction of the strongest average atom power.
    sigma2_mode : {"genie", "estimated"}
        ``"estimated"`` ignores ``epsilon`` and stops once the newest atom
        removes no more energy than the strongest of the remaining atoms would
        remove from noise alone, at false-alarm level ``false_alarm``.
    """

    epsilon: float = 0.0
    max_iters: Optional[int] = None
    k_p: int = 4
    beta: float = 0.025
    sigma2_mode: str = "genie"
    false_alarm: float = 0.05

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidConfigurationError("epsilon must be non-negative")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidConfigurationError("max_iters must be >= 1")
        if self.k_p < 1:
            raise InvalidConfigurationError("k_p must be >= 1")
        if not 0.0 < self.beta < 1.0:
            raise InvalidConfigurationError("beta must lie in (0, 1)")
        if self.sigma2_mode not in ("genie", "estimated"):
            raise InvalidConfigurationError(f"unknown sigma2_mode {self.sigma2_mode!r}")
        if not 0.0 < self.false_alarm < 1.0:
            raise InvalidConfigurationError("false_alarm must lie in (0, 1)")


@dataclass
class SparseEstimate:
    """Output of a sparse recovery run.

    ``support`` is the common support (for the per-subcarrier baseline, the
    union of the individual supports); ``supports[k]`` and ``gains[k]`` are the
    support and gains actually used for subcarrier ``k``.
    """

    support: np.ndarray
    supports: tuple
    gains: tuple
    iterations: int
    residual_mse_trace: np.ndarray
    sigma2_hat: float
    ops: OpCounter
    common_support: bool = True
    selected_subcarriers: Optional[np.ndarray] = None
    channel: Optional[np.ndarray] = None

    @property
    def num_subcarriers(self):
        return len(self.gains)

    def coef(self, num_atoms):
        """Dense ``(K, num_atoms)`` matrix of sparse vectors."""
        out = np.zeros((len(self.gains), num_atoms), dtype=complex)
        for k, (s, g) in enumerate(zip(self.supports, self.gains)):
            out[k, s] = g
        return out


def _check_y(y, op):
    y = check_complex_array(y, "y", ndim=2)
    if y.shape[1] != op.num_measurements:
        if y.shape[0] == op.num_measurements and y.ndim == 2:
            raise InvalidDimensionError(
                f"y must have shape (K, {op.num_measurements}); got {y.shape} (transposed?)")
        raise InvalidDimensionError(f"y must have {op.num_measurements} columns, got {y.shape}")
    return y


def _ls_fit(A, B, counter=None):
    """Least-squares ``X`` minimizing ``||A X - B||_F`` via thin QR."""
    n, j = A.shape
    if j == 0:
        return np.zeros((0, B.shape[1]), dtype=complex)
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= RANK_TOL * max(diag.max(), np.finfo(float).tiny):
        raise SingularSupportError("selected atoms are linearly dependent (duplicate or near-duplicate columns)")
    X = linalg.solve_triangular(R, Q.conj().T @ B, lower=False, check_finite=False)
    if counter is not None:
        K = B.shape[1]
        counter.wls += n * j * j + n * j * K + j * j * K
    return X


def wls_gains(op: MeasurementOperator, support, y):
    """Weighted least-squares (MVU) gains on a fixed support.

    Solves ``(U_T^H C_w^{-1} U_T)^{-1} U_T^H C_w^{-1} y[k]`` for every row of
    ``y`` via the whitened problem; ``sigma2`` is not needed. Returns an array
    of shape ``(K, |support|)`` (or ``(|support|,)`` for a single vector).
    """
    support = np.asarray(support, dtype=np.intp)
    y = np.asarray(y)
    single = y.ndim == 1
    Y = _check_y(y[None, :] if single else y, op)
    if support.size != np.unique(support).size:
        raise SingularSupportError("support contains repeated atoms")
    X = _ls_fit(op.upsilon_w[:, support], whiten(op, Y.T))
    return X[:, 0] if single else X.T


def estimate_sigma2(op: MeasurementOperator, support, y):
    """Maximum-likelihood noise variance per subcarrier and its pooled average.

    Returns
    -------
    per_k : ndarray, shape (K,)
        ``(1/(M Lr)) r[k]^H C_w^{-1} r[k]`` with the WLS residual ``r[k]``.
    pooled : float
        Arithmetic mean of ``per_k`` (the BLUE combination).
    """
    support = np.asarray(support, dtype=np.intp)
    Y = _check_y(np.atleast_2d(y), op)
    Yw = whiten(op, Y.T)
    A = op.upsilon_w[:, support]
    R = Yw - A @ _ls_fit(A, Yw)
    per_k = np.sum(np.abs(R) ** 2, axis=0) / op.num_measurements
    return per_k, float(np.mean(per_k))


def _noise_energy_threshold(num_subcarriers, num_candidates, false_alarm):
    # Upper (1 - false_alarm) bound on the largest of num_candidates Gamma(K, 1)
    # variables (Laurent-Massart chi-square tail plus a union bound).
    x = math.log(max(num_candidates, 1) / false_alarm)
    return num_subcarriers + math.sqrt(2.0 * num_subcarriers * x) + x


def _simultaneous_pursuit(A_w, Y_w, cfg, proj_cols, counter):
    """Greedy common-support loop on whitened data ``Y_w`` of shape ``(n, K)``."""
    n, G = A_w.shape
    K = Y_w.shape[1]
    max_iters = min(cfg.max_iters or n, n, G)
    estimated = cfg.sigma2_mode == "estimated"

    support: list = []
    X = np.zeros((0, K), dtype=complex)
    R = Y_w
    mse = float(np.vdot(R, R).real) / (K * n)
    counter.mse += n * K
    trace = [mse]
    selected = np.zeros(G, dtype=bool)
    A_h = A_w.conj().T
    while len(support) < max_iters and (estimated or mse > cfg.epsilon):
        C = A_h @ R[:, proj_cols]
        counter.add_projection(G * n * len(proj_cols))
        score = np.abs(C).sum(axis=1)
        counter.selection += G * len(proj_cols)
        score[selected] = -np.inf
        p = int(np.argmax(score))
        trial = support + [p]
        A_T = A_w[:, trial]
        X_new = _ls_fit(A_T, Y_w, counter)
        R_new = Y_w - A_T @ X_new
        counter.residual += n * len(trial) * K
        mse_new = float(np.vdot(R_new, R_new).real) / (K * n)
        counter.mse += n * K
        if estimated:
            removed = K * n * (mse - mse_new)
            tau = _noise_energy_threshold(K, G - len(support), cfg.false_alarm)
            if removed <= tau * mse_new:
                break
        support, X, R, mse = trial, X_new, R_new, mse_new
        selected[p] = True
        trace.append(mse)
        counter.iterations += 1
    return np.asarray(support, dtype=np.intp), X, mse, np.asarray(trace)


def _common_estimate(support, X, mse, trace, counter, selected_subcarriers=None):
    K = X.shape[1]
    gains = tuple(np.ascontiguousarray(X[:, k]) for k in range(K))
    return SparseEstimate(support=support, supports=tuple(support for _ in range(K)), gains=gains,
                          iterations=counter.iterations, residual_mse_trace=trace, sigma2_hat=mse,
                          ops=counter, common_support=True, selected_subcarriers=selected_subcarriers)


def swomp(y, op: MeasurementOperator, cfg: RecoveryConfig):
    """Simultaneous weighted OMP over all ``K`` subcarriers.

    Each iteration correlates the whitened residuals with the whitened
    dictionary, adds the atom with the largest summed correlation magnitude
    (lowest index on ties, never an atom already chosen), refits the gains by
    WLS and stops once the weighted MSE ``(1/(K M Lr)) sum_k r^H C_w^{-1} r``
    drops to ``cfg.epsilon`` or the support reaches ``max_iters``.
    ``sigma2_hat`` of the result is the pooled ML noise variance, which for
    the final support coincides with the final MSE.
    """
    Y = _check_y(y, op)
    counter = OpCounter()
    Y_w = whiten(op, Y.T)
    counter.whitening += op.num_measurements * op.block_size * Y.shape[0]
    support, X, mse, trace = _simultaneous_pursuit(op.upsilon_w, Y_w, cfg, np.arange(Y.shape[0]), counter)
    return _common_estimate(support, X, mse, trace, counter)


def strongest_subcarriers(y, k_p):
    """Indices of the ``k_p`` rows of ``y`` with largest l2 norm (ties: lowest index)."""
    norms = np.sum(np.abs(y) ** 2, axis=1)
    return np.sort(np.argsort(-norms, kind="stable")[:k_p])


def threshold_support(support, X, beta):
    """Keep atoms whose subcarrier-averaged power is at least ``beta`` times the maximum.

    ``X`` holds the gains with shape ``(|support|, K)``. Returns the pruned
    support and gains, preserving order.
    """
    if len(support) == 0:
        return support, X
    p_av = np.mean(np.abs(X) ** 2, axis=1)
    keep = p_av >= beta * p_av.max()
    return support[keep], X[keep]


def ss_swomp_th(y, op: MeasurementOperator, cfg: RecoveryConfig):
    """Subcarrier-selection SW-OMP followed by power thresholding.

    Atom selection only sums correlations over the ``cfg.k_p`` subcarriers with
    the strongest received vectors; the WLS refit, residual and MSE use all
    subcarriers. After halting, atoms with average power below
    ``cfg.beta * P*`` are removed from the common support.
    """
    Y = _check_y(y, op)
    K = Y.shape[0]
    if cfg.k_p > K:
        raise InvalidConfigurationError(f"k_p={cfg.k_p} exceeds the number of subcarriers {K}")
    counter = OpCounter()
    chosen = strongest_subcarriers(Y, cfg.k_p)
    counter.selection += K * op.num_measurements
    Y_w = whiten(op, Y.T)
    counter.whitening += op.num_measurements * op.block_size * K
    support, X, mse, trace = _simultaneous_pursuit(op.upsilon_w, Y_w, cfg, chosen, counter)
    support, X = threshold_support(support, X, cfg.beta)
    counter.thresholding += K * len(support)
    return _common_estimate(support, X, mse, trace, counter, selected_subcarriers=chosen)


def omp_per_subcarrier(y, op: MeasurementOperator, cfg: RecoveryConfig):
    """Baseline: independent unweighted OMP with least-squares refit per subcarrier.

    Subcarrier ``k`` stops when ``||r[k]||^2 / (M Lr) <= cfg.epsilon``. The
    returned ``residual_mse_trace`` averages the per-subcarrier MSEs, holding
    each finished subcarrier at its final value.
    """
    Y = _check_y(y, op)
    K, n = Y.shape
    A = op.upsilon
    G = A.shape[1]
    A_h = A.conj().T
    max_iters = min(cfg.max_iters or n, n, G)
    estimated = cfg.sigma2_mode == "estimated"
    counter = OpCounter()

    supports = [[] for _ in range(K)]
    gains = [np.zeros(0, dtype=complex) for _ in range(K)]
    R = Y.T.copy()  # (n, K)
    mse = np.sum(np.abs(R) ** 2, axis=0) / n
    counter.mse += n * K
    selected = np.zeros((K, G), dtype=bool)
    active = [k for k in range(K) if estimated or mse[k] > cfg.epsilon]
    trace = [float(mse.mean())]
    while active:
        C = A_h @ R[:, active]
        counter.add_projection(G * n * len(active))
        counter.selection += G * len(active)
        still = []
        added = False
        for col, k in enumerate(active):
            score = np.abs(C[:, col])
            score[selected[k]] = -np.inf
            p = int(np.argmax(score))
            trial = supports[k] + [p]
            A_T = A[:, trial]
            x = _ls_fit(A_T, Y[k][:, None], counter)[:, 0]
            r = Y[k] - A_T @ x
            counter.residual += n * len(trial)
            m_new = float(np.vdot(r, r).real) / n
            counter.mse += n
            if estimated:
                tau = _noise_energy_threshold(1, G - len(supports[k]), cfg.false_alarm)
                if n * (mse[k] - m_new) <= tau * m_new:
                    continue
            supports[k], gains[k], R[:, k], mse[k] = trial, x, r, m_new
            selected[k, p] = True
            added = True
            if len(trial) < max_iters and (estimated or m_new > cfg.epsilon):
                still.append(k)
        active = still
        if added:
            trace.append(float(mse.mean()))
            counter.iterations += 1
    supports = tuple(np.asarray(s, dtype=np.intp) for s in supports)
    union = np.unique(np.concatenate(supports)) if K else np.zeros(0, dtype=np.intp)
    return SparseEstimate(support=union.astype(np.intp), supports=supports, gains=tuple(gains),
                          iterations=max((s.size for s in supports), default=0),
                          residual_mse_trace=np.asarray(trace), sigma2_hat=float(mse.mean()),
                          ops=counter, common_support=False)


def reconstruct_channel(op: MeasurementOperator, estimate: SparseEstimate, n_rx=None, n_tx=None):
    """Antenna-domain channel estimates, shape ``(K, Nr, Nt)``.

    ``vec(H_hat[k]) = psi[:, support_k] @ gains[k]``, unvectorized column-major.
    """
    dictionary = op.dictionary
    if dictionary is None:
        raise AttributeError("operator was built without a dictionary")
    n_rx = n_rx or dictionary.n_rx
    n_tx = n_tx or dictionary.n_tx
    out = np.zeros((estimate.num_subcarriers, n_rx, n_tx), dtype=complex)
    if estimate.common_support:
        if estimate.support.size:
            cols = dictionary.psi_columns(estimate.support)
            G = np.stack(estimate.gains, axis=1)  # (|T|, K)
            out[:] = (cols @ G).T.reshape(-1, n_tx, n_rx).transpose(0, 2, 1)
        return out
    for k, (s, g) in enumerate(zip(estimate.supports, estimate.gains)):
        if s.size:
            out[k] = unvec(dictionary.psi_columns(s) @ g, n_rx, n_tx)
    return out


def vec(X):
    """Column-major vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, n_rows, n_cols):
    """Inverse of :func:`vec`."""
    return np.asarray(x).reshape((n_rows, n_cols), order="F")
