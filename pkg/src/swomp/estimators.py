"""scikit-learn style wrappers around the sparse channel estimators.

The conventions follow :class:`sklearn.linear_model.OrthogonalMatchingPursuit`
with multiple targets: ``X`` is the ``(n_measurements, n_atoms)`` combined
matrix ``upsilon``, ``y`` holds one column per subcarrier, and after fitting
``coef_`` has shape ``(n_subcarriers, n_atoms)`` so that
``predict(X) == X @ coef_.T``.

>>> est = SWOMP(epsilon=sigma2).fit(upsilon, Y, noise_coupling=C_w)  # doctest: +SKIP
>>> est.support_, est.coef_.shape                                   # doctest: +SKIP
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_array
from .exceptions import InvalidDimensionError
from .recovery import RecoveryConfig, omp_per_subcarrier, ss_swomp_th, swomp
from .training import MeasurementOperator


class _SparseChannelEstimator(RegressorMixin, BaseEstimator):
    _solver = None

    def _config(self):
        raise NotImplementedError

    def fit(self, X, y, noise_coupling=None, block_size=None):
        """Recover a sparse coefficient vector per column of ``y``.

        Parameters
        ----------
        X : array_like, shape (n_measurements, n_atoms)
            Combined measurement matrix.
        y : array_like, shape (n_measurements,) or (n_measurements, n_subcarriers)
        noise_coupling : array_like, shape (n_measurements, n_measurements), optional
            Block-diagonal noise coupling ``C_w``; white noise when omitted.
        block_size : int, optional
            Size of the diagonal blocks of ``noise_coupling``.
        """
        op = MeasurementOperator.from_matrices(X, noise_coupling, block_size)
        return self._fit_operator(op, y)

    def fit_operator(self, op, y):
        """Fit against a prebuilt :class:`MeasurementOperator`; ``y`` as in :meth:`fit`."""
        return self._fit_operator(op, y)

    def _fit_operator(self, op, y):
        Y = check_complex_array(y, "y", ndim=None)
        self._single_target = Y.ndim == 1
        Y = Y[:, None] if Y.ndim == 1 else Y
        if Y.ndim != 2 or Y.shape[0] != op.num_measurements:
            raise InvalidDimensionError(
                f"y must have {op.num_measurements} rows (one column per subcarrier), got {Y.shape}")
        est = type(self)._solver(Y.T, op, self._config())
        coef = est.coef(op.num_atoms)
        self.estimate_ = est
        self.coef_ = coef[0] if self._single_target else coef
        self.support_ = est.support
        self.n_iter_ = est.iterations
        self.mse_path_ = est.residual_mse_trace
        self.sigma2_ = est.sigma2_hat
        self.n_features_in_ = op.num_atoms
        return self

    def predict(self, X):
        """Noiseless measurements ``X @ coef_.T`` implied by the fitted coefficients."""
        check_is_fitted(self, "coef_")
        X = check_complex_array(X, "X", ndim=2)
        if X.shape[1] != self.n_features_in_:
            raise InvalidDimensionError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X @ self.coef_.T

    def score(self, X, y, sample_weight=None):
        """Coefficient of determination of the complex fit (``1 - ||y - y_hat||^2 / ||y - mean||^2``)."""
        y = check_complex_array(y, "y")
        pred = self.predict(X)
        resid = np.sum(np.abs(y - pred) ** 2)
        total = np.sum(np.abs(y - y.mean(axis=0)) ** 2)
        return 1.0 - resid / total


class SWOMP(_SparseChannelEstimator):
    """Simultaneous weighted orthogonal matching pursuit.

    Parameters
    ----------
    epsilon : float
        Halting threshold on the weighted residual MSE; use the noise variance
        when it is known.
    max_iters : int, optional
        Maximum support size.
    sigma2_mode : {"genie", "estimated"}
    false_alarm : float
        Only used with ``sigma2_mode="estimated"``.

    Attributes
    ----------
    coef_ : ndarray of shape (n_subcarriers, n_atoms)
    support_ : ndarray
        Common support, in selection order.
    n_iter_ : int
    mse_path_ : ndarray
        Weighted residual MSE after each iteration (entry 0 is before any atom).
    sigma2_ : float
        Pooled ML noise-variance estimate on the final support.
    estimate_ : SparseEstimate
    """

    _solver = staticmethod(swomp)

    def __init__(self, epsilon=0.0, max_iters=None, sigma2_mode="genie", false_alarm=0.05):
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.sigma2_mode = sigma2_mode
        self.false_alarm = false_alarm

    def _config(self):
        return RecoveryConfig(epsilon=self.epsilon, max_iters=self.max_iters,
                              sigma2_mode=self.sigma2_mode, false_alarm=self.false_alarm)


class SSSWOMPTh(_SparseChannelEstimator):
    """SW-OMP with atom selection on the ``k_p`` strongest subcarriers, plus pruning."""

    _solver = staticmethod(ss_swomp_th)

    def __init__(self, epsilon=0.0, max_iters=None, k_p=4, beta=0.025, sigma2_mode="genie",
                 false_alarm=0.05):
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.k_p = k_p
        self.beta = beta
        self.sigma2_mode = sigma2_mode
        self.false_alarm = false_alarm

    def _config(self):
        return RecoveryConfig(epsilon=self.epsilon, max_iters=self.max_iters, k_p=self.k_p,
                              beta=self.beta, sigma2_mode=self.sigma2_mode,
                              false_alarm=self.false_alarm)


class PerSubcarrierOMP(_SparseChannelEstimator):
    """Independent OMP for each subcarrier (no shared support, no noise whitening)."""

    _solver = staticmethod(omp_per_subcarrier)

    def __init__(self, epsilon=0.0, max_iters=None, sigma2_mode="genie", false_alarm=0.05):
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.sigma2_mode = sigma2_mode
        self.false_alarm = false_alarm

    def _config(self):
        return RecoveryConfig(epsilon=self.epsilon, max_iters=self.max_iters,
                              sigma2_mode=self.sigma2_mode, false_alarm=self.false_alarm)
