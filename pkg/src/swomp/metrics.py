"""Channel-estimation quality metrics."""
import numpy as np

from .exceptions import InvalidDimensionError, UndefinedMetricError


def db(x):
    return 10.0 * np.log10(x)


def nmse(H_hat, H):
    """``sum_k ||H_hat[k] - H[k]||_F^2 / sum_k ||H[k]||_F^2`` (linear scale)."""
    H_hat = np.asarray(H_hat)
    H = np.asarray(H)
    if H_hat.shape != H.shape:
        raise InvalidDimensionError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    energy = float(np.sum(np.abs(H) ** 2))
    if energy == 0.0:
        raise UndefinedMetricError("NMSE is undefined for a zero-energy channel")
    return float(np.sum(np.abs(H_hat - H) ** 2)) / energy


def beamformed_gains(H_hat, H, n_streams):
    """Singular values of ``W^H H[k] F`` with ``F, W`` the dominant singular vectors of ``H_hat[k]``.

    Returns an array of shape ``(K, n_streams)``.
    """
    H_hat = np.asarray(H_hat)
    H = np.asarray(H)
    if H_hat.shape != H.shape:
        raise InvalidDimensionError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    if n_streams > min(H.shape[1:]):
        raise InvalidDimensionError("n_streams exceeds min(Nr, Nt)")
    U, _, Vh = np.linalg.svd(H_hat)
    W = U[:, :, :n_streams]
    F = Vh[:, :n_streams, :].conj().transpose(0, 2, 1)
    H_eff = W.conj().transpose(0, 2, 1) @ H @ F
    return np.linalg.svd(H_eff, compute_uv=False)


def spectral_efficiency(H_hat, H, sigma2, n_streams=2, power=1.0):
    """Average rate in bit/s/Hz with fully digital SVD beamforming on the estimate.

    ``R = (1/K) sum_k sum_n log2(1 + power / (K * n_streams * sigma2) * lambda_n[k]**2)``
    where ``lambda_n[k]`` are the singular values from :func:`beamformed_gains`.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    lam = beamformed_gains(H_hat, H, n_streams)
    K = lam.shape[0]
    snr = power / (K * n_streams * sigma2)
    return float(np.sum(np.log2(1.0 + snr * lam ** 2)) / K)
