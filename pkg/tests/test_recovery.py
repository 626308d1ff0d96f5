import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swomp.channel import ChannelConfig, draw_channel, sparse_vectors, true_support
from swomp.exceptions import InvalidConfigurationError, InvalidDimensionError, SingularSupportError
from swomp.metrics import nmse
from swomp.recovery import (RecoveryConfig, estimate_sigma2, omp_per_subcarrier, reconstruct_channel,
                            ss_swomp_th, strongest_subcarriers, swomp, threshold_support, unvec, vec,
                            wls_gains)
from swomp.training import (MeasurementOperator, TrainingEnsemble, build_operator, draw_training,
                            synthesize_received, whiten)

from _helpers import db, dictionary, scenario

SMALL = dict(M=40, K=8, L=3, N_c=4, N=16, G=32)
NOISELESS = RecoveryConfig(epsilon=1e-14, max_iters=24, beta=1e-9)


def _orthonormal_training(rng, M, N, L_r, K):
    W = np.stack([np.linalg.qr(rng.standard_normal((N, L_r)) + 1j * rng.standard_normal((N, L_r)))[0]
                  for _ in range(M)])
    f = np.exp(2j * np.pi * rng.integers(4, size=(M, N)) / 4) / np.sqrt(N)
    s = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(4, size=(M, K))))
    return TrainingEnsemble(f=f, W=W, symbols=s, quant_bits=2)


# WLS

def test_wls_identity_coupling_is_pinv():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((20, 6)) + 1j * rng.standard_normal((20, 6))
    op = MeasurementOperator.from_matrices(U)
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    np.testing.assert_allclose(wls_gains(op, [1, 4, 5], y), np.linalg.pinv(U[:, [1, 4, 5]]) @ y, atol=1e-12)


def test_wls_matches_dense_formula():
    ch, tr, op, rx, _ = scenario(1, sigma2=0.2, **SMALL)
    T = true_support(ch, op.dictionary)
    A = op.upsilon[:, T]
    Ci = np.linalg.inv(op.noise_coupling)
    ref = np.linalg.solve(A.conj().T @ Ci @ A, A.conj().T @ Ci @ rx.y.T).T
    np.testing.assert_allclose(wls_gains(op, T, rx.y), ref, rtol=1e-9, atol=1e-12)


def test_wls_noiseless_exact():
    ch, tr, op, rx, _ = scenario(2, **SMALL)
    T = true_support(ch, op.dictionary)
    X = sparse_vectors(ch, op.dictionary, 8)[:, T]
    got = wls_gains(op, T, rx.y)
    assert np.linalg.norm(got - X) <= 1e-10 * np.linalg.norm(X)


def test_wls_unbiased():
    rng = np.random.default_rng(3)
    ch, tr, op, _, _ = scenario(3, **SMALL)
    T = true_support(ch, op.dictionary)
    x0 = sparse_vectors(ch, op.dictionary, 8)[0, T]
    y0 = op.upsilon @ sparse_vectors(ch, op.dictionary, 8)[0]
    sigma2, n = 1.0, 10_000
    D = op.chol
    z = (rng.standard_normal((n, y0.size)) + 1j * rng.standard_normal((n, y0.size))) / np.sqrt(2)
    noise = np.sqrt(sigma2) * z @ D.T  # covariance sigma2 * D D^H = sigma2 * C_w
    est = wls_gains(op, T, y0[None, :] + noise)
    mean = est.mean(axis=0)
    se = est.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(mean.real - x0.real) < 3 * se + 1e-12)
    assert np.all(np.abs(mean.imag - x0.imag) < 3 * se + 1e-12)


def test_wls_repeated_atom_is_singular():
    _, _, op, rx, _ = scenario(4, **SMALL)
    with pytest.raises(SingularSupportError):
        wls_gains(op, [3, 3], rx.y)


def test_wls_dependent_columns_singular():
    U = np.ones((6, 2), complex)
    op = MeasurementOperator.from_matrices(U)
    with pytest.raises(SingularSupportError):
        wls_gains(op, [0, 1], np.ones(6))


def test_transposed_y_rejected():
    _, _, op, rx, _ = scenario(5, **SMALL)
    with pytest.raises(InvalidDimensionError):
        swomp(rx.y.T, op, NOISELESS)


# SW-OMP

@pytest.mark.parametrize("seed", range(5))
def test_swomp_exact_recovery(seed):
    ch, tr, op, rx, H = scenario(seed, **SMALL)
    est = swomp(rx.y, op, NOISELESS)
    assert set(true_support(ch, op.dictionary)) <= set(est.support)
    assert db(nmse(reconstruct_channel(op, est), H)) < -100


def test_swomp_exact_recovery_reference_setup():
    ch, tr, op, rx, H = scenario(11, M=80, K=16, L=4, N_c=4)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=1e-14, max_iters=32))
    assert set(true_support(ch, op.dictionary)) <= set(est.support)
    assert db(nmse(reconstruct_channel(op, est), H)) < -100


def _single_path(seed, N=16, G=32, M=30, K=8):
    rng = np.random.default_rng(seed)
    D = dictionary(N, G)
    ch = draw_channel(ChannelConfig(n_tx=N, n_rx=N, n_paths=1, n_taps=1), rng, D)
    tr = draw_training(rng, M, N, N, 4, 2, K)
    op = build_operator(tr, D)
    return ch, op, synthesize_received(ch, tr, op, 0.0, rng)


@pytest.mark.parametrize("seed", range(4))
def test_first_atom_is_true_single_path(seed):
    ch, op, rx = _single_path(seed)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=1e-14, max_iters=1))
    assert est.support[0] == true_support(ch, op.dictionary)[0]
    # brute-force whitened correlation over every atom (the C_w != I argmax-level check)
    yw = whiten(op, rx.y.T)
    score = np.array([np.sum(np.abs(op.upsilon_w[:, p].conj() @ yw)) for p in range(op.num_atoms)])
    assert est.support[0] == int(np.argmax(score))
    assert not np.allclose(op.noise_coupling, np.eye(op.num_measurements))


@pytest.mark.parametrize("fn", [swomp, ss_swomp_th, omp_per_subcarrier])
def test_residual_trace_non_increasing(fn):
    _, _, op, rx, _ = scenario(6, sigma2=0.3, **SMALL)
    est = fn(rx.y, op, RecoveryConfig(epsilon=0.3, max_iters=24, k_p=4))
    assert np.all(np.diff(est.residual_mse_trace) <= 1e-12)


def test_swomp_halts_at_epsilon():
    _, _, op, rx, _ = scenario(7, sigma2=0.5, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=0.5, max_iters=24))
    trace = est.residual_mse_trace
    assert trace[-1] <= 0.5 or est.iterations == 24
    assert np.all(trace[:-1] > 0.5)
    assert est.iterations == len(est.support) == len(trace) - 1


def test_swomp_support_unique_and_capped():
    _, _, op, rx, _ = scenario(8, sigma2=10.0, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=0.0, max_iters=7))
    assert len(est.support) == 7
    assert len(set(est.support.tolist())) == 7
    assert all(g.shape == (7,) for g in est.gains)


def test_swomp_tie_breaks_to_lowest_index():
    U = np.eye(4, dtype=complex)
    op = MeasurementOperator.from_matrices(U)
    y = np.array([[1, 1, 1, 0]], dtype=complex)
    est = swomp(y, op, RecoveryConfig(epsilon=0.0, max_iters=3))
    assert est.support.tolist() == [0, 1, 2]


def test_swomp_common_support():
    _, _, op, rx, _ = scenario(9, sigma2=0.1, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=0.1, max_iters=24))
    assert est.common_support
    assert all(np.array_equal(s, est.support) for s in est.supports)


def test_swomp_equals_unwhitened_somp_with_orthonormal_combiners():
    rng = np.random.default_rng(10)
    D = dictionary(16, 32)
    ch = draw_channel(ChannelConfig(n_tx=16, n_rx=16, n_paths=3), rng, D)
    tr = _orthonormal_training(rng, 30, 16, 4, 8)
    op = build_operator(tr, D)
    rx = synthesize_received(ch, tr, op, 0.2, rng)
    cfg = RecoveryConfig(epsilon=0.2, max_iters=24)
    a = swomp(rx.y, op, cfg)
    b = swomp(rx.y, MeasurementOperator.from_matrices(op.upsilon), cfg)
    np.testing.assert_array_equal(a.support, b.support)
    np.testing.assert_allclose(np.stack(a.gains), np.stack(b.gains), atol=1e-10)


def test_swomp_estimated_sigma2_mode():
    ch, tr, op, rx, H = scenario(12, M=80, K=16, L=4, sigma2=1.0)
    genie = swomp(rx.y, op, RecoveryConfig(epsilon=1.0, max_iters=32))
    est = swomp(rx.y, op, RecoveryConfig(sigma2_mode="estimated", max_iters=32))
    n_g = db(nmse(reconstruct_channel(op, genie), H))
    n_e = db(nmse(reconstruct_channel(op, est), H))
    assert n_e < n_g + 3
    assert est.sigma2_hat == pytest.approx(1.0, rel=0.2)


def test_swomp_estimated_mode_exact_when_noiseless():
    ch, tr, op, rx, H = scenario(13, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(sigma2_mode="estimated", max_iters=24))
    assert db(nmse(reconstruct_channel(op, est), H)) < -100


def test_projection_ops_per_iteration():
    _, _, op, rx, _ = scenario(14, sigma2=0.3, **SMALL)
    cfg = RecoveryConfig(epsilon=0.3, max_iters=24, k_p=2)
    a = swomp(rx.y, op, cfg)
    b = ss_swomp_th(rx.y, op, cfg)
    n, G = op.num_measurements, op.num_atoms
    assert set(a.ops.projection_per_iteration) == {G * n * 8}
    assert set(b.ops.projection_per_iteration) == {G * n * 2}
    assert a.ops.total > a.ops.projection > 0


# SS-SW-OMP+Th

def test_ss_full_subset_tiny_beta_equals_swomp():
    _, _, op, rx, _ = scenario(15, sigma2=0.2, **SMALL)
    cfg = RecoveryConfig(epsilon=0.2, max_iters=24, k_p=8, beta=1e-12)
    a = swomp(rx.y, op, cfg)
    b = ss_swomp_th(rx.y, op, cfg)
    np.testing.assert_array_equal(a.support, b.support)
    np.testing.assert_allclose(np.stack(a.gains), np.stack(b.gains))


def test_threshold_removes_weak_atom():
    support = np.array([5, 9, 2])
    X = np.array([[1.0, 1.0], [0.1, 0.1], [0.5, 0.5]], dtype=complex)  # p_av: 1, 0.01, 0.25
    s, g = threshold_support(support, X, 0.025)
    assert s.tolist() == [5, 2]
    np.testing.assert_array_equal(g, X[[0, 2]])


def test_threshold_keeps_common_support():
    _, _, op, rx, _ = scenario(16, sigma2=1.0, **SMALL)
    est = ss_swomp_th(rx.y, op, RecoveryConfig(epsilon=1.0, max_iters=24, k_p=4, beta=0.2))
    assert all(np.array_equal(s, est.support) for s in est.supports)
    p = np.mean(np.abs(np.stack(est.gains)) ** 2, axis=0)
    assert np.all(p >= 0.2 * p.max())


def test_strongest_subcarriers():
    y = np.array([[1, 0], [3, 0], [2, 0], [3, 0]], dtype=complex)
    assert strongest_subcarriers(y, 2).tolist() == [1, 3]
    assert strongest_subcarriers(y, 3).tolist() == [1, 2, 3]


def test_ss_kp_larger_than_k_rejected():
    _, _, op, rx, _ = scenario(17, **SMALL)
    with pytest.raises(InvalidConfigurationError):
        ss_swomp_th(rx.y, op, RecoveryConfig(k_p=9))


def test_ss_exact_recovery():
    ch, tr, op, rx, H = scenario(18, **SMALL)
    est = ss_swomp_th(rx.y, op, RecoveryConfig(epsilon=1e-14, max_iters=24, k_p=4, beta=1e-9))
    assert db(nmse(reconstruct_channel(op, est), H)) < -100


# per-subcarrier OMP

def test_omp_single_subcarrier_equals_swomp():
    rng = np.random.default_rng(19)
    D = dictionary(16, 32)
    ch = draw_channel(ChannelConfig(n_tx=16, n_rx=16, n_paths=3, n_taps=1), rng, D)
    tr = _orthonormal_training(rng, 30, 16, 4, 1)
    op = build_operator(tr, D)
    rx = synthesize_received(ch, tr, op, 0.1, rng)
    cfg = RecoveryConfig(epsilon=0.1, max_iters=10)
    a = swomp(rx.y, op, cfg)
    b = omp_per_subcarrier(rx.y, op, cfg)
    np.testing.assert_array_equal(a.support, b.supports[0])
    np.testing.assert_allclose(a.gains[0], b.gains[0], atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_omp_exact_recovery(seed):
    ch, tr, op, rx, H = scenario(20 + seed, **SMALL)
    est = omp_per_subcarrier(rx.y, op, NOISELESS)
    assert db(nmse(reconstruct_channel(op, est), H)) < -100


def test_omp_supports_may_differ():
    _, _, op, rx, _ = scenario(23, sigma2=3.0, **SMALL)
    est = omp_per_subcarrier(rx.y, op, RecoveryConfig(epsilon=3.0, max_iters=24))
    assert not est.common_support
    assert len({tuple(s) for s in est.supports}) > 1
    assert set(est.support) == set(np.concatenate(est.supports))


# noise variance

def test_sigma2_noiseless_true_support():
    ch, _, op, rx, _ = scenario(24, **SMALL)
    per_k, pooled = estimate_sigma2(op, true_support(ch, op.dictionary), rx.y)
    assert pooled < 1e-20


def test_sigma2_pooled_is_mean():
    ch, _, op, rx, _ = scenario(25, sigma2=0.4, **SMALL)
    per_k, pooled = estimate_sigma2(op, true_support(ch, op.dictionary), rx.y)
    assert pooled == pytest.approx(per_k.mean())
    assert per_k.shape == (8,)


def test_sigma2_pooled_monte_carlo():
    # K=16 subcarriers, true support, sigma2 = 0.1; smaller arrays keep it fast
    rng = np.random.default_rng(26)
    D = dictionary(16, 32)
    vals = []
    for _ in range(1000):
        ch = draw_channel(ChannelConfig(n_tx=16, n_rx=16), rng, D)
        tr = draw_training(rng, 80, 16, 16, 4, 2, 16)
        op = build_operator(tr, D)
        rx = synthesize_received(ch, tr, op, 0.1, rng)
        vals.append(estimate_sigma2(op, true_support(ch, D), rx.y)[1])
    # the ML estimate is biased low by (n - |T|)/n = 316/320 here
    assert np.mean(vals) == pytest.approx(0.1, rel=0.05)


# reconstruction

def test_empty_support_gives_zero_channel():
    ch, _, op, rx, H = scenario(27, sigma2=0.1, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=1e9))
    assert est.support.size == 0
    H_hat = reconstruct_channel(op, est)
    assert np.all(H_hat == 0)
    assert nmse(H_hat, H) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_vec_unvec_round_trip(r, c, seed):
    X = np.random.default_rng(seed).standard_normal((r, c))
    np.testing.assert_array_equal(unvec(vec(X), r, c), X)
    np.testing.assert_array_equal(vec(X), X.T.ravel())


def test_coef_matrix():
    _, _, op, rx, _ = scenario(28, sigma2=0.1, **SMALL)
    est = swomp(rx.y, op, RecoveryConfig(epsilon=0.1, max_iters=24))
    C = est.coef(op.num_atoms)
    np.testing.assert_allclose(C[:, est.support], np.stack(est.gains))
    assert np.count_nonzero(np.abs(C).sum(axis=0)) == est.support.size


# configuration

@pytest.mark.parametrize("kw", [dict(beta=0.0), dict(beta=1.0), dict(k_p=0), dict(max_iters=0),
                                dict(epsilon=-1.0), dict(sigma2_mode="oracle")])
def test_recovery_config_validation(kw):
    with pytest.raises(InvalidConfigurationError):
        RecoveryConfig(**kw)
