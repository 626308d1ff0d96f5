"""Monte-Carlo trials, sweep aggregation and CSV output.

Each trial draws one channel, one training ensemble with ``max(M)`` frames and
one unit-variance noise tensor from child streams of
``SeedSequence(seed, spawn_key=(trial_index,))``. Smaller ``M`` use the leading
frames, and every SNR point reuses the same noise scaled by ``sqrt(sigma2)``,
so all algorithms, SNRs and ``M`` values of a trial share common random numbers.
"""
from __future__ import annotations

import datetime
import functools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import path_crlb_report
from .channel import build_dictionary, draw_channel
from .config import SimConfig
from .exceptions import SwompError
from .metrics import db, nmse, spectral_efficiency
from .recovery import omp_per_subcarrier, reconstruct_channel, ss_swomp_th, swomp
from .training import TrainingEnsemble, build_operator, draw_training, synthesize_received

logger = logging.getLogger(__name__)

CSV_HEADER = ("algorithm,snr_db,m_frames,trials,nmse_db,rate_bps_hz,ncrlb_db,"
              "ops_projection,ops_wls,ops_total,seed")

SOLVERS = {
    "swomp": swomp,
    "ss-swomp-th": ss_swomp_th,
    "omp": omp_per_subcarrier,
}


@dataclass(frozen=True)
class TrialRecord:
    algorithm: str
    snr_db: float
    m_frames: int
    nmse: float
    rate: float
    ncrlb: float
    ops_projection: int
    ops_wls: int
    ops_total: int
    iterations: int


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    records: tuple = ()
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    snr_db: float
    m_frames: int
    trials: int
    nmse_db: float
    rate_bps_hz: float
    ncrlb_db: float
    ops_projection: float
    ops_wls: float
    ops_total: float
    seed: int

    def csv_line(self):
        vals = [self.algorithm, _num(self.snr_db), str(self.m_frames), str(self.trials),
                _num(self.nmse_db), _num(self.rate_bps_hz), _num(self.ncrlb_db),
                _num(self.ops_projection), _num(self.ops_wls), _num(self.ops_total), str(self.seed)]
        return ",".join(vals)


@dataclass
class SweepResult:
    config: SimConfig
    rows: list
    failed_trials: list = field(default_factory=list)

    def row(self, algorithm, snr_db, m_frames):
        for r in self.rows:
            if r.algorithm == algorithm and r.snr_db == snr_db and r.m_frames == m_frames:
                return r
        raise KeyError((algorithm, snr_db, m_frames))

    def to_csv(self, timestamp=None):
        """CSV text: a timestamp comment, ``# key = value`` metadata, header, rows."""
        if timestamp is None:
            timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        lines = [f"# generated {timestamp}"]
        lines += [f"# {k} = {v}" for k, v in self.config.metadata()]
        lines.append(f"# failed_trials = {len(self.failed_trials)}")
        lines.append(CSV_HEADER)
        lines += [r.csv_line() for r in self.rows]
        return "\n".join(lines) + "\n"


def _num(x):
    # shortest round-trip representation keeps the CSV exact and deterministic
    return repr(float(x))


@functools.lru_cache(maxsize=8)
def _dictionary(N_t, N_r, G_t, G_r):
    return build_dictionary(N_t, N_r, G_t, G_r)


def trial_streams(seed, trial_index):
    """Independent generators ``(channel, training, noise)`` for one trial."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial_index,))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _leading_frames(tr: TrainingEnsemble, M):
    return TrainingEnsemble(f=tr.f[:M], W=tr.W[:M], symbols=tr.symbols[:M], quant_bits=tr.quant_bits)


def run_trial(cfg: SimConfig, trial_index):
    """Run every configured algorithm over the SNR grid and ``M`` list for one trial.

    Returns a :class:`TrialResult`; a numerical failure anywhere in the trial
    is reported through ``error`` and the trial carries no records.
    """
    try:
        return TrialResult(trial_index, tuple(_trial_records(cfg, trial_index)))
    except (SwompError, np.linalg.LinAlgError) as exc:
        logger.warning("trial %d failed: %s", trial_index, exc)
        return TrialResult(trial_index, (), f"{type(exc).__name__}: {exc}")


def _trial_records(cfg: SimConfig, trial_index):
    D = _dictionary(cfg.N_t, cfg.N_r, cfg.G_t, cfg.G_r)
    rng_ch, rng_tr, rng_noise = trial_streams(cfg.seed, trial_index)
    K = cfg.K
    M_max = max(cfg.M)
    ch = draw_channel(cfg.channel_config(), rng_ch, D)
    H = ch.freq_responses(K)
    tr_full = draw_training(rng_tr, M_max, cfg.N_t, cfg.N_r, cfg.L_r, cfg.N_Q, K)
    shape = (K, M_max, cfg.N_r)
    noise_full = (rng_noise.standard_normal(shape) + 1j * rng_noise.standard_normal(shape)) / math.sqrt(2)

    for M in cfg.M:
        tr = _leading_frames(tr_full, M)
        op = build_operator(tr, D)
        noise = noise_full[:, :M]
        for snr_db in cfg.snr_grid_dB:
            sigma2 = 10.0 ** (-snr_db / 10.0)
            rx = synthesize_received(ch, tr, op, sigma2, noise=noise)
            bound = path_crlb_report(op, ch, sigma2, K).ncrlb
            rcfg = cfg.recovery_config(sigma2)
            for name in cfg.algorithms:
                est = SOLVERS[name](rx.y, op, rcfg)
                H_hat = reconstruct_channel(op, est)
                yield TrialRecord(
                    algorithm=name, snr_db=float(snr_db), m_frames=int(M),
                    nmse=nmse(H_hat, H),
                    rate=spectral_efficiency(H_hat, H, sigma2, cfg.N_s),
                    ncrlb=bound,
                    ops_projection=est.ops.projection, ops_wls=est.ops.wls,
                    ops_total=est.ops.total, iterations=est.iterations)


def check_writable(path):
    """Raise ``OSError`` unless ``path`` can be created or overwritten."""
    path = os.path.abspath(path)
    parent = os.path.dirname(path)
    if os.path.isdir(path):
        raise IsADirectoryError(f"output path {path} is a directory")
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory {parent} does not exist")
    target = path if os.path.exists(path) else parent
    if not os.access(target, os.W_OK):
        raise PermissionError(f"cannot write to {path}")


def aggregate(cfg: SimConfig, results):
    """Average trial records into one :class:`SweepRow` per (algorithm, SNR, M).

    NMSE and NCRLB are averaged in linear scale before conversion to dB. Sums
    use :func:`math.fsum` over trials sorted by index, so the result does not
    depend on completion order.
    """
    results = sorted(results, key=lambda r: r.trial_index)
    good = [r for r in results if r.ok]
    failed = [(r.trial_index, r.error) for r in results if not r.ok]
    buckets = {}
    for res in good:
        for rec in res.records:
            buckets.setdefault((rec.algorithm, rec.snr_db, rec.m_frames), []).append(rec)
    rows = []
    n = len(good)
    for alg in cfg.algorithms:
        for snr in cfg.snr_grid_dB:
            for M in cfg.M:
                recs = buckets.get((alg, float(snr), int(M)), [])
                rows.append(SweepRow(
                    algorithm=alg, snr_db=float(snr), m_frames=int(M), trials=n,
                    nmse_db=float(db(_mean(recs, "nmse", n))),
                    rate_bps_hz=_mean(recs, "rate", n),
                    ncrlb_db=float(db(_mean(recs, "ncrlb", n))),
                    ops_projection=_mean(recs, "ops_projection", n),
                    ops_wls=_mean(recs, "ops_wls", n),
                    ops_total=_mean(recs, "ops_total", n), seed=cfg.seed))
    return SweepResult(config=cfg, rows=rows, failed_trials=failed)


def _mean(records, attr, n):
    if n == 0:
        return float("nan")
    return math.fsum(getattr(r, attr) for r in records) / n


def run_sweep(cfg: SimConfig, out=None, timestamp=None):
    """Run ``cfg.trials`` trials on ``cfg.threads`` worker threads and aggregate.

    If ``out`` is given the CSV is written there; its writability is checked
    before any trial runs.
    """
    if out is not None:
        check_writable(out)
    run = functools.partial(run_trial, cfg)
    if cfg.threads == 1:
        results = [run(i) for i in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, range(cfg.trials)))
    result = aggregate(cfg, results)
    if result.failed_trials:
        logger.warning("%d of %d trials failed and were excluded", len(result.failed_trials), cfg.trials)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.to_csv(timestamp))
    return result
