"""Vectorized Monte Carlo of discovery sessions.

Trials are generated in fixed-size blocks; block b draws from its own
substream keyed by (seed, b), so results do not depend on how many worker
threads run the blocks or in which order they finish. Blocks are reduced in
index order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal, session_rng
from .signatures import correlator_bank

BLOCK = 512
STAT_KINDS = ("ID", "ZF-CD", "ZF", "MF", "MMOE", "CI", "II")


@dataclass
class TrialBatch:
    """Per-trial statistics for all K nodes. Trials with M0 = 0 carry NaN statistics."""

    M0: np.ndarray
    nu: np.ndarray
    alpha: np.ndarray
    truth: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.M0)

    @property
    def observed(self):
        return self.M0 > 0

    @classmethod
    def concat(cls, parts):
        kinds = parts[0].stats.keys()
        return cls(
            np.concatenate([p.M0 for p in parts]),
            np.concatenate([p.nu for p in parts]),
            np.concatenate([p.alpha for p in parts]),
            np.concatenate([p.truth for p in parts]),
            {k: np.concatenate([p.stats[k] for p in parts]) for k in kinds},
        )


def _pinned_activity(rng, n, M0, nu1, eps):
    """M0 x K activity with node 1 transmitting in exactly nu1 slots."""
    K = len(eps)
    psi = rng.random((n, M0, K)) < eps[None, None, :]
    order = np.argsort(rng.random((n, M0)), axis=1)
    first = np.zeros((n, M0), dtype=bool)
    np.put_along_axis(first, order[:, :nu1], True, axis=1)
    psi[:, :, 0] = first
    return psi


def _simulate_block(cfg, sig, n, rng, kinds, pin, mmoe_cache):
    K, L = cfg.K, sig.L
    eps = np.asarray(cfg.eps[1:])
    alpha = complex_normal(rng, np.asarray(cfg.fading_power), (n, K))
    if pin is None:
        M0 = rng.binomial(cfg.N, 1 - cfg.eps[0], size=n)
        Mmax = int(M0.max())
        psi = rng.random((n, Mmax, K)) < eps[None, None, :]
        slot_ok = np.arange(Mmax)[None, :] < M0[:, None]
        psi &= slot_ok[:, :, None]
    else:
        M0v, nu1 = pin
        M0 = np.full(n, M0v)
        Mmax = M0v
        psi = _pinned_activity(rng, n, M0v, nu1, eps)
        slot_ok = np.ones((n, Mmax), dtype=bool)
    noise = complex_normal(rng, cfg.noise_power, (n, Mmax, L)) * slot_ok[:, :, None]
    y = np.einsum("npk,nk,lk->npl", psi, alpha, sig.S) + noise

    nu = psi.sum(axis=1)
    truth = np.abs(alpha) > cfg.tau_a
    ysum = y.sum(axis=1)
    stats = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        Mf = np.where(M0 > 0, M0, np.nan)[:, None].astype(float)
        if {"ID", "ZF-CD", "CI", "II"} & set(kinds):
            d = y @ sig.pinv.T
            id_stat = (np.abs(d) ** 2).sum(axis=1)
            cd_stat = np.abs(d.sum(axis=1)) ** 2
            stats["ID"] = id_stat
            stats["ZF-CD"] = cd_stat
            stats["II"] = id_stat / Mf
            stats["CI"] = cd_stat / Mf**2
        for kind in ("MF", "ZF"):
            if kind in kinds:
                stats[kind] = correlator_bank(sig, kind).statistic(ysum)
        if "MMOE" in kinds:
            out = np.full((n, K), np.nan)
            for M in np.unique(M0[M0 > 0]):
                if M not in mmoe_cache:
                    mmoe_cache[M] = correlator_bank(sig, "MMOE", cfg, int(M))
                sel = M0 == M
                out[sel] = mmoe_cache[M].statistic(ysum[sel])
            stats["MMOE"] = out
    for k in list(stats):
        stats[k] = np.where((M0 > 0)[:, None], stats[k], np.nan)
        if k not in kinds:
            del stats[k]
    return TrialBatch(M0, nu, alpha, truth, stats)


def simulate(cfg, sig, trials, seed, kinds=STAT_KINDS, pin=None, workers=1, block=BLOCK):
    """Run ``trials`` sessions; ``pin=(M0, nu1)`` fixes the sensing-slot count and node 1's count."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if cfg.K != sig.K:
        raise ValueError("config and signature set disagree on K")
    if pin is not None and not (1 <= pin[0] and 0 <= pin[1] <= pin[0]):
        raise ValueError("pinned values need M0 >= 1 and 0 <= nu1 <= M0")
    kinds = tuple(k.upper() for k in kinds)
    bad = set(kinds) - set(STAT_KINDS)
    if bad:
        raise ValueError(f"unknown statistics {sorted(bad)}")
    sizes = [min(block, trials - s) for s in range(0, trials, block)]
    mmoe_cache = {}

    def run(b):
        return _simulate_block(cfg, sig, sizes[b], session_rng(seed, b), kinds, pin, mmoe_cache)

    if workers > 1:
        # warm the MMOE cache serially so worker threads only read it
        if "MMOE" in kinds and pin is None:
            lo = max(1, int(cfg.N * (1 - cfg.eps[0]) - 10 * np.sqrt(cfg.N) - 10))
            for M in range(lo, cfg.N + 1):
                mmoe_cache[M] = correlator_bank(sig, "MMOE", cfg, M)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    return TrialBatch.concat(parts)


@dataclass(frozen=True)
class EmpiricalPoint:
    pF: float
    pM: float
    pE: float
    sF: float
    sM: float
    sE: float
    n_F: int
    n_M: int
    errors: int


def _binom_se(p, n):
    return float(np.sqrt(p * (1 - p) / n)) if n > 0 else float("nan")


def empirical_rates(stat, truth, tau2):
    """Empirical (pF, pM, pE) with binomial standard errors; NaN statistics are skipped."""
    stat = np.asarray(stat, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    ok = ~np.isnan(stat)
    stat, truth = stat[ok], truth[ok]
    dec = stat > tau2
    nF, nM = int((~truth).sum()), int(truth.sum())
    fa = int((dec & ~truth).sum())
    miss = int((~dec & truth).sum())
    pF = fa / nF if nF else float("nan")
    pM = miss / nM if nM else float("nan")
    pE = (fa + miss) / len(stat)
    return EmpiricalPoint(
        pF, pM, pE, _binom_se(pF, nF), _binom_se(pM, nM), _binom_se(pE, len(stat)), nF, nM, fa + miss
    )
