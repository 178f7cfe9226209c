"""Discovery-session realizations and received chip-matched-filter outputs.

Slots in which node 0 transmits carry no observation and are dropped; the
remaining M0 sensing slots are re-indexed p = 0..M0-1.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class NetworkConfig:
    """Network parameters seen from node 0.

    eps has K + 1 entries (node 0 first); fading_power holds 2 sigma_k^2 for
    the K target nodes; noise_power is 2 N0, the variance of each complex
    noise component; tau_a is the activity threshold on |alpha|.
    """

    K: int
    N: int
    eps: tuple
    fading_power: tuple
    noise_power: float
    tau_a: float

    def __post_init__(self):
        eps = tuple(float(e) for e in np.broadcast_to(self.eps, (self.K + 1,)))
        fp = tuple(float(p) for p in np.broadcast_to(self.fading_power, (self.K,)))
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "fading_power", fp)
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be >= 1")
        if any(not 0 <= e <= 1 for e in eps):
            raise ValueError("activity factors must lie in [0, 1]")
        if any(p <= 0 for p in fp) or self.noise_power <= 0:
            raise ValueError("powers must be positive")
        if self.tau_a < 0:
            raise ValueError("tau_a must be nonnegative")

    @property
    def sigma_sq(self):
        """Per-real-dimension fading variances sigma_k^2."""
        return np.asarray(self.fading_power) / 2

    @property
    def N0(self):
        return self.noise_power / 2

    @property
    def snr_db(self):
        """SNR_1 = sigma_1^2 / N0 in dB."""
        return 10 * np.log10(self.sigma_sq[0] / self.N0)

    def p_neighbor(self, i=0):
        """P(|alpha_i| > tau_a) for Rayleigh fading."""
        return float(np.exp(-self.tau_a**2 / self.fading_power[i]))

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return NetworkConfig(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def paper_default(cls, N=100, snr_db=0.0, eps=0.5, K=6, fading_power=1.0):
        """Power-controlled network with tau_a at the median of |alpha_1|."""
        sigma1_sq = fading_power / 2
        noise_power = 2 * sigma1_sq / 10 ** (snr_db / 10)
        return cls(
            K=K,
            N=N,
            eps=eps,
            fading_power=fading_power,
            noise_power=noise_power,
            tau_a=median_tau_a(fading_power),
        )


def median_tau_a(fading_power):
    """Activity threshold with P(|alpha| > tau_a) = 1/2."""
    return float(np.sqrt(fading_power * np.log(2)))


@dataclass
class SessionRealization:
    alpha: np.ndarray  # K complex amplitudes
    psi: np.ndarray  # M0 x K 0/1 activity in the sensing slots
    M0: int
    tau_a: float
    nu: np.ndarray = field(init=False)
    neighbor_truth: np.ndarray = field(init=False)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.int8).reshape(self.M0, len(self.alpha))
        self.nu = self.psi.sum(axis=0)
        self.neighbor_truth = np.abs(self.alpha) > self.tau_a

    @property
    def no_observation(self):
        return self.M0 == 0


@dataclass
class SlotObservations:
    y: np.ndarray  # M0 x L complex

    @property
    def ysum(self):
        return self.y.sum(axis=0)

    @property
    def M0(self):
        return self.y.shape[0]


def session_rng(seed, index=0):
    """Independent generator for one trial or block, keyed by (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def complex_normal(rng, var, size):
    """CN(0, var) samples: real and imaginary parts N(0, var/2)."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def draw_fading(cfg, rng, size=None):
    """alpha_k ~ CN(0, 2 sigma_k^2); shape (K,) or (size, K)."""
    shape = (cfg.K,) if size is None else (size, cfg.K)
    return complex_normal(rng, np.asarray(cfg.fading_power), shape)


def draw_activity(cfg, rng):
    """Returns (psi, nu, M0): node 0's N draws fix M0, then M0 x K Bernoulli(eps_k)."""
    nu0 = int((rng.random(cfg.N) < cfg.eps[0]).sum())
    M0 = cfg.N - nu0
    psi = (rng.random((M0, cfg.K)) < np.asarray(cfg.eps[1:])).astype(np.int8)
    return psi, psi.sum(axis=0), M0


def draw_session(cfg, rng):
    alpha = draw_fading(cfg, rng)
    psi, _, M0 = draw_activity(cfg, rng)
    return SessionRealization(alpha, psi, M0, cfg.tau_a)


def synthesize_slots(sig, real, cfg, rng):
    """y_p = S Psi_p alpha + z_p with z_p ~ CN(0, 2 N0 I_L)."""
    S = sig.S
    if real.psi.shape[1] != S.shape[1] or len(real.alpha) != S.shape[1]:
        raise ValueError("session and signature dimensions disagree")
    clean = (real.psi * real.alpha) @ S.T
    noise = complex_normal(rng, cfg.noise_power, clean.shape)
    return SlotObservations(clean + noise)


def dump_session(prefix, real, obs, seed):
    """Write ``prefix``.csv (one row per slot/component) and ``prefix``.json."""
    with open(f"{prefix}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "component", "re", "im"])
        for p, yp in enumerate(obs.y):
            for l, v in enumerate(yp):
                w.writerow([p, l, repr(float(v.real)), repr(float(v.imag))])
    sidecar = {
        "seed": int(seed),
        "M0": int(real.M0),
        "L": int(obs.y.shape[1]),
        "alpha_re": real.alpha.real.tolist(),
        "alpha_im": real.alpha.imag.tolist(),
        "psi": real.psi.tolist(),
        "nu": real.nu.tolist(),
        "neighbor_truth": real.neighbor_truth.tolist(),
    }
    with open(f"{prefix}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_session(prefix, tau_a):
    with open(f"{prefix}.json") as fh:
        meta = json.load(fh)
    alpha = np.asarray(meta["alpha_re"]) + 1j * np.asarray(meta["alpha_im"])
    real = SessionRealization(alpha, np.asarray(meta["psi"]), meta["M0"], tau_a)
    L = int(meta.get("L", 0))
    rows = []
    with open(f"{prefix}.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["p"]), int(row["component"]), float(row["re"]), float(row["im"])))
            L = max(L, int(row["component"]) + 1)
    y = np.zeros((real.M0, L), dtype=complex)
    for p, l, re, im in rows:
        y[p, l] = re + 1j * im
    return real, SlotObservations(y), meta["seed"]
