"""Decision rules for neighbor discovery.

Suboptimum detectors work on decorrelated slot outputs S+ y_p (coherent and
incoherent integration) or on the cumulative observation y = sum_p y_p
(linear tests |c^T y|^2). Two brute-force oracles, joint ML estimation and
the MAP rule over all 2^K neighbor sets, are provided for tiny networks.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp, xlog1py, xlogy
from scipy.stats import ncx2


class NoObservationError(ValueError):
    """Raised when node 0 sensed no slot (M0 == 0)."""


class CapabilityError(RuntimeError):
    """Raised when an oracle would exceed its enumeration bound."""


def _check_slots(y):
    y = np.asarray(y)
    if y.ndim < 2 or y.shape[-2] == 0:
        raise NoObservationError("no sensing slot available")
    return y


def slot_decorrelate(S_pinv, y):
    """S+ y_p for each slot; ``y`` is (..., M0, L), result (..., M0, K)."""
    y = np.asarray(y)
    if y.shape[-1] != S_pinv.shape[1]:
        raise ValueError(f"slot length {y.shape[-1]} != signature length {S_pinv.shape[1]}")
    return y @ S_pinv.T


@dataclass(frozen=True)
class PowerEstimate:
    value: np.ndarray
    kind: str


def estimate_ci(d):
    """Coherent integration |mean_p d_p|^2 per node."""
    d = _check_slots(d)
    return PowerEstimate(np.abs(d.mean(axis=-2)) ** 2, "CI")


def estimate_ii(d):
    """Incoherent integration mean_p |d_p|^2 per node."""
    d = _check_slots(d)
    return PowerEstimate((np.abs(d) ** 2).mean(axis=-2), "II")


def ci_mean(alpha_abs2, eps, M0, noise_floor):
    """E[CI] given |alpha|^2 and M0: |alpha|^2 eps (eps + (1 - eps)/M0) + noise_floor/M0.

    noise_floor is 2 N0 (S^T S)^-1_ii, the per-slot noise variance after decorrelation.
    """
    return alpha_abs2 * eps * (eps + (1 - eps) / M0) + noise_floor / M0


def ii_mean(alpha_abs2, eps, noise_floor):
    """E[II] given |alpha|^2: |alpha|^2 eps + noise_floor (independent of M0)."""
    return alpha_abs2 * eps + noise_floor


@dataclass(frozen=True)
class Decision:
    per_node: np.ndarray
    statistics: np.ndarray
    thresholds: np.ndarray


def threshold_decision(stat, tau2):
    """Neighbor iff statistic > threshold; ties go to 'not neighbor'."""
    stat = np.asarray(stat, dtype=float)
    tau2 = np.broadcast_to(np.asarray(tau2, dtype=float), stat.shape)
    return Decision(stat > tau2, stat, tau2.copy())


def cd_statistic(ysum, S_pinv):
    """|sum_p (S+ y_p)_i|^2, computed as |(S+ y)_i|^2."""
    return np.abs(np.asarray(ysum) @ S_pinv.T) ** 2


def decide_cd(ysum, S_pinv, tau2, M0):
    if M0 < 1:
        raise NoObservationError("no sensing slot available")
    return threshold_decision(cd_statistic(ysum, S_pinv), tau2)


def id_statistic(d):
    d = _check_slots(d)
    return (np.abs(d) ** 2).sum(axis=-2)


def decide_id(d, tau2):
    return threshold_decision(id_statistic(d), tau2)


def decide_lndt(ysum, bank, tau2, M0):
    if M0 < 1:
        raise NoObservationError("no sensing slot available")
    return threshold_decision(bank.statistic(ysum), tau2)


def write_decision_rows(path, rows):
    """rows: iterable of (session_id, Decision, truth) -> CSV lines per node."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["session", "node", "statistic", "threshold", "decision", "truth"])
        for sid, dec, truth in rows:
            for i, (s, t, n) in enumerate(zip(dec.statistics, dec.thresholds, dec.per_node)):
                w.writerow([sid, i + 1, repr(float(s)), repr(float(t)), int(n), int(truth[i])])


def _patterns(K, M0):
    n = 2 ** (K * M0)
    bits = (np.arange(n)[:, None] >> np.arange(K * M0)) & 1
    return bits.reshape(n, M0, K).astype(float)


@dataclass(frozen=True)
class MLResult:
    alpha: np.ndarray
    psi: np.ndarray
    residual: float


def ls_residual(S, y, psi, alpha):
    """sum_p ||y_p - S Psi_p alpha||^2."""
    return float(np.sum(np.abs(np.asarray(y) - (psi * alpha) @ S.T) ** 2))


def _normal_equations(G, u, psi):
    A = np.einsum("npi,npj->nij", psi, psi) * G
    b = np.einsum("npi,pi->ni", psi, u)
    return A, b


def _solve_patterns(sig, y, psi):
    """Least-squares alpha and residual for each pattern in ``psi`` (n, M0, K)."""
    K = sig.K
    S = sig.S
    A, b = _normal_equations(sig.gram, y @ S, psi)
    inactive = psi.sum(axis=1) == 0
    A = np.where(inactive[:, :, None] | inactive[:, None, :], 0.0, A)
    A = A + np.eye(K) * inactive[:, :, None]
    b = np.where(inactive, 0.0, b)
    alpha = np.linalg.solve(A.astype(complex), b[..., None])[..., 0]
    fit = np.einsum("npk,nk,lk->npl", psi, alpha, S)
    res = np.sum(np.abs(y[None] - fit) ** 2, axis=(1, 2))
    return alpha, res


def ls_fit(sig, y, psi):
    """Least-squares amplitudes for a known activity pattern ``psi`` (M0 x K)."""
    y = _check_slots(y)
    psi = np.asarray(psi, dtype=float).reshape(1, y.shape[0], sig.K)
    alpha, res = _solve_patterns(sig, y, psi)
    return MLResult(alpha[0], psi[0].astype(np.int8), float(res[0]))


def ml_joint_oracle(sig, y, max_terms=16):
    """Joint ML estimate of alpha over all 2^(K M0) activity patterns.

    Nodes inactive in every slot of a pattern get alpha = 0; the normal
    equations are solved on the remaining active nodes.
    """
    y = _check_slots(y)
    M0, K = y.shape[0], sig.K
    if K * M0 > max_terms:
        raise CapabilityError(f"K*M0 = {K * M0} exceeds enumeration bound {max_terms}")
    psi = _patterns(K, M0)
    alpha, res = _solve_patterns(sig, y, psi)
    best = int(np.argmin(res))
    return MLResult(alpha[best], psi[best].astype(np.int8), float(res[best]))


def hypothesis_table(K):
    """Neighbor sets in the order H1..H_{2^K}; entry [h][i] is True when |alpha_i| > tau_a."""
    return [tuple(bool((h >> i) & 1) for i in range(K)) for h in range(2**K)]


def rayleigh_priors(cfg):
    p_hi = np.exp(-cfg.tau_a**2 / np.asarray(cfg.fading_power))
    table = np.array(hypothesis_table(cfg.K))
    return np.prod(np.where(table, p_hi, 1 - p_hi), axis=1)


def _rician_sf(mu_abs, var, tau):
    """P(|a| > tau) for a ~ CN(mu, var)."""
    s2 = var / 2
    return ncx2.sf(tau**2 / s2, 2, mu_abs**2 / s2)


@dataclass(frozen=True)
class MapResult:
    index: int
    above: tuple
    log_scores: np.ndarray


def map_oracle(
    sig, y, cfg, priors=None, n_quad=64, n_phase=32, prune=40.0, quad_prune=20.0, max_K=2, max_M0=4
):
    """MAP choice among the 2^K neighbor sets given the M0 slot vectors.

    For every activity pattern the amplitude posterior is complex Gaussian,
    so P(H) p(y | H) = sum_Psi P(Psi) p(y | Psi) P(alpha in region_H | y, Psi)
    under the default Rayleigh-induced priors. Region probabilities are
    Rician tails; for K = 2 with coupled posteriors the joint probability is
    integrated over |alpha_2| < tau_a with an ``n_quad``-point Gauss-Legendre
    rule in amplitude and ``n_phase`` trapezoid points in phase. Patterns
    whose weight is below e^-prune of the best one are skipped; those below
    e^-quad_prune take the midpoint of the Frechet bounds on the joint
    probability instead of the quadrature (relative score error < e^-quad_prune).
    """
    y = _check_slots(y)
    M0, K = y.shape[0], sig.K
    if K > max_K or M0 > max_M0:
        raise CapabilityError(f"MAP oracle limited to K <= {max_K}, M0 <= {max_M0}")
    if cfg.K != K:
        raise ValueError("config and signature set disagree on K")
    tau = cfg.tau_a
    N0x2 = cfg.noise_power
    eps = np.asarray(cfg.eps[1:])
    fp = np.asarray(cfg.fading_power)

    psi = _patterns(K, M0)
    A, b = _normal_equations(sig.gram, y @ sig.S, psi)
    P = A / N0x2 + np.diag(1.0 / fp)
    C = np.linalg.inv(P)
    mu = np.einsum("nij,nj->ni", C, b) / N0x2
    _, logdet = np.linalg.slogdet(P)
    logprior = (xlogy(psi, eps) + xlog1py(1 - psi, -eps)).sum(axis=(1, 2))
    logw = logprior + np.real(np.einsum("ni,ni->n", b.conj(), mu)) / N0x2 - logdet
    keep = logw > logw.max() - prune
    logw, C, mu = logw[keep], C[keep], mu[keep]

    var = np.real(np.diagonal(C, axis1=1, axis2=2))
    p_hi = _rician_sf(np.abs(mu), var, tau)
    if K == 1:
        region = np.stack([1 - p_hi[:, 0], p_hi[:, 0]], axis=1)
    else:
        j_hi_lo = p_hi[:, 0] * (1 - p_hi[:, 1])
        coupled = np.abs(C[:, 0, 1]) > 1e-15 * np.sqrt(var[:, 0] * var[:, 1])
        # Frechet bounds already pin the joint probability for decisive marginals
        lo = np.maximum(0.0, p_hi[:, 0] - p_hi[:, 1])
        hi = np.minimum(p_hi[:, 0], 1 - p_hi[:, 1])
        coupled &= hi - lo > 1e-12
        j_hi_lo = np.where(coupled, 0.5 * (lo + hi), j_hi_lo)
        coupled &= logw > logw.max() - quad_prune
        if coupled.any():
            j_hi_lo[coupled] = _joint_hi_lo(
                mu[coupled], C[coupled], 1 - p_hi[coupled, 1], tau, n_quad, n_phase
            )
        j_hi_hi = p_hi[:, 0] - j_hi_lo
        j_lo_lo = (1 - p_hi[:, 1]) - j_hi_lo
        j_lo_hi = 1 - j_hi_lo - j_hi_hi - j_lo_lo
        region = np.stack([j_lo_lo, j_hi_lo, j_lo_hi, j_hi_hi], axis=1)
    region = np.clip(region, 0.0, 1.0)

    with np.errstate(divide="ignore"):
        scores = logsumexp(logw[:, None] + np.log(region), axis=0)
        if priors is not None:
            scores = scores + np.log(np.asarray(priors, dtype=float)) - np.log(rayleigh_priors(cfg))
    idx = int(np.argmax(scores))
    return MapResult(idx, hypothesis_table(K)[idx], scores)


@lru_cache(maxsize=16)
def _disk_rule(tau, n_quad, n_phase):
    x, w = np.polynomial.legendre.leggauss(n_quad)
    r = 0.5 * tau * (x + 1)
    wr = 0.5 * tau * w * r
    th = 2 * np.pi * np.arange(n_phase) / n_phase
    a2 = (r[:, None] * np.exp(1j * th[None, :])).ravel()
    return a2, np.repeat(wr, n_phase)


def _joint_hi_lo(mu, C, p2_lo, tau, n_quad, n_phase):
    """P(|a1| > tau, |a2| < tau) for posteriors CN(mu, C), vectorized over patterns."""
    a2, wgt = _disk_rule(tau, n_quad, n_phase)

    c11 = np.real(C[:, 0, 0])
    c22 = np.real(C[:, 1, 1])
    c12 = C[:, 0, 1]
    diff = a2[None, :] - mu[:, 1, None]
    logdens = -np.abs(diff) ** 2 / c22[:, None]
    logdens -= logdens.max(axis=1, keepdims=True)
    dens = np.exp(logdens) * wgt[None, :]

    m = mu[:, 0, None] + (c12 / c22)[:, None] * diff
    v = c11 - np.abs(c12) ** 2 / c22
    q = _rician_sf(np.abs(m), v[:, None], tau)
    ratio = (dens * q).sum(axis=1) / dens.sum(axis=1)
    return p2_lo * ratio
