"""Closed-form false-alarm / miss probabilities and threshold design.

Conditional on the sensing-slot count M0 and the transmit counts nu, the
incoherent detector's statistic is a scaled noncentral chi-square with 2 M0
degrees of freedom and every linear test |c^T y|^2 one with 2 degrees of
freedom. Averaging the Marcum tail over the Rayleigh amplitude gives
geometric series in k of products of regularized incomplete gammas:

    joint(k) = r^k Q(m + k; x) Q(k + 1; xa (1 + g)),   r = g / (1 + g)

with (m, g, x) = (M0, nu1 rho1, tau^2 / 2 sigma_n^2) for ID and
(1, nu1^2 rho_eq, tau^2 / 2 Sigma^2) for linear tests, xa = tau_a^2 / 2 sigma1^2.

Unconditional curves average these over M0 ~ Bin(N, 1 - eps0) (M0 >= 1) and
nu ~ Bin(M0, eps); the asymptotic curves plug in M0 = N(1 - eps0) and
nu_k = M0 eps_k.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import binom, ncx2

from .signatures import correlator_bank, mmoe_correlator, zf_correlator
from .special import log_poisson_pmf, log_reg_gamma_lower, log_reg_gamma_upper

log = logging.getLogger(__name__)

SERIES_RTOL = 1e-12
TAIL_MASS = 1e-10
# contexts whose series would need more terms than this are integrated directly
MAX_WINDOW = 20_000
DETECTOR_KINDS = ("ID", "ZF-CD", "ZF", "MF", "MMOE")


@dataclass(frozen=True)
class SinrContext:
    """Conditioning quantities for node 1 (arrays broadcast elementwise).

    For ID only rho1 / sigma_n2 are used; for linear tests rho_eq / big_sigma2.
    """

    rho1: np.ndarray
    sigma_n2: np.ndarray
    nu: np.ndarray
    M0: np.ndarray
    rho_eq: np.ndarray = None
    big_sigma2: np.ndarray = None


@dataclass(frozen=True)
class PerfPoint:
    pF: float
    pM: float
    pE: float
    provenance: str
    conditioning: dict = field(default=None, compare=False)
    stderr: float = None

    @classmethod
    def compose(cls, pF, pM, p_neighbor, provenance, **kw):
        pE = pF * (1 - p_neighbor) + pM * p_neighbor
        return cls(float(pF), float(pM), float(pE), provenance, **kw)


def id_context(sig, cfg, nu1, M0, i=0):
    sigma_n2 = sig.noise_enhancement[i] * cfg.N0
    return SinrContext(
        rho1=cfg.sigma_sq[i] / sigma_n2,
        sigma_n2=sigma_n2,
        nu=np.asarray(nu1, dtype=float),
        M0=np.asarray(M0, dtype=float),
    )


def interference_noise_scale(c, sig, cfg, nu, M0, i=0):
    """Sigma^2(c) = sum_{k != i} sigma_k^2 nu_k^2 |c^T s_k|^2 + M0 N0 ||c||^2.

    ``nu`` is (..., K); the i-th entry is ignored.
    """
    nu = np.asarray(nu, dtype=float)
    proj = np.abs(c @ sig.S) ** 2
    proj[i] = 0.0
    interf = (nu**2 * (cfg.sigma_sq * proj)).sum(axis=-1)
    return interf + np.asarray(M0, dtype=float) * cfg.N0 * float(np.vdot(c, c).real)


def lndt_context(c, sig, cfg, nu, M0, i=0):
    nu = np.asarray(nu, dtype=float)
    big = interference_noise_scale(c, sig, cfg, nu, M0, i)
    gain = abs(c @ sig.S[:, i]) ** 2
    sigma_n2 = sig.noise_enhancement[i] * cfg.N0
    return SinrContext(
        rho1=cfg.sigma_sq[i] / sigma_n2,
        sigma_n2=sigma_n2,
        nu=nu[..., i],
        M0=np.asarray(M0, dtype=float),
        rho_eq=cfg.sigma_sq[i] * gain / big,
        big_sigma2=big,
    )


# ---------------------------------------------------------------------------
# series engine


def _logcumsumexp(v):
    """log(cumsum(exp(v))) along axis 1, shifted by the row maximum."""
    c = np.max(v, axis=1, keepdims=True)
    c = np.where(np.isfinite(c), c, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.cumsum(np.exp(v - c), axis=1)) + c


def _log_upper_seq(m, x, K):
    """log Q(m + k; x) for k = 0..K, shape (n, K + 1)."""
    j = np.arange(K)
    start = np.asarray(log_reg_gamma_upper(m, x)).reshape(-1, 1)
    inc = log_poisson_pmf(m[:, None] + j[None, :], x[:, None])
    return _logcumsumexp(np.concatenate([start, inc], axis=1))


def _log_lower_seq(m, x, K):
    """log P(m + k; x) for k = 0..K via P(a; x) = P(a + 1; x) + pmf(a; x)."""
    j = np.arange(K)
    top = np.asarray(log_reg_gamma_lower(m + K, x)).reshape(-1, 1)
    inc = log_poisson_pmf(m[:, None] + j[None, :], x[:, None])
    seq = np.concatenate([inc, top], axis=1)[:, ::-1]
    return _logcumsumexp(seq)[:, ::-1]


def _window(m, g, x, y, which):
    """Per-context summation window [k_lo, k_hi].

    The upper end combines the geometric decay of r^k with the Poisson-like
    edge of the incomplete-gamma factors; the lower end skips leading terms
    whose gamma factor is negligible (checked afterwards by a head bound).
    """
    with np.errstate(divide="ignore"):
        logr = np.log(g) - np.log1p(g)
        k_geo = np.where(g > 0, (np.log(SERIES_RTOL * 1e-2) - np.log1p(g)) / logr, 0.0)
    if which == "F":
        k_pois = y + 10 * np.sqrt(y) + 20
        k_lo = x - m - 10 * np.sqrt(x) - 10
    elif which == "M":
        k_pois = np.maximum(0.0, x - m) + 10 * np.sqrt(x) + 20
        k_lo = y - 10 * np.sqrt(y) - 10
    else:
        k_pois = np.full_like(g, np.inf)
        k_lo = np.maximum(x - m - 10 * np.sqrt(x), y - 10 * np.sqrt(y)) - 10
    k_hi = np.maximum(np.ceil(np.minimum(k_geo, k_pois)), 1)
    k_lo = np.clip(np.floor(k_lo), 0, k_hi - 1)
    return k_lo, k_hi


def _unique_rows(*cols):
    key = np.stack(cols, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    return uniq.T, inv.ravel()


def _series_block(m, g, x, xa, which):
    """Log of the unnormalized series for one block of contexts.

    which: "F" -> sum r^k Q(m+k;x) P(k+1;y)   (false alarm)
           "M" -> sum r^k P(m+k;x) Q(k+1;y)   (miss, complementary form)
           "J" -> sum r^k Q(m+k;x) Q(k+1;y)   (joint detection, as printed)

    All rows sum k = lo .. lo + W; the (m, x) and (g, y) sequences are
    computed once per distinct pair (for ID they depend on M0 and nu1
    separately). Skipped head terms k < lo are bounded using the
    monotonicity of Q(a; x) in a: each is at most Q(m + lo; x) (F, J) or
    Q(lo + 1; y) (M, J).
    """
    y = xa * (1 + g)
    with np.errstate(divide="ignore"):
        logr = np.log(g) - np.log1p(g)
    lo, hi = _window(m, g, x, y, which)
    lo = np.full_like(lo, lo.min())
    W = int(hi.max() - lo.min())
    while True:
        k = lo[:, None] + np.arange(W + 1)[None, :]
        with np.errstate(invalid="ignore"):
            kl = np.where(k == 0, 0.0, k * logr[:, None])
        (mu, xu), ia = _unique_rows(m + lo, x)
        (bu, yu), ib = _unique_rows(1.0 + lo, y)
        if which == "F":
            a = _log_upper_seq(mu, xu, W)
            b = _log_lower_seq(bu, yu, W + 1)
            tail = b[ib, -1]
            b = b[:, :-1]
            head = a[ia, 0]
        elif which == "M":
            a = _log_lower_seq(mu, xu, W + 1)
            b = _log_upper_seq(bu, yu, W)
            tail = a[ia, -1]
            a = a[:, :-1]
            head = b[ib, 0]
        else:
            a = _log_upper_seq(mu, xu, W)
            b = _log_upper_seq(bu, yu, W)
            tail = np.zeros_like(m)
            head = np.minimum(a[ia, 0], b[ib, 0])
        K = lo + W
        with np.errstate(invalid="ignore", divide="ignore"):
            total = logsumexp(kl + a[ia] + b[ib], axis=1)
            tail_bound = tail + (K + 1) * logr + np.log1p(g)
            head_bound = np.where(lo > 0, np.log(lo) + head, -np.inf)
        limit = total + np.log(SERIES_RTOL)
        tail_ok = (tail_bound <= limit) | (tail_bound < -700) | ~np.isfinite(tail_bound)
        head_ok = (head_bound <= limit) | (head_bound < -700)
        if tail_ok.all() and head_ok.all():
            log.debug(
                "series %s: %d contexts, window width %d, k_lo in [%d, %d]",
                which, len(m), W, lo.min(), lo.max(),
            )
            return total
        if not head_ok.all():
            lo = np.where(head_ok, lo, np.floor(lo / 2))
            W = W + int(np.max(K - (lo + W)))
        if not tail_ok.all():
            W *= 2


def _series(m, g, x, xa, which, step=2000):
    m, g, x, xa = (np.asarray(v, dtype=float).ravel() for v in np.broadcast_arrays(m, g, x, xa))
    out = np.empty(m.shape)
    if m.size == 0:
        return out
    # sort so neighbouring contexts have similar windows
    order = np.argsort(g + x)
    for s in range(0, m.size, step):
        idx = order[s : s + step]
        out[idx] = _series_block(m[idx], g[idx], x[idx], xa[idx], which)
    return out


def _quad_perf(m, g, x, xa):
    """(pF, pM) by integrating the conditional chi-square tail over v = |alpha|^2 / 2 sigma1^2 ~ Exp(1).

    Used at very high SNR, where r = g / (1 + g) is so close to one that the
    series needs ~xa g terms.
    """
    pF = np.empty(len(m))
    pM = np.empty(len(m))
    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=400)
    for j, (mj, gj, xj, xaj) in enumerate(zip(m, g, x, xa)):
        sf = lambda v: ncx2.sf(2 * xj, 2 * mj, 2 * gj * v) if gj * v > 0 else ncx2.sf(2 * xj, 2 * mj, 0)  # noqa: E731
        # the conditional tail switches from 0 to 1 around v = (x - m) / g
        centre = max(xj - mj, 0.0) / gj if gj > 0 else 0.0
        width = (np.sqrt(xj) + np.sqrt(mj) + 1) * 10 / gj if gj > 0 else np.inf
        brk = [v for v in (centre - width, centre, centre + width) if v > 0]
        lo_pts = [v for v in brk if v < xaj]
        a = integrate.quad(lambda v: sf(v) * np.exp(-v), 0, xaj, points=lo_pts or None, **opts)[0]
        top = xaj + 60.0
        hi_pts = [v for v in brk if xaj < v < top]
        b = integrate.quad(lambda v: (1 - sf(v)) * np.exp(-(v - xaj)), xaj, top, points=hi_pts or None, **opts)[0]
        pF[j] = a / -np.expm1(-xaj)
        pM[j] = b
    return pF, pM


def _needs_quad(m, g, x, xa):
    y = xa * (1 + g)
    big = np.zeros(m.shape, dtype=bool)
    for which in "FM":
        lo, hi = _window(m, g, x, y, which)
        big |= hi - lo > MAX_WINDOW
    return big


def series_perf(m, g, x, xa, pm_form="complement"):
    """Conditional (pF, pM) arrays for the generic series parameters."""
    m, g, x, xa = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(m, g, x, xa))
    shape = m.shape
    m, g, x, xa = (v.ravel() for v in (m, g, x, xa))
    pF = np.empty(m.shape)
    pM = np.empty(m.shape)
    big = _needs_quad(m, g, x, xa) & (xa > 0)
    if big.any():
        pF[big], pM[big] = _quad_perf(m[big], g[big], x[big], xa[big])
    s = ~big
    m, g, x, xa = m[s], g[s], x[s], xa[s]
    with np.errstate(divide="ignore", invalid="ignore"):
        p_lo = -np.expm1(-xa)
        logF = _series(m, g, x, xa, "F")
        f = np.exp(logF - np.log1p(g) - np.log(p_lo))
        if pm_form == "complement":
            mm = np.exp(_series(m, g, x, xa, "M") + xa - np.log1p(g))
        elif pm_form == "printed":
            mm = 1.0 - np.exp(_series(m, g, x, xa, "J") + xa - np.log1p(g))
        else:
            raise ValueError(f"unknown pm_form {pm_form!r}")
    pF[s] = np.where(p_lo > 0, f, np.nan)
    pM[s] = mm
    return _clamp(pF).reshape(shape), _clamp(pM).reshape(shape)


def _clamp(p):
    bad = (p < -1e-12) | (p > 1 + 1e-12)
    if np.any(bad & np.isfinite(p)):
        raise FloatingPointError(f"probability outside [0, 1]: {p[bad][:3]}")
    return np.clip(p, 0.0, 1.0)


def pf_prefactor(tau_a, sigma1_sq):
    """e^{u} csch(u) / 2 with u = tau_a^2 / 4 sigma1^2 (equals 1 / P(|alpha| < tau_a))."""
    u = tau_a**2 / (4 * sigma1_sq)
    return np.exp(u) / (2 * np.sinh(u))


def pm_prefactor(tau_a, sigma1_sq):
    """e^{tau_a^2 / 2 sigma1^2} (equals 1 / P(|alpha| > tau_a))."""
    return np.exp(tau_a**2 / (2 * sigma1_sq))


def _printed_perf(m, g, x, tau_a, sigma1_sq):
    """Both series exactly as printed: csch prefactor for pF, 1 - prefactor * joint for pM."""
    xa = tau_a**2 / (2 * sigma1_sq)
    m, g, x = (np.atleast_1d(np.asarray(v, dtype=float)) for v in np.broadcast_arrays(m, g, x))
    xa_arr = np.full(m.shape, xa)
    if _needs_quad(m, g, x, xa_arr).any():
        return series_perf(m, g, x, xa_arr)
    logF = _series(m, g, x, xa_arr, "F")
    logJ = _series(m, g, x, xa_arr, "J")
    with np.errstate(divide="ignore", over="ignore"):
        pF = pf_prefactor(tau_a, sigma1_sq) * np.exp(logF - np.log1p(g))
    pM = 1.0 - pm_prefactor(tau_a, sigma1_sq) * np.exp(logJ - np.log1p(g))
    return _clamp(pF), _clamp(pM)


def _cond_point(m, g, x, tau_a, sigma1_sq, p_nb, form, conditioning):
    if tau_a == 0:
        warnings.warn("tau_a = 0: false-alarm event has probability zero, pF undefined")
        pM = series_perf(m, g, x, 0.0, "complement")[1]
        return PerfPoint(float("nan"), float(pM), float(pM), "semiAnalytic", conditioning)
    if form == "printed":
        pF, pM = _printed_perf(m, g, x, tau_a, sigma1_sq)
    else:
        pF, pM = series_perf(m, g, x, tau_a**2 / (2 * sigma1_sq), form)
    return PerfPoint.compose(
        np.ravel(pF)[0], np.ravel(pM)[0], p_nb, "semiAnalytic", conditioning=conditioning
    )


def cond_perf_id(ctx, tau2, tau_a, sigma1_sq, form="printed"):
    """Conditional pF / pM of the incoherent detector given (nu1, M0)."""
    if np.any(np.asarray(ctx.M0) < 1):
        raise ValueError("M0 must be >= 1")
    g = np.asarray(ctx.nu) * ctx.rho1
    x = tau2 / (2 * ctx.sigma_n2)
    p_nb = np.exp(-tau_a**2 / (2 * sigma1_sq))
    cond = {"nu1": float(np.ravel(ctx.nu)[0]), "M0": float(np.ravel(ctx.M0)[0])}
    return _cond_point(ctx.M0, g, x, tau_a, sigma1_sq, p_nb, form, cond)


def cond_perf_lndt(c, ctx, tau2, tau_a, sigma1_sq, form="printed"):
    """Conditional pF / pM of a linear test |c^T y|^2 given (nu, M0).

    ``c`` is accepted for interface symmetry; everything it influences is
    already folded into ctx.rho_eq and ctx.big_sigma2 (see lndt_context).
    """
    if ctx.rho_eq is None:
        raise ValueError("context lacks linear-filter quantities; build it with lndt_context")
    g = np.asarray(ctx.nu) ** 2 * ctx.rho_eq
    x = tau2 / (2 * ctx.big_sigma2)
    p_nb = np.exp(-tau_a**2 / (2 * sigma1_sq))
    cond = {"nu1": float(np.ravel(ctx.nu)[0]), "M0": float(np.ravel(ctx.M0)[0])}
    return _cond_point(1.0, g, x, tau_a, sigma1_sq, p_nb, form, cond)


# ---------------------------------------------------------------------------
# unconditional averages


def _truncated_binom(n, p, lo=0):
    """Support and pmf of Bin(n, p) restricted to >= lo, with the least likely
    points dropped as long as their total mass stays below TAIL_MASS."""
    k = np.arange(lo, n + 1)
    w = binom.pmf(k, n, p)
    w = w / w.sum()
    order = np.argsort(w)
    drop = order[np.cumsum(w[order]) < TAIL_MASS]
    keep = np.ones(len(k), dtype=bool)
    keep[drop] = False
    return k[keep], w[keep] / w[keep].sum()


def _m0_dist(cfg):
    return _truncated_binom(cfg.N, 1 - cfg.eps[0], lo=1)


def exact_support(cfg, i=0):
    """Arrays (M0, nu_i, weight) over the truncated joint support."""
    M0s, wm = _m0_dist(cfg)
    out_m, out_n, out_w = [], [], []
    for M0, w0 in zip(M0s, wm):
        nus, wn = _truncated_binom(int(M0), cfg.eps[1 + i])
        out_m.append(np.full(len(nus), M0))
        out_n.append(nus)
        out_w.append(w0 * wn)
    return np.concatenate(out_m), np.concatenate(out_n), np.concatenate(out_w)


def sample_support(cfg, n, rng):
    """Monte Carlo draws of (M0, nu vector), M0 >= 1."""
    M0 = rng.binomial(cfg.N, 1 - cfg.eps[0], size=4 * n + 16)
    M0 = M0[M0 >= 1][:n]
    if len(M0) < n:
        raise RuntimeError("too many M0 = 0 draws; eps0 too close to 1")
    nu = rng.binomial(M0[:, None], np.asarray(cfg.eps[1:])[None, :])
    return M0, nu


class _Model:
    """Maps (kind, cfg, sig) onto series parameters for arrays of (M0, nu)."""

    def __init__(self, kind, cfg, sig, i=0):
        kind = kind.upper()
        if kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {kind!r}")
        self.kind, self.cfg, self.sig, self.i = kind, cfg, sig, i
        self.R = sig.noise_enhancement[i]
        self._mmoe = {}

    @property
    def interferer_free(self):
        return self.kind in ("ID", "ZF-CD", "ZF")

    def correlator(self, M0):
        if self.kind == "MF":
            return self.sig.S[:, self.i]
        if self.kind in ("ZF", "ZF-CD"):
            return zf_correlator(self.sig, self.i)
        key = float(M0)
        if key not in self._mmoe:
            self._mmoe[key] = mmoe_correlator(self.sig, self.cfg, M0, self.i)
        return self._mmoe[key]

    def params(self, tau2, M0, nu):
        """(m, g, x) arrays; ``nu`` is (n, K) or the target's count alone for ID/ZF."""
        cfg = self.cfg
        M0 = np.asarray(M0, dtype=float)
        nu = np.asarray(nu, dtype=float)
        if self.kind == "ID":
            nu1 = nu if nu.ndim == 1 else nu[:, self.i]
            ctx = id_context(self.sig, cfg, nu1, M0, self.i)
            return M0, nu1 * ctx.rho1, tau2 / (2 * ctx.sigma_n2)
        if nu.ndim == 1:
            full = np.zeros((len(nu), cfg.K))
            full[:, self.i] = nu
            nu = full
        scale = self.R**2 if self.kind == "ZF-CD" else 1.0
        g = np.empty(len(M0))
        x = np.empty(len(M0))
        for M in np.unique(M0):
            sel = M0 == M
            c = self.correlator(M)
            ctx = lndt_context(c, self.sig, cfg, nu[sel], M0[sel], self.i)
            g[sel] = ctx.nu**2 * ctx.rho_eq
            x[sel] = tau2 / scale / (2 * ctx.big_sigma2)
        return np.ones_like(M0), g, x

    def xa(self):
        return self.cfg.tau_a**2 / self.cfg.fading_power[self.i]


def uncond_perf(kind, cfg, sig, tau2, mode="nu1", n_mc=10_000, seed=0, i=0):
    """Semi-analytic (pF, pM, pE) averaged over the session statistics.

    ID and ZF-based tests depend only on (M0, nu1) and are summed exactly over
    the truncated binomial support. MF / MMOE also depend on the interferers'
    counts: mode="all" samples (M0, nu) ``n_mc`` times and reports a standard
    error; mode="nu1" sums exactly over (M0, nu1) with interferers fixed at
    their typical values M0 eps_k.
    """
    model = _Model(kind, cfg, sig, i)
    p_nb = cfg.p_neighbor(i)
    xa = model.xa()
    tau2 = float(tau2)
    if model.interferer_free or mode == "nu1":
        M0, nu1, w = exact_support(cfg, i)
        nu = nu1
        if not model.interferer_free:
            nu = M0[:, None] * np.asarray(cfg.eps[1:])[None, :]
            nu[:, i] = nu1
        m, g, x = model.params(tau2, M0, nu)
        pF, pM = series_perf(m, g, x, xa)
        pFm, pMm = float(w @ pF), float(w @ pM)
        return PerfPoint.compose(pFm, pMm, p_nb, "semiAnalytic", conditioning={"mode": mode})
    if mode != "all":
        raise ValueError(f"unknown averaging mode {mode!r}")
    rng = np.random.default_rng(seed)
    M0, nu = sample_support(cfg, n_mc, rng)
    m, g, x = model.params(tau2, M0, nu)
    pF, pM = series_perf(m, g, x, xa)
    pe = pF * (1 - p_nb) + pM * p_nb
    se = float(pe.std(ddof=1) / np.sqrt(len(pe)))
    return PerfPoint.compose(
        pF.mean(), pM.mean(), p_nb, "semiAnalytic", conditioning={"mode": mode}, stderr=se
    )


def asymptotic_perf(kind, cfg, sig, tau2, i=0):
    """Conditional formula at the typical point M0 = N(1 - eps0), nu_k = M0 eps_k."""
    model = _Model(kind, cfg, sig, i)
    M0 = cfg.N * (1 - cfg.eps[0])
    nu = M0 * np.asarray(cfg.eps[1:])[None, :]
    m, g, x = model.params(float(tau2), np.array([M0]), nu)
    pF, pM = series_perf(m, g, x, model.xa())
    return PerfPoint.compose(
        pF[0], pM[0], cfg.p_neighbor(i), "asymptotic", conditioning={"M0": M0, "nu1": nu[0, i]}
    )


def perf_curve(kind, cfg, sig, tau2_grid, provenance="semiAnalytic", **kw):
    """Arrays pF, pM, pE (and stderr) over a threshold grid."""
    fn = asymptotic_perf if provenance == "asymptotic" else uncond_perf
    pts = [fn(kind, cfg, sig, t, **kw) for t in np.asarray(tau2_grid, dtype=float)]
    return {
        "tau2": np.asarray(tau2_grid, dtype=float),
        "pF": np.array([p.pF for p in pts]),
        "pM": np.array([p.pM for p in pts]),
        "pE": np.array([p.pE for p in pts]),
        "stderr": np.array([np.nan if p.stderr is None else p.stderr for p in pts]),
        "provenance": provenance,
    }


# ---------------------------------------------------------------------------
# thresholds


def asymptotic_thresholds(cfg, sig, i=0):
    """Large-N thresholds (tau2_CD, tau2_ID) from the CI / II estimator means at |alpha|^2 = tau_a^2."""
    M0 = cfg.N * (1 - cfg.eps[0])
    e1 = cfg.eps[1 + i]
    floor = cfg.noise_power * sig.noise_enhancement[i]
    ta2 = cfg.tau_a**2
    tau2_cd = M0 * (e1 * ta2 * (M0 * e1 + (1 - e1)) + floor)
    tau2_id = M0 * (ta2 * e1 + floor)
    return float(tau2_cd), float(tau2_id)


def asymptotic_threshold(kind, cfg, sig, i=0):
    """Asymptotic threshold in the statistic units of ``kind`` (ID or ZF-CD)."""
    cd, idt = asymptotic_thresholds(cfg, sig, i)
    kind = kind.upper()
    if kind == "ID":
        return idt
    if kind == "ZF-CD":
        return cd
    if kind == "ZF":
        return cd / sig.noise_enhancement[i] ** 2
    raise ValueError(f"no asymptotic threshold for {kind!r}")


@dataclass
class ThresholdOpt:
    tau2: float
    pE: float
    curve: dict
    boundary: bool
    evaluations: int


def golden_section(f, lo, hi, rtol=1e-3, max_iter=200):
    """Minimize a unimodal f on [lo, hi]; returns (x, f(x), n_evals)."""
    invphi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    n = 2
    for _ in range(max_iter):
        if abs(b - a) <= rtol * abs(c + d) / 2:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        n += 1
    x, fx = (c, fc) if fc < fd else (d, fd)
    return x, fx, n


def optimize_threshold(kind, cfg, sig, bracket=None, n_curve=21, rtol=1e-3, point_fn=None, **kw):
    """Minimize P(e) over the amplitude threshold tau with golden-section search.

    ``bracket`` is (tau2_lo, tau2_hi); the default spans 0.4..1.8 times the
    asymptotic threshold (ID / ZF) or a range around the typical statistic
    (MF / MMOE). P(e) is first sampled on ``n_curve`` equispaced tau values
    (returned for plotting); golden-section search then refines inside the
    two cells around the best sample down to relative tolerance ``rtol`` on
    tau. If the best sample is a bracket end the curve is monotone there and
    that end is returned with a warning.
    """
    if point_fn is None:

        def point_fn(t2):
            return uncond_perf(kind, cfg, sig, t2, **kw)

    cache = {}

    def pe(tau):
        if tau not in cache:
            cache[tau] = point_fn(tau * tau)
        return cache[tau].pE

    if bracket is None:
        if kind.upper() in ("ID", "ZF-CD", "ZF"):
            t0 = asymptotic_threshold(kind, cfg, sig)
        else:
            M0 = cfg.N * (1 - cfg.eps[0])
            t0 = (M0 * cfg.eps[1]) ** 2 * cfg.tau_a**2
        bracket = (0.4 * t0, 1.8 * t0)
    lo, hi = (float(np.sqrt(b)) for b in bracket)
    taus = np.linspace(lo, hi, n_curve)
    pes = np.array([pe(t) for t in taus])
    curve = {
        "tau2": taus**2,
        "pF": np.array([cache[t].pF for t in taus]),
        "pM": np.array([cache[t].pM for t in taus]),
        "pE": pes,
    }
    j = int(np.argmin(pes))
    if j in (0, n_curve - 1):
        warnings.warn(f"P(e) minimum at bracket boundary for {kind}; returning boundary point")
        return ThresholdOpt(float(taus[j] ** 2), float(pes[j]), curve, True, len(cache))
    t, fx, _ = golden_section(pe, taus[j - 1], taus[j + 1], rtol=rtol)
    if pes[j] < fx:
        t, fx = taus[j], pes[j]
    return ThresholdOpt(float(t * t), float(fx), curve, False, len(cache))


def count_local_minima(values):
    """Number of strict interior local minima of a sampled curve (plateaus collapsed)."""
    v = np.asarray(values, dtype=float)
    keep = np.concatenate([[True], np.diff(v) != 0])
    v = v[keep]
    if len(v) < 3:
        return 0
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))


def threshold_for_pf(kind, cfg, sig, pf_target, **kw):
    """tau^2 at which the unconditional false-alarm probability equals ``pf_target``.

    pF is nonincreasing in tau^2, so a root is bracketed on a log scale.
    """
    def f(log_t2):
        return uncond_perf(kind, cfg, sig, np.exp(log_t2), **kw).pF - pf_target

    lo, hi = np.log(1e-6), np.log(1e8)
    if not f(lo) > 0 > f(hi):
        raise ValueError(f"pF = {pf_target} not attained for {kind}")
    t2 = float(np.exp(brentq(f, lo, hi, xtol=1e-10, rtol=1e-10)))
    return t2, uncond_perf(kind, cfg, sig, t2, **kw)


def bank_for(kind, sig, cfg, M0):
    """Correlator bank matching a linear-test detector kind."""
    return correlator_bank(sig, "ZF" if kind.upper() == "ZF-CD" else kind, cfg, M0)
