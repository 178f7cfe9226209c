"""Experiment drivers: ROC, asymptotic convergence, threshold sweeps, CD/ID
comparison and the tiny-network oracle check.

Every experiment returns a ResultTable whose rows carry the seed and a hash
of the experiment spec. Rows hold no timing so that a rerun with the same
spec is byte-identical; wall time goes to the JSON manifest only.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    asymptotic_perf,
    asymptotic_threshold,
    count_local_minima,
    optimize_threshold,
    threshold_for_pf,
    uncond_perf,
)
from .channel import NetworkConfig, complex_normal, session_rng
from .detectors import (
    hypothesis_table,
    id_statistic,
    ls_fit,
    map_oracle,
    ml_joint_oracle,
    slot_decorrelate,
)
from .signatures import correlator_bank, paper_signatures
from .simulate import empirical_rates, simulate

EXPERIMENTS = ("roc", "convergence", "threshold-sweep", "compare", "oracle-check")
DETECTORS = ("MF", "ZF", "ZF-CD", "MMOE", "ID")
LOW_CONFIDENCE_EVENTS = 100

COLUMNS = (
    "experiment", "detector", "N", "snr_db", "tau2", "pF", "pM", "pE", "provenance",
    "stderr", "stderr_F", "stderr_M", "low_confidence", "note", "seed", "config_hash",
)


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    cfg: NetworkConfig
    detectors: tuple = ("ZF-CD", "ID")
    trials: int = 10_000
    seed: int = 0
    tau2_grid: tuple = None
    snr_db: tuple = None
    slots: tuple = None
    n_grid: int = 21
    mode: str = "nu1"
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        dets = tuple(d.upper() for d in self.detectors)
        if not dets or set(dets) - set(DETECTORS):
            raise ValueError(f"detectors must be a nonempty subset of {DETECTORS}")
        object.__setattr__(self, "detectors", dets)
        for name in ("tau2_grid", "snr_db", "slots"):
            v = getattr(self, name)
            if v is not None:
                if len(v) == 0:
                    raise ValueError(f"{name} grid is empty")
                object.__setattr__(self, name, tuple(v))
        if self.n_grid < 3:
            raise ValueError("n_grid must be >= 3")

    def to_dict(self):
        d = asdict(self)
        d["cfg"] = self.cfg.to_dict()
        return d

    @property
    def config_hash(self):
        d = self.to_dict()
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_time: float = None

    def add(self, detector, N, snr_db, tau2, pF, pM, pE, provenance,
            stderr=None, stderr_F=None, stderr_M=None, low_confidence=False, note=""):
        self.rows.append({
            "experiment": self.spec.experiment,
            "detector": detector,
            "N": int(N),
            "snr_db": float(snr_db),
            "tau2": float(tau2),
            "pF": float(pF),
            "pM": float(pM),
            "pE": float(pE),
            "provenance": provenance,
            "stderr": _opt(stderr),
            "stderr_F": _opt(stderr_F),
            "stderr_M": _opt(stderr_M),
            "low_confidence": int(bool(low_confidence)),
            "note": note,
            "seed": self.spec.seed,
            "config_hash": self.spec.config_hash,
        })

    def add_empirical(self, detector, N, snr_db, tau2, e, note=""):
        self.add(detector, N, snr_db, tau2, e.pF, e.pM, e.pE, "simulated",
                 e.sE, e.sF, e.sM, e.errors < LOW_CONFIDENCE_EVENTS, note)

    def add_point(self, detector, N, snr_db, tau2, p, note=""):
        self.add(detector, N, snr_db, tau2, p.pF, p.pM, p.pE, p.provenance, p.stderr, note=note)

    def select(self, **kw):
        return [r for r in self.rows if all(r[k] == v for k, v in kw.items())]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r[k]) for k in COLUMNS})

    def manifest(self):
        return {
            "experiment": self.spec.experiment,
            "seed": self.spec.seed,
            "config_hash": self.spec.config_hash,
            "version": __version__,
            "wall_time_s": self.wall_time,
            "spec": self.spec.to_dict(),
            "summary": _jsonable(self.summary),
        }

    def write(self, out_dir, stem=None):
        import os

        os.makedirs(out_dir, exist_ok=True)
        stem = stem or self.spec.experiment
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        self.to_csv(csv_path)
        man_path = os.path.join(out_dir, f"{stem}.manifest.json")
        with open(man_path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
        return csv_path, man_path


def _opt(v):
    return None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return o


def _sub_seed(seed, *key):
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in key]]).generate_state(1)[0])


def _snr_grid(spec, default):
    return spec.snr_db if spec.snr_db is not None else default


def _cfg_at(spec, N=None, snr=None):
    cfg = spec.cfg
    if N is not None:
        cfg = cfg.replace(N=int(N))
    if snr is not None:
        sigma1_sq = cfg.sigma_sq[0]
        cfg = cfg.replace(noise_power=2 * sigma1_sq / 10 ** (snr / 10))
    return cfg


def _sig_for(cfg):
    """Cyclic shifts of a length-7 m-sequence, or a longer one when K > 7."""
    degree = max(3, int(np.ceil(np.log2(cfg.K + 1))))
    return paper_signatures(K=cfg.K, degree=degree)


def _timed(fn):
    def wrapper(spec, *a, **kw):
        t0 = time.perf_counter()
        table = fn(spec, *a, **kw)
        table.wall_time = time.perf_counter() - t0
        return table

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------


@_timed
def run_roc(spec, pf_target=0.1):
    """(pF, pM) pairs over a threshold grid for each detector, simulated and semi-analytic.

    Without an explicit tau2 grid each detector gets n_grid thresholds at
    quantiles (2%..98%) of its simulated node-1 statistic. The summary holds
    pM at pF = pf_target for every detector, with its simulation error.
    """
    cfg = spec.cfg
    sig = _sig_for(cfg)
    table = ResultTable(spec)
    batch = simulate(cfg, sig, spec.trials, spec.seed, kinds=spec.detectors, workers=spec.workers)
    summary = {"pf_target": pf_target, "pM_at_pf": {}}
    for det in spec.detectors:
        stat = batch.stats[det][:, 0]
        if spec.tau2_grid is not None:
            grid = np.asarray(spec.tau2_grid, dtype=float)
        else:
            grid = np.nanquantile(stat, np.linspace(0.02, 0.98, spec.n_grid))
        for t2 in grid:
            table.add_empirical(det, cfg.N, cfg.snr_db, t2, empirical_rates(stat, batch.truth[:, 0], t2))
            table.add_point(det, cfg.N, cfg.snr_db, t2, uncond_perf(det, cfg, sig, t2, mode=spec.mode, seed=spec.seed))
        t2, p = threshold_for_pf(det, cfg, sig, pf_target, mode=spec.mode, seed=spec.seed)
        e = empirical_rates(stat, batch.truth[:, 0], t2)
        table.add_point(det, cfg.N, cfg.snr_db, t2, p, note="pf_target")
        table.add_empirical(det, cfg.N, cfg.snr_db, t2, e, note="pf_target")
        # threshold read off the simulated non-neighbor statistics directly
        t2_emp = float(np.nanquantile(stat[~batch.truth[:, 0]], 1 - pf_target))
        e_emp = empirical_rates(stat, batch.truth[:, 0], t2_emp)
        table.add_empirical(det, cfg.N, cfg.snr_db, t2_emp, e_emp, note="pf_target_empirical")
        summary["pM_at_pf"][det] = {
            "tau2": t2, "pM_semi": p.pM, "pM_sim": e.pM, "stderr_M": e.sM, "pF_sim": e.pF,
            "tau2_emp": t2_emp, "pM_sim_emp": e_emp.pM, "pF_sim_emp": e_emp.pF, "stderr_M_emp": e_emp.sM,
        }
    table.summary = summary
    return table


@_timed
def run_convergence(spec, spread=(0.5, 1.6)):
    """Simulated, semi-analytic and asymptotic curves over N, thresholds scaled
    around the asymptotic threshold of each detector (ZF-CD / ID only)."""
    table = ResultTable(spec)
    Ns = spec.slots if spec.slots is not None else (100, 300, 500)
    dets = [d for d in spec.detectors if d in ("ZF-CD", "ID")]
    if not dets:
        raise ValueError("convergence needs ZF-CD and/or ID")
    summary = {d: {} for d in dets}
    for j, N in enumerate(Ns):
        cfg = _cfg_at(spec, N=N)
        sig = _sig_for(cfg)
        batch = simulate(cfg, sig, spec.trials, _sub_seed(spec.seed, j), kinds=dets, workers=spec.workers)
        for det in dets:
            t0 = asymptotic_threshold(det, cfg, sig)
            grid = t0 * np.linspace(*spread, spec.n_grid) if spec.tau2_grid is None else np.asarray(spec.tau2_grid)
            sim, semi, asy, se = [], [], [], []
            for t2 in grid:
                e = empirical_rates(batch.stats[det][:, 0], batch.truth[:, 0], t2)
                p = uncond_perf(det, cfg, sig, t2)
                a = asymptotic_perf(det, cfg, sig, t2)
                table.add_empirical(det, N, cfg.snr_db, t2, e)
                table.add_point(det, N, cfg.snr_db, t2, p)
                table.add_point(det, N, cfg.snr_db, t2, a)
                sim.append(e.pE), semi.append(p.pE), asy.append(a.pE), se.append(e.sE)
            sim, semi, asy, se = map(np.asarray, (sim, semi, asy, se))
            k = int(np.argmin(sim))
            summary[det][int(N)] = {
                "max_gap": float(np.max(np.abs(asy - sim))),
                "gap_at_min": float(abs(asy[k] - sim[k])),
                "stderr_at_min": float(se[k]),
                "tau2_at_min": float(grid[k]),
                "max_z_semi": float(np.max(np.abs(semi - sim) / se)),
            }
    table.summary = summary
    return table


@_timed
def run_threshold_sweep(spec):
    """P(e) versus tau per detector and SNR at N = cfg.N; argmin versus asymptotic threshold."""
    table = ResultTable(spec)
    dets = [d for d in spec.detectors if d in ("ZF-CD", "ID")]
    summary = {d: {} for d in dets}
    for snr in _snr_grid(spec, (0.0, 5.0, 10.0)):
        cfg = _cfg_at(spec, snr=snr)
        sig = _sig_for(cfg)
        for det in dets:
            t_asym = asymptotic_threshold(det, cfg, sig)
            bracket = None if spec.tau2_grid is None else (min(spec.tau2_grid), max(spec.tau2_grid))
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                opt = optimize_threshold(det, cfg, sig, bracket=bracket, n_curve=spec.n_grid)
            c = opt.curve
            for t2, pF, pM, pE in zip(c["tau2"], c["pF"], c["pM"], c["pE"]):
                table.add(det, cfg.N, snr, t2, pF, pM, pE, "semiAnalytic")
            table.add_point(det, cfg.N, snr, opt.tau2, uncond_perf(det, cfg, sig, opt.tau2), note="argmin")
            table.add_point(det, cfg.N, snr, t_asym, uncond_perf(det, cfg, sig, t_asym), note="asymptotic_threshold")
            summary[det][float(snr)] = {
                "tau2_star": opt.tau2,
                "pE_star": opt.pE,
                "tau2_asym": t_asym,
                "rel_tau_err": abs(np.sqrt(t_asym) - np.sqrt(opt.tau2)) / np.sqrt(opt.tau2),
                "local_minima": count_local_minima(opt.curve["pE"]),
                "boundary": opt.boundary,
                "warnings": [str(w.message) for w in caught],
            }
    table.summary = summary
    return table


@_timed
def run_compare(spec):
    """P(e) versus SNR with per-point optimized thresholds for CD and ID.

    Both detectors are simulated on the same sessions, so the reported
    difference standard error is that of the paired per-trial error difference.
    """
    table = ResultTable(spec)
    snrs = _snr_grid(spec, (-5.0, 0.0, 5.0, 10.0, 15.0))
    dets = ("ZF-CD", "ID")
    summary = {"points": {}}
    diffs = []
    for j, snr in enumerate(snrs):
        cfg = _cfg_at(spec, snr=snr)
        sig = _sig_for(cfg)
        opts = {d: optimize_threshold(d, cfg, sig, n_curve=spec.n_grid) for d in dets}
        batch = simulate(cfg, sig, spec.trials, _sub_seed(spec.seed, j), kinds=dets, workers=spec.workers)
        errs = {}
        for d in dets:
            stat = batch.stats[d][:, 0]
            ok = ~np.isnan(stat)
            errs[d] = ((stat[ok] > opts[d].tau2) != batch.truth[ok, 0]).astype(float)
            table.add_point(d, cfg.N, snr, opts[d].tau2, uncond_perf(d, cfg, sig, opts[d].tau2), note="optimal")
            table.add_empirical(d, cfg.N, snr, opts[d].tau2,
                                empirical_rates(stat, batch.truth[:, 0], opts[d].tau2), note="optimal")
        dd = errs["ID"] - errs["ZF-CD"]
        semi = opts["ID"].pE - opts["ZF-CD"].pE
        summary["points"][float(snr)] = {
            "pE_CD": opts["ZF-CD"].pE,
            "pE_ID": opts["ID"].pE,
            "sim_pE_CD": float(errs["ZF-CD"].mean()),
            "sim_pE_ID": float(errs["ID"].mean()),
            "diff_ID_minus_CD_sim": float(dd.mean()),
            "diff_stderr": float(dd.std(ddof=1) / np.sqrt(len(dd))),
            "diff_ID_minus_CD_semi": semi,
        }
        diffs.append(semi)
    summary["crossover_snr_db"] = _crossovers(snrs, diffs)
    table.summary = summary
    return table


def _crossovers(x, d):
    out = []
    for i in range(len(d) - 1):
        if d[i] == 0:
            out.append(float(x[i]))
        elif d[i] * d[i + 1] < 0:
            out.append(float(x[i] + (x[i + 1] - x[i]) * d[i] / (d[i] - d[i + 1])))
    return out


@_timed
def run_oracle_check(spec, slots=None):
    """MAP and ML oracles against suboptimum detectors on a tiny network.

    For each pinned M0 in ``spec.slots`` (default (3,)) trials are simulated
    with Bernoulli activity in the M0 sensing slots. Each suboptimum detector
    (ID, ZF-CD, MF, ZF, MMOE) gets per-node thresholds tuned on the same
    trials to its lowest empirical error, which favours it; the summary reports
    set-error rates, paired standard errors of MAP minus each detector, and
    the ML residual check against least squares on the true pattern.
    """
    cfg = spec.cfg
    if cfg.K > 2:
        raise ValueError("oracle check limited to K <= 2")
    sig = _sig_for(cfg)
    table = ResultTable(spec)
    M0s = slots or spec.slots or (3,)
    summary = {}
    for M0 in M0s:
        M0 = int(M0)
        n = spec.trials
        map_err = np.zeros(n)
        stats = {d: np.zeros((n, cfg.K)) for d in DETECTORS}
        truth = np.zeros((n, cfg.K), dtype=bool)
        ml_ok = np.zeros(n, dtype=bool)
        ml_margin = np.zeros(n)
        banks = {d: correlator_bank(sig, "ZF" if d == "ZF-CD" else d, cfg, M0) for d in ("MF", "ZF", "MMOE")}
        table_h = hypothesis_table(cfg.K)
        for t in range(n):
            rng = session_rng(_sub_seed(spec.seed, M0), t)
            alpha = complex_normal(rng, np.asarray(cfg.fading_power), cfg.K)
            psi = (rng.random((M0, cfg.K)) < np.asarray(cfg.eps[1:])).astype(float)
            y = (psi * alpha) @ sig.S.T + complex_normal(rng, cfg.noise_power, (M0, sig.L))
            truth[t] = np.abs(alpha) > cfg.tau_a
            res = map_oracle(sig, y, cfg)
            map_err[t] = tuple(truth[t]) != table_h[res.index]
            ml = ml_joint_oracle(sig, y)
            ref = ls_fit(sig, y, psi).residual
            ml_margin[t] = ref - ml.residual
            ml_ok[t] = ml.residual <= ref * (1 + 1e-12) + 1e-12
            d = slot_decorrelate(sig.pinv, y)
            ysum = y.sum(axis=0)
            stats["ID"][t] = id_statistic(d)
            stats["ZF-CD"][t] = np.abs(d.sum(axis=0)) ** 2
            for k, b in banks.items():
                stats[k][t] = b.statistic(ysum)
        per = {"MAP": {"pE": float(map_err.mean()), "stderr": float(map_err.std(ddof=1) / np.sqrt(n))}}
        for det in DETECTORS:
            dec = np.zeros((n, cfg.K), dtype=bool)
            taus = []
            for i in range(cfg.K):
                t2 = _best_threshold(stats[det][:, i], truth[:, i])
                taus.append(t2)
                dec[:, i] = stats[det][:, i] > t2
            err = np.any(dec != truth, axis=1).astype(float)
            diff = map_err - err
            per[det] = {
                "pE": float(err.mean()),
                "tau2": taus,
                "diff_map_minus_det": float(diff.mean()),
                "diff_stderr": float(diff.std(ddof=1) / np.sqrt(n)),
            }
            table.add(det, cfg.N, cfg.snr_db, taus[0], np.nan, np.nan, err.mean(), "simulated",
                      err.std(ddof=1) / np.sqrt(n), note=f"M0={M0} tuned")
        table.add("MAP", cfg.N, cfg.snr_db, np.nan, np.nan, np.nan, map_err.mean(), "simulated",
                  per["MAP"]["stderr"], note=f"M0={M0}")
        per["ml_all_ok"] = bool(ml_ok.all())
        per["ml_min_margin"] = float(ml_margin.min())
        summary[M0] = per
    table.summary = summary
    return table


def _best_threshold(stat, truth):
    """Threshold minimizing empirical per-node error (midpoints between sorted statistics)."""
    order = np.argsort(stat)
    s, tr = stat[order], truth[order]
    # deciding 'neighbor' above position j: errors = neighbors at or below + non-neighbors above
    miss = np.concatenate([[0], np.cumsum(tr)])
    fa = (~tr).sum() - np.concatenate([[0], np.cumsum(~tr)])
    j = int(np.argmin(miss + fa))
    if j == 0:
        return float(s[0] - 1.0)
    if j == len(s):
        return float(s[-1])
    return float(0.5 * (s[j - 1] + s[j]))


RUNNERS = {
    "roc": run_roc,
    "convergence": run_convergence,
    "threshold-sweep": run_threshold_sweep,
    "compare": run_compare,
    "oracle-check": run_oracle_check,
}


def run(spec):
    return RUNNERS[spec.experiment](spec)
