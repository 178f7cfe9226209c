"""Command-line entry point: ``ndmud <experiment> [flags]``.

Config files are JSON with ``schema_version`` 1::

    {"schema_version": 1,
     "network": {"K": 6, "N": 100, "eps": 0.5, "snr_db": 0.0},
     "experiment": {"trials": 10000, "seed": 1, "detectors": ["ZF-CD", "ID"]}}

``network`` takes either ``snr_db`` (with ``fading_power``, default 1, and
tau_a at the fading median unless given) or explicit ``noise_power`` and
``tau_a``. Command-line flags override file values. On failure a JSON object
{"error": ..., "type": ...} is printed to stderr and the exit status is 1
(2 for usage errors).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bench import DETECTORS, ExperimentSpec, run
from .channel import NetworkConfig, dump_session, draw_session, median_tau_a, session_rng, synthesize_slots
from .signatures import paper_signatures

SCHEMA_VERSION = 1
SUBCOMMANDS = {
    "roc": "roc",
    "convergence": "convergence",
    "sweep-threshold": "threshold-sweep",
    "compare": "compare",
    "oracle-check": "oracle-check",
}


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _names(s):
    return tuple(v.strip().upper() for v in s.split(",") if v.strip())


def load_config(path):
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema_version {version!r} (expected {SCHEMA_VERSION})")
    unknown = set(doc) - {"schema_version", "network", "experiment"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    return doc.get("network", {}), doc.get("experiment", {})


def network_from_dict(net, snr_override=None):
    net = dict(net)
    K = int(net.pop("K", 6))
    N = int(net.pop("N", 100))
    eps = net.pop("eps", 0.5)
    fp = net.pop("fading_power", 1.0)
    snr = net.pop("snr_db", None)
    noise_power = net.pop("noise_power", None)
    tau_a = net.pop("tau_a", None)
    if net:
        raise ValueError(f"unknown network keys {sorted(net)}")
    if snr_override is not None:
        snr, noise_power = snr_override, None
    if noise_power is None:
        snr = 0.0 if snr is None else float(snr)
        sigma1_sq = float(np.ravel(fp)[0]) / 2
        noise_power = 2 * sigma1_sq / 10 ** (snr / 10)
    if tau_a is None:
        tau_a = median_tau_a(float(np.ravel(fp)[0]))
    return NetworkConfig(K=K, N=N, eps=eps, fading_power=fp, noise_power=float(noise_power), tau_a=float(tau_a))


def build_parser():
    p = argparse.ArgumentParser(prog="ndmud", description="Neighbor-discovery experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (schema_version 1)")
        sp.add_argument("--seed", type=int, help="base RNG seed (u64)")
        sp.add_argument("--trials", type=int, help="Monte Carlo sessions per point")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--detectors", type=_names, help=f"comma list from {','.join(DETECTORS)}")
        sp.add_argument("--snr-db", type=_floats, help="comma list of SNR_1 values in dB")
        sp.add_argument("--slots", type=_ints, help="comma list of N (convergence) or M0 (oracle-check)")
        sp.add_argument("--tau2", type=_floats, help="comma list of thresholds tau^2")
        sp.add_argument("--grid-points", type=int, help="threshold grid size")
        sp.add_argument("--workers", type=int, help="threads for trial blocks")
        sp.add_argument("--mode", choices=("nu1", "all"), help="interferer averaging for MF/MMOE")

    for name in SUBCOMMANDS:
        common(sub.add_parser(name))
    ds = sub.add_parser("dump-session", help="write one simulated session as CSV + JSON")
    common(ds)
    ds.add_argument("--index", type=int, default=0, help="session index within the seed")
    return p


def _spec_from_args(args):
    net, exp = ({}, {}) if args.config is None else load_config(args.config)
    snr_list = args.snr_db if args.snr_db is not None else exp.get("snr_db")
    # roc / convergence / oracle-check run at one SNR: the first listed value
    single = SUBCOMMANDS.get(args.command) in ("roc", "convergence", "oracle-check")
    snr_override = snr_list[0] if (single and snr_list) else None
    if SUBCOMMANDS[args.command] == "oracle-check":
        net = {"K": 2, "N": 6, **net}
    cfg = network_from_dict(net, snr_override)
    defaults = {
        "roc": ("MF", "ZF", "MMOE", "ZF-CD", "ID"),
        "oracle-check": ("ID", "ZF-CD", "MF", "ZF", "MMOE"),
    }
    experiment = SUBCOMMANDS[args.command]
    pick = lambda flag, key, default: flag if flag is not None else exp.get(key, default)  # noqa: E731
    return ExperimentSpec(
        experiment=experiment,
        cfg=cfg,
        detectors=tuple(pick(args.detectors, "detectors", defaults.get(experiment, ("ZF-CD", "ID")))),
        trials=int(pick(args.trials, "trials", 10_000)),
        seed=int(pick(args.seed, "seed", 0)),
        tau2_grid=pick(args.tau2, "tau2_grid", None),
        snr_db=None if single or snr_list is None else tuple(snr_list),
        slots=pick(args.slots, "slots", None),
        n_grid=int(pick(args.grid_points, "n_grid", 21)),
        mode=pick(args.mode, "mode", "nu1"),
        workers=int(pick(args.workers, "workers", 1)),
    )


def _dump_session(args):
    import os

    net, exp = ({}, {}) if args.config is None else load_config(args.config)
    cfg = network_from_dict(net, args.snr_db[0] if args.snr_db else None)
    seed = args.seed if args.seed is not None else int(exp.get("seed", 0))
    sig = paper_signatures(K=cfg.K, degree=max(3, int(np.ceil(np.log2(cfg.K + 1)))))
    rng = session_rng(seed, args.index)
    real = draw_session(cfg, rng)
    obs = synthesize_slots(sig, real, cfg, rng)
    os.makedirs(args.out, exist_ok=True)
    prefix = os.path.join(args.out, f"session_{seed}_{args.index}")
    dump_session(prefix, real, obs, seed)
    return {"csv": prefix + ".csv", "json": prefix + ".json", "M0": int(real.M0)}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "dump-session":
            info = _dump_session(args)
        else:
            spec = _spec_from_args(args)
            table = run(spec)
            csv_path, man_path = table.write(args.out)
            info = {"csv": csv_path, "manifest": man_path, "rows": len(table.rows)}
    except Exception as exc:  # reported as machine-readable JSON
        json.dump({"error": str(exc), "type": type(exc).__name__}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(info, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
