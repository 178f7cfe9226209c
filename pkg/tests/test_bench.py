import json

import numpy as np
import pytest

from ndmud.bench import COLUMNS, ExperimentSpec, _best_threshold, _crossovers, run
from ndmud.channel import NetworkConfig


def small_cfg(**kw):
    return NetworkConfig.paper_default(N=30, snr_db=3.0).replace(**kw) if kw else NetworkConfig.paper_default(N=30, snr_db=3.0)


def test_spec_validation():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        ExperimentSpec("nope", cfg)
    with pytest.raises(ValueError):
        ExperimentSpec("roc", cfg, trials=0)
    with pytest.raises(ValueError):
        ExperimentSpec("roc", cfg, detectors=("XX",))
    with pytest.raises(ValueError):
        ExperimentSpec("roc", cfg, tau2_grid=())
    assert ExperimentSpec("roc", cfg, detectors=("zf",)).detectors == ("ZF",)


def test_hash_ignores_workers():
    cfg = small_cfg()
    a = ExperimentSpec("roc", cfg, workers=1)
    b = ExperimentSpec("roc", cfg, workers=4)
    c = ExperimentSpec("roc", cfg, seed=1)
    assert a.config_hash == b.config_hash != c.config_hash


def test_roc_rerun_byte_identical(tmp_path):
    spec = ExperimentSpec("roc", small_cfg(), detectors=("ZF", "ID"), trials=600, seed=3, n_grid=4)
    p1, m1 = run(spec).write(tmp_path / "a")
    p2, _ = run(ExperimentSpec(**{**spec.__dict__, "workers": 2})).write(tmp_path / "b")
    text = open(p1).read()
    assert text == open(p2).read()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    man = json.load(open(m1))
    assert man["seed"] == 3 and man["config_hash"] == spec.config_hash
    assert man["wall_time_s"] > 0
    assert "wall" not in text
    s = man["summary"]["pM_at_pf"]["ZF"]
    assert 0 <= s["pM_semi"] <= 1


def test_roc_rows_have_provenance():
    spec = ExperimentSpec("roc", small_cfg(), detectors=("ZF-CD",), trials=400, seed=1, n_grid=3)
    t = run(spec)
    provs = {r["provenance"] for r in t.rows}
    assert provs == {"simulated", "semiAnalytic"}
    sim = t.select(provenance="simulated", note="")
    assert all(r["low_confidence"] in (0, 1) for r in sim)


def test_convergence_summary():
    spec = ExperimentSpec("convergence", small_cfg(), trials=500, seed=2, slots=(20, 40), n_grid=3)
    t = run(spec)
    assert set(t.summary) == {"ZF-CD", "ID"}
    assert set(t.summary["ID"]) == {20, 40}
    assert {r["provenance"] for r in t.rows} == {"simulated", "semiAnalytic", "asymptotic"}


def test_convergence_needs_cd_or_id():
    with pytest.raises(ValueError):
        run(ExperimentSpec("convergence", small_cfg(), detectors=("MF",), trials=10))


def test_threshold_sweep_small():
    spec = ExperimentSpec("threshold-sweep", small_cfg(), snr_db=(0.0, 10.0), n_grid=7)
    t = run(spec)
    for det in ("ZF-CD", "ID"):
        for snr in (0.0, 10.0):
            s = t.summary[det][snr]
            assert s["tau2_star"] > 0 and 0 <= s["pE_star"] <= 1


def test_compare_small():
    spec = ExperimentSpec("compare", small_cfg(), snr_db=(0.0, 10.0), trials=500, n_grid=5)
    t = run(spec)
    pts = t.summary["points"]
    assert set(pts) == {0.0, 10.0}
    assert all(p["diff_stderr"] > 0 for p in pts.values())


def test_oracle_check_small():
    cfg = NetworkConfig.paper_default(K=2, N=6, snr_db=10.0)
    t = run(ExperimentSpec("oracle-check", cfg, trials=60, seed=1, slots=(2,)))
    s = t.summary[2]
    assert s["ml_all_ok"]
    assert 0 <= s["MAP"]["pE"] <= 1


def test_oracle_check_rejects_large_k():
    with pytest.raises(ValueError):
        run(ExperimentSpec("oracle-check", small_cfg(), trials=5))


def test_crossovers():
    assert _crossovers([0, 10], [1.0, -1.0]) == [5.0]
    assert _crossovers([0, 10, 20], [-1.0, -2.0, -3.0]) == []
    assert _crossovers([0, 10, 20], [1.0, 0.0, -1.0]) == [10.0]


def test_best_threshold():
    stat = np.array([0.1, 0.2, 0.3, 1.0, 1.1])
    truth = np.array([False, False, False, True, True])
    t = _best_threshold(stat, truth)
    assert 0.3 < t < 1.0
    assert _best_threshold(stat, np.ones(5, bool)) < 0.1
    assert _best_threshold(stat, np.zeros(5, bool)) >= 1.1
