import numpy as np
import pytest

from ndmud.channel import (
    NetworkConfig,
    SessionRealization,
    complex_normal,
    draw_activity,
    draw_fading,
    draw_session,
    dump_session,
    load_session,
    median_tau_a,
    session_rng,
    synthesize_slots,
)
from ndmud.signatures import paper_signatures


def test_fading_second_moment(cfg100, rng):
    a = draw_fading(cfg100, rng, size=10**6 // 6)
    assert abs(np.mean(np.abs(a) ** 2) - 1.0) < 0.01
    assert abs(np.var(a.real) - 0.5) < 0.01


def test_median_threshold(rng):
    cfg = NetworkConfig(K=1, N=1, eps=0.5, fading_power=1.0, noise_power=1.0, tau_a=np.sqrt(np.log(2)))
    a = draw_fading(cfg, rng, size=10**6)
    assert abs(np.mean(np.abs(a) > cfg.tau_a) - 0.5) < 0.005
    assert median_tau_a(1.0) == pytest.approx(np.sqrt(np.log(2)))
    assert cfg.p_neighbor() == pytest.approx(0.5)


def test_activity_degenerate(rng):
    cfg = NetworkConfig.paper_default(N=40).replace(eps=(0.0,) + (0.5,) * 6)
    assert draw_activity(cfg, rng)[2] == 40
    cfg = cfg.replace(eps=(1.0,) + (0.5,) * 6)
    psi, nu, M0 = draw_activity(cfg, rng)
    assert M0 == 0 and psi.shape == (0, 6)
    real = draw_session(cfg, rng)
    assert real.no_observation


def test_activity_moments():
    cfg = NetworkConfig.paper_default(N=500)
    M0s, nus = [], []
    for t in range(20000):
        psi, nu, M0 = draw_activity(cfg, session_rng(5, t))
        M0s.append(M0)
        nus.append(nu[0] / M0)
    assert abs(np.mean(M0s) / 250 - 1) < 0.01
    assert abs(np.mean(nus) / 0.5 - 1) < 0.01


def test_noise_only_variance(rng):
    sig = paper_signatures()
    cfg = NetworkConfig(K=6, N=1, eps=0.5, fading_power=1.0, noise_power=1.0, tau_a=0.5)
    real = SessionRealization(np.zeros(6, complex), np.zeros((150000, 6)), 150000, 0.5)
    y = synthesize_slots(sig, real, cfg, rng).y
    assert abs(np.var(y) - 1.0) < 0.01


def test_noise_free_single_node():
    sig = paper_signatures()
    cfg = NetworkConfig(K=6, N=1, eps=0.5, fading_power=1.0, noise_power=1e-300, tau_a=0.5)
    alpha = np.zeros(6, complex)
    alpha[3] = 1.0
    psi = np.zeros((4, 6))
    psi[:, 3] = 1
    y = synthesize_slots(sig, SessionRealization(alpha, psi, 4, 0.5), cfg, np.random.default_rng(0)).y
    assert np.allclose(y, sig.S[:, 3], atol=1e-140)


def test_two_always_on_mean(rng):
    sig = paper_signatures(K=2)
    cfg = NetworkConfig(K=2, N=1, eps=1.0, fading_power=1.0, noise_power=1.0, tau_a=0.5)
    n = 10**5
    real = SessionRealization(np.array([1.0, 1j]), np.ones((n, 2)), n, 0.5)
    y = synthesize_slots(sig, real, cfg, rng).y
    target = sig.S[:, 0] + 1j * sig.S[:, 1]
    se = np.sqrt(0.5 / n)
    assert np.all(np.abs(y.mean(axis=0).real - target.real) < 3.5 * se)
    assert np.all(np.abs(y.mean(axis=0).imag - target.imag) < 3.5 * se)


def test_dimension_mismatch(rng):
    sig = paper_signatures(K=2)
    cfg = NetworkConfig(K=3, N=1, eps=0.5, fading_power=1.0, noise_power=1.0, tau_a=0.5)
    real = SessionRealization(np.ones(3, complex), np.ones((2, 3)), 2, 0.5)
    with pytest.raises(ValueError):
        synthesize_slots(sig, real, cfg, rng)


def test_reproducible_sessions(cfg100):
    sig = paper_signatures()
    out = []
    for _ in range(2):
        rng = session_rng(11, 3)
        real = draw_session(cfg100, rng)
        out.append(synthesize_slots(sig, real, cfg100, rng).y)
    assert np.array_equal(out[0], out[1])
    other = synthesize_slots(sig, draw_session(cfg100, session_rng(11, 4)), cfg100, session_rng(11, 4)).y
    assert not np.array_equal(out[0][:1], other[:1])


def test_complex_normal_scale(rng):
    z = complex_normal(rng, 2.0, 400000)
    assert abs(np.var(z.real) - 1.0) < 0.01
    assert abs(np.mean(z.real * z.imag)) < 0.01


@pytest.mark.parametrize("eps0", [0.5, 1.0])
def test_dump_round_trip(tmp_path, eps0):
    sig = paper_signatures()
    cfg = NetworkConfig.paper_default(N=12).replace(eps=(eps0,) + (0.5,) * 6)
    rng = session_rng(2, 0)
    real = draw_session(cfg, rng)
    obs = synthesize_slots(sig, real, cfg, rng)
    prefix = str(tmp_path / "s")
    dump_session(prefix, real, obs, 2)
    real2, obs2, seed = load_session(prefix, cfg.tau_a)
    assert seed == 2
    assert np.array_equal(obs2.y, obs.y)
    assert obs2.y.shape == obs.y.shape
    assert np.array_equal(real2.psi, real.psi)
    assert np.array_equal(real2.alpha, real.alpha)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(K=2, N=10, eps=1.5, fading_power=1.0, noise_power=1.0, tau_a=0.5)
    with pytest.raises(ValueError):
        NetworkConfig(K=2, N=10, eps=0.5, fading_power=-1.0, noise_power=1.0, tau_a=0.5)
    with pytest.raises(ValueError):
        NetworkConfig(K=2, N=10, eps=0.5, fading_power=1.0, noise_power=1.0, tau_a=-1)
    cfg = NetworkConfig(K=2, N=10, eps=0.5, fading_power=1.0, noise_power=1.0, tau_a=0.5)
    assert cfg.eps == (0.5, 0.5, 0.5)
    assert cfg.snr_db == pytest.approx(0.0)
