import io
import math

import numpy as np
import pytest
from scipy import stats

from fermiq import classd, fock, measures, qfunction as qf, sampler as S
from fermiq.exceptions import InconclusiveRunError, MalformedInputError, ResourceLimitError


def cfg(n, seed=0, **kw):
    return S.MCConfig(samples=n, seed=seed, **kw)


def test_config_validation():
    for bad in ({"samples": 0}, {"seed": -1}, {"workers": 0}, {"batch": 0}, {"proposal": "cube"}):
        with pytest.raises(MalformedInputError):
            S.MCConfig(**bad)


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("FERMIQ_WORKERS", "3")
    assert S.MCConfig.from_env(samples=10).workers == 3


def test_single_mode_always_accepted():
    z, rep = S.sample_uniform_domain(1, cfg(5000))
    assert rep.acceptance == 1.0
    assert z.shape == (5000, 2, 2)


def test_two_mode_acceptance():
    _, rep = S.sample_uniform_domain(2, cfg(10**6, 1))
    p = measures.constants(2).V_canon / 64
    assert abs(rep.acceptance - p) < 5 * math.sqrt(p * (1 - p) / 10**6)


@pytest.mark.parametrize("proposal", S.PROPOSALS)
def test_points_in_domain(proposal):
    z, _ = S.sample_uniform_domain(3, cfg(200_000, 2, proposal=proposal))
    assert z.shape[0] > 0
    for zi in z[:200]:
        assert classd.check_class_d(zi)[0]
        assert classd.domain_check(zi)[0]


def test_in_domain_matches_norm(rng):
    for M in (2, 3):
        up = rng.uniform(-1, 1, size=(5000, S.n_entries(M))) * 0.6
        X = classd.antisym_from_upper(up, M)
        expect = np.linalg.norm(X, 2, axis=(1, 2)) < 1
        np.testing.assert_array_equal(S.in_domain(up, M), expect)


def test_uniformity_single_mode():
    z, _ = S.sample_uniform_domain(1, cfg(20_000, 3))
    x = classd.upper_entries(np.stack([classd.majorana_map(zi) for zi in z[:5000]]))[:, 0]
    assert stats.kstest(x, stats.uniform(-1, 2).cdf).pvalue > 0.01


def test_volume_single_mode_exact():
    rep = S.estimate_domain_volume(1, cfg(1000))
    assert rep.estimate == 2.0 and rep.stderr == 0.0


def test_volume_two_modes():
    rep = S.estimate_domain_volume(2, cfg(10**6, 5))
    assert abs(rep.extra["z"]) < 3


def test_volume_ball_proposal():
    rep = S.estimate_domain_volume(3, cfg(300_000, 5, proposal="ball"))
    assert abs(rep.extra["z"]) < 5


def test_volume_stderr_scaling():
    se = [S.estimate_domain_volume(2, cfg(n, 11)).stderr for n in (10**4, 10**5, 10**6)]
    for a, b in zip(se, se[1:]):
        assert 1 / 1.5 < (a / b) / math.sqrt(10) < 1.5


def test_volume_limits():
    with pytest.raises(ResourceLimitError):
        S.estimate_domain_volume(5, cfg(10))
    with pytest.raises(InconclusiveRunError):
        S.estimate_domain_volume(4, cfg(10))


def test_determinism_across_workers():
    st_ = qf.thermal_state([0.2, 0.7])
    a, _ = S.sample_q(st_, cfg=cfg(70_000, 9))
    b, _ = S.sample_q(st_, cfg=cfg(70_000, 9, workers=4, batch=1))
    np.testing.assert_array_equal(a.upper, b.upper)
    r1 = S.estimate_unity(2, cfg(70_000, 9))
    r2 = S.estimate_unity(2, cfg(70_000, 9, workers=3))
    assert r1.estimate == r2.estimate


def test_prefix_stability():
    # sample i depends only on (seed, i)
    a, _ = S.sample_uniform_domain(2, cfg(2 * S.BLOCK, 4))
    b, _ = S.sample_uniform_domain(2, cfg(3 * S.BLOCK + 17, 4))
    np.testing.assert_array_equal(a, b[: a.shape[0]])


def test_unity_single_mode_quadrature():
    assert S.estimate_unity(1, quadrature=True).estimate < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_unity_two_modes_seeds(seed):
    assert S.estimate_unity(2, cfg(100_000, seed)).extra["max_z"] < 5


@pytest.mark.parametrize("seed", range(10))
def test_unity_three_modes_seeds(seed):
    rep = S.estimate_unity(3, cfg(200_000, seed, proposal="ball"))
    assert rep.extra["max_z"] < 5


def test_running_stats_merge(rng):
    x = rng.normal(size=(1000, 3))
    acc = S.RunningStats((3,))
    for chunk in np.array_split(x, 7):
        acc.merge(S.RunningStats.of(chunk))
    np.testing.assert_allclose(acc.mean, x.mean(axis=0))
    np.testing.assert_allclose(acc.var, x.var(axis=0, ddof=1))


def test_sample_q_uniform_acceptance():
    for M in (1, 2):
        _, rep = S.sample_q(qf.thermal_state([0.5] * M), cfg=cfg(200_000, 1))
        p = 2.0**-M
        assert abs(rep.acceptance - p) < 5 * math.sqrt(p * (1 - p) / rep.n_total)


def test_sample_q_pure_single_mode():
    vac = qf.pure_number_state([0])
    smp, _ = S.sample_q(vac, cfg=cfg(100_000, 2))
    z = smp.zetas()
    assert z[:, 0, 0].real.mean() > 0.2
    F = qf.inner_product_F_batch(vac.zeta, z)
    assert F.mean() > 0.5


def test_sample_q_thermal_histogram():
    t = 0.4
    smp, _ = S.sample_q(qf.thermal_state([(1 - t) / 2]), cfg=cfg(100_000, 3))
    z = smp.zetas()[:, 0, 0].real
    edges = np.linspace(-1, 1, 11)
    obs, _ = np.histogram(z, edges)
    cdf = lambda x: (x + 1) / 2 + t * (x * x - 1) / 4
    exp = np.diff(cdf(edges)) * z.size
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_sample_q_density_column():
    st_ = qf.thermal_state([0.3, 0.6])
    smp, _ = S.sample_q(st_, cfg=cfg(50_000))
    for i in range(5):
        assert smp.q[i] == pytest.approx(qf.q_gaussian(st_, smp.zetas()[i]), rel=1e-10)


def test_sample_q_with_s_weight():
    smp, rep = S.sample_q(qf.thermal_state([0.3]), qf.ScalingParams(0, 2.0), cfg(20_000))
    assert smp.weight is not None and np.all((smp.weight > 0) & (smp.weight <= 1))
    assert rep.extra["s"] == 2.0


def test_csv_layout():
    smp, _ = S.sample_q(qf.thermal_state([0.3, 0.6]), cfg=cfg(20_000))
    text = smp.to_csv()
    head = text.splitlines()[0].split(",")
    assert head[:6] == ["X_1_2", "X_1_3", "X_1_4", "X_2_3", "X_2_4", "X_3_4"]
    assert head[6:] == ["z_1", "z_2", "Q"]
    assert len(text.splitlines()) == smp.upper.shape[0] + 1


def test_mixture_normalised():
    mix = qf.MixtureState(((0.3, qf.pure_number_state([0, 1])), (0.7, qf.thermal_state([0.2, 0.9]))))
    z, rep = S.sample_uniform_domain(2, cfg(10**6, 8))
    q = sum(w * qf.inner_product_F_batch(s.zeta, z) for w, s in mix.components) / measures.constants(2).N_canon
    V = rep.acceptance * 64
    total = V * q.mean()
    se = V * q.std(ddof=1) / math.sqrt(q.size)
    assert abs(total - 1) < 5 * math.hypot(se, rep.stderr * 64 * q.mean())


def test_moments_uniform_state():
    rep = S.estimate_moments(qf.thermal_state([0.5, 0.5]), cfg=cfg(200_000, 1))
    d = np.diag(rep.estimate).real[:2]
    assert np.all(np.abs(d - 0.5) < 5 * np.diag(rep.stderr)[:2])


def test_moments_single_mode_thermal():
    rep = S.estimate_moments(qf.thermal_state([0.3]), cfg=cfg(100_000, 7))
    off = 2 * rep.estimate[0, 0].real - 1
    assert abs(off - 0.4) < 5 * 2 * rep.stderr[0, 0]
    assert rep.extra["C_M"] == 1.5


def test_moments_two_mode_pairing():
    paired = qf.bcs_state([(0.8, 0.6j)])
    st_ = qf.GaussianState(0.85 * paired.zeta)
    rep = S.estimate_moments(st_, cfg=cfg(10**6, 3))
    assert rep.extra["max_z"] < 5
    exact, lit, se = rep.extra["exact"], rep.extra["literal"], rep.stderr
    assert np.max(np.abs(exact[:2, 2:])) > 0.2
    # without the Ibar conjugation only the normal block survives
    np.testing.assert_allclose(lit[:2, :2], rep.estimate[:2, :2])
    assert abs(lit[0, 3] - exact[0, 3]) / se[0, 3] > 20


def test_average_overlap():
    ops = fock.mode_operators(1)
    rep = S.average_overlap_check(np.eye(2), 1, cfg(5000))
    assert rep.estimate == pytest.approx(1, abs=1e-12)
    a = ops.annihilators[0]
    rep = S.average_overlap_check(a.T @ a, 1, cfg(50_000, 1))
    assert rep.extra["exact"] == pytest.approx(0.5) and rep.extra["z"] < 5


def test_average_overlap_random_hermitian(rng):
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    O = A + A.conj().T
    rep = S.average_overlap_check(O, 2, cfg(300_000, 2))
    assert rep.extra["z"] < 5


def test_report_json():
    rep = S.estimate_unity(2, cfg(20_000))
    d = rep.to_dict()
    assert set(d) >= {"estimate", "stderr", "n_total", "n_accepted", "acceptance", "seed", "elapsed"}
    assert 0 <= d["acceptance"] <= 1 and d["n_accepted"] <= d["n_total"]


@pytest.mark.parametrize("k", [0, 1, 2])
def test_general_k_normalisation(rng, k):
    st_ = qf.GaussianState(classd.random_domain_point(2, rng))
    rep = S.estimate_q_integral(st_, qf.ScalingParams(k), cfg(10**6, 40 + k))
    assert abs(rep.extra["z"]) < 5


def test_mixture_integral_two_modes():
    mix = qf.MixtureState(((0.5, qf.pure_number_state([1, 0])), (0.5, qf.bcs_state([(0.6, 0.8)]))))
    rep = S.estimate_q_integral(mix, cfg=cfg(10**5, 12))
    assert abs(rep.extra["z"]) < 5


def test_weighted_unity_with_k(rng):
    # E_uniform[Lambda S] V / N = I for the k = 1 basis
    z, _ = S.sample_uniform_domain(2, cfg(400_000, 13))
    U, vals = classd.polar_decompose_batch(z)
    L = fock.lambda_from_polar_batch(fock.mode_frame(U), vals)
    w = qf.scaling_factor(vals, 1) * measures.constants(2).V_canon / measures.constants(2, 1).N_canon
    X = (L * w[:, None, None]).reshape(len(w), -1)
    mean = X.mean(axis=0)
    se = np.sqrt(X.real.var(axis=0, ddof=1) + X.imag.var(axis=0, ddof=1)) / np.sqrt(len(w))
    dev = np.abs(mean - np.eye(4).ravel())
    assert np.all(S.zscores(dev, se) < 5)
