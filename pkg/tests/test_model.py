import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from star_rsma import channel
from star_rsma.channel import ChannelSet, Link
from star_rsma.config import SystemConfig
from star_rsma.errors import ConfigurationError, NumericError
from star_rsma.model import (
    BeamSolution,
    StarState,
    check_feasibility,
    check_report_invariants,
    gain_tables_trace,
    gain_tables_vector,
    psi_phi,
    rates,
    secrecy_residuals,
    secrecy_scale,
    sinr_eve,
    sinr_internal,
    sinr_user,
    star_Q,
    user_sinrs,
)

from conftest import desk_config, random_beams, random_star


def _direct(cs, star, W, rx, side):
    """Received power of each stream at channel ``rx``, by plain arithmetic."""
    q = star.q(side)
    theta = np.diag(np.conj(q))
    eff = np.conj(rx) @ theta @ cs.H
    return np.array([abs(eff @ W[:, m]) ** 2 for m in range(W.shape[1])])


def _instance(seed, rng, cfg=None):
    cfg = cfg or desk_config(K_r=2, K_t=1, J_r=1, J_t=1)
    cs = channel.generate(cfg, seed)
    return cfg, cs, random_star(rng, cfg.N_S), random_beams(rng, cfg.N_T, cfg.K + 1)


def test_zero_precoders_give_zero_sinr(desk, rng):
    cfg, cs = desk
    bs = BeamSolution.from_precoders(np.zeros((cfg.N_T, cfg.K + 1)))
    star = random_star(rng, cfg.N_S)
    assert sinr_user(cs, star, bs, 0) == (0.0, 0.0)
    gc, gp = sinr_eve(cs, star, bs, 0)
    assert gc == 0.0 and np.all(gp == 0)
    rep = rates(cs, star, bs)
    assert rep.min_rate == 0.0
    assert check_feasibility(cs, star, bs).feasible


def _single_link(P, sigma2=1.0):
    cfg = SystemConfig(N_T=1, N_S=1, K_r=1, K_t=0, J_r=0, J_t=0, sigma2=sigma2)
    cs = ChannelSet(H=np.array([[1.0 + 0j]]), users=[Link(np.array([1.0 + 0j]), "r", 1.0, 1.0)],
                    eves=[], cfg=cfg, seed=0)
    star = StarState([1.0], [0.0], [0.0], [0.0])
    bs = BeamSolution.from_precoders(np.array([[0.0, math.sqrt(P)]]))
    return cfg, cs, star, bs


def test_single_link_closed_form():
    cfg, cs, star, bs = _single_link(3.0, sigma2=0.5)
    gc, gp = sinr_user(cs, star, bs, 0, cfg)
    assert gc == 0.0
    assert gp == pytest.approx(3.0 / 0.5)


def test_user_sinrs_match_direct_arithmetic(rng):
    for seed in range(10):
        cfg, cs, star, bs = _instance(seed, rng)
        for k in range(cfg.K):
            p = _direct(cs, star, bs.w, cs.h[k], cs.user_sides[k])
            interf = p[1:].sum()
            gc, gp = sinr_user(cs, star, bs, k, cfg)
            assert gc == pytest.approx(p[0] / (interf + cfg.sigma2), rel=1e-9)
            assert gp == pytest.approx(p[k + 1] / (interf - p[k + 1] + cfg.sigma2), rel=1e-9)


def test_common_power_absent_from_common_denominator(rng):
    cfg, cs, star, bs = _instance(0, rng)
    gc1, _ = sinr_user(cs, star, bs, 0, cfg)
    W = bs.w.copy()
    W[:, 0] *= 3.0
    gc2, _ = sinr_user(cs, star, BeamSolution.from_precoders(W), 0, cfg)
    assert gc2 == pytest.approx(9.0 * gc1, rel=1e-12)


def test_internal_sinr_direct(rng):
    cfg, cs, star, bs = _instance(1, rng)
    for k in range(cfg.K):
        p = _direct(cs, star, bs.w, cs.h[k], cs.user_sides[k])
        for i in range(cfg.K):
            if i == k:
                continue
            others = sum(p[m + 1] for m in range(cfg.K) if m not in (k, i))
            assert sinr_internal(cs, star, bs, k, i, cfg) == pytest.approx(p[i + 1] / (others + cfg.sigma2), rel=1e-9)


def test_internal_sinr_two_users_noise_only(desk, rng):
    cfg, cs = desk
    star = random_star(rng, cfg.N_S)
    bs = random_beams(rng, cfg.N_T, 3)
    p = _direct(cs, star, bs.w, cs.h[0], cs.user_sides[0])
    assert sinr_internal(cs, star, bs, 0, 1, cfg) == pytest.approx(p[2] / cfg.sigma2, rel=1e-12)


def test_internal_sinr_zero_stream(desk, rng):
    cfg, cs = desk
    W = random_beams(rng, cfg.N_T, 3).w
    W[:, 2] = 0
    assert sinr_internal(cs, random_star(rng, cfg.N_S), BeamSolution.from_precoders(W), 0, 1, cfg) == 0.0


@pytest.mark.parametrize("i", [0, "c"])
def test_internal_sinr_rejects_own_and_common(desk, rng, i):
    cfg, cs = desk
    with pytest.raises(ConfigurationError):
        sinr_internal(cs, random_star(rng, cfg.N_S), random_beams(rng, cfg.N_T, 3), 0, i, cfg)


def test_eve_sinr_direct(rng):
    cfg, cs, star, bs = _instance(2, rng)
    for j in range(cfg.J):
        p = _direct(cs, star, bs.w, cs.g[j], cs.eve_sides[j])
        gc, gp = sinr_eve(cs, star, bs, j, cfg)
        assert gc == pytest.approx(p[0] / (p[1:].sum() + cfg.sigma2_E), rel=1e-9)
        for k in range(cfg.K):
            assert gp[k] == pytest.approx(p[k + 1] / (p.sum() - p[k + 1] + cfg.sigma2_E), rel=1e-9)


def test_eve_sinr_single_private(desk, rng):
    cfg, cs = desk
    W = np.zeros((cfg.N_T, 3), complex)
    W[:, 1] = rng.standard_normal(cfg.N_T)
    star = random_star(rng, cfg.N_S)
    bs = BeamSolution.from_precoders(W)
    p = _direct(cs, star, W, cs.g[0], cs.eve_sides[0])
    _, gp = sinr_eve(cs, star, bs, 0, cfg)
    assert gp[0] == pytest.approx(p[1] / cfg.sigma2_E, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_trace_and_vector_forms_agree(seed):
    rng = np.random.default_rng(seed)
    cfg, cs, star, bs = _instance(seed, rng)
    a = gain_tables_vector(cs, star, bs.w)
    b = gain_tables_trace(cs, star_Q(star), bs.P)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-9, atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_psi_phi_identity(seed):
    rng = np.random.default_rng(seed)
    cfg, cs, star, bs = _instance(seed, rng)
    gu, _ = gain_tables_vector(cs, star, bs.w)
    _, gp = user_sinrs(gu, cfg.sigma2)
    psi, phi = psi_phi(gu, cfg.sigma2)
    np.testing.assert_allclose(1 + gp, psi / phi, rtol=1e-12)


def test_equal_allocation(rng):
    cfg, cs, star, bs = _instance(3, rng)
    gu, _ = gain_tables_vector(cs, star, bs.w)
    gc, _ = user_sinrs(gu, cfg.sigma2)
    Rc = np.min(np.log2(1 + gc))
    bs.c_alloc = np.full(cfg.K, Rc / cfg.K)
    rep = rates(cs, star, bs, cfg)
    np.testing.assert_allclose(rep.C, Rc / cfg.K)
    check_report_invariants(rep)


def test_allocation_clipped_to_common_rate(rng):
    cfg, cs, star, bs = _instance(4, rng)
    bs.c_alloc = np.full(cfg.K, 100.0)
    rep = rates(cs, star, bs, cfg)
    assert rep.C.sum() == pytest.approx(rep.R_c)
    check_report_invariants(rep)


def test_min_rate_is_minimum(rng):
    for seed in range(10):
        cfg, cs, star, bs = _instance(seed, rng)
        rep = rates(cs, star, bs, cfg)
        assert np.all(rep.min_rate <= rep.R_tot)
        assert rep.min_rate == np.min(rep.R_tot)


def test_report_invariant_violation_detected(rng):
    cfg, cs, star, bs = _instance(5, rng)
    rep = rates(cs, star, bs, cfg)
    rep.R_tot = rep.R_tot + 1.0
    with pytest.raises(NumericError):
        check_report_invariants(rep)


def test_report_kv_block(rng):
    cfg, cs, star, bs = _instance(6, rng)
    text = rates(cs, star, bs, cfg).to_kv()
    keys = [ln.split(" = ")[0] for ln in text.splitlines()]
    assert keys[0] == "min_rate" and "gamma_E_c_1" in keys and "gamma_1_to_2" in keys


def test_energy_split_residual():
    cfg = desk_config()
    cs = channel.generate(cfg, 0)
    star = StarState(np.full(8, 0.9), np.full(8, 0.9), np.zeros(8), np.zeros(8))
    bs = BeamSolution.from_precoders(np.zeros((4, 3)))
    assert check_feasibility(cs, star, bs).residuals["energy_split"] == pytest.approx(0.62)


def test_scaling_breaks_feasibility(desk, rng):
    cfg, cs = desk
    star = random_star(rng, cfg.N_S)
    bs = random_beams(rng, cfg.N_T, 3)
    gu, ge = gain_tables_vector(cs, star, bs.w)
    s = min(secrecy_scale(gu, ge, cfg), cfg.P_max / bs.total_power)
    ok = BeamSolution.from_precoders(math.sqrt(s) * bs.w)
    assert check_feasibility(cs, star, ok).feasible
    bad = BeamSolution.from_precoders(1e3 * ok.w)
    rep = check_feasibility(cs, star, bad)
    assert not rep.feasible
    assert rep.worst_name() in ("power", "internal", "eve_private", "eve_common")


def test_secrecy_scale_is_tight(rng):
    """After scaling, the binding secrecy residual sits exactly at zero."""
    hit = 0
    for seed in range(20):
        cfg, cs, star, bs = _instance(seed, rng)
        gu, ge = gain_tables_vector(cs, star, bs.w)
        boost = 100.0 * cfg.sigma2 / gu.max()  # strong enough that some constraint binds
        gu, ge = boost * gu, boost * ge
        s = secrecy_scale(gu, ge, cfg)
        res = secrecy_residuals(s * gu, s * ge, cfg)
        assert max(res.values()) <= 1e-9
        if s < 1:
            hit += 1
            assert max(res.values()) == pytest.approx(0.0, abs=1e-9)
    assert hit > 0


def test_secrecy_residual_matches_sinr_threshold(rng):
    """A residual <= 0 is the same statement as SINR <= threshold."""
    for seed in range(20):
        cfg, cs, star, bs = _instance(seed, rng)
        gu, ge = gain_tables_vector(cs, star, bs.w)
        rep = rates(cs, star, bs, cfg)
        res = secrecy_residuals(gu, ge, cfg)
        internal_ok = np.nanmax(rep.gamma_internal) <= cfg.r_0
        assert (res["internal"] <= 0) == internal_ok
        assert (res["eve_private"] <= 0) == (rep.gamma_eve_p.max() <= cfg.r_E)
        assert (res["eve_common"] <= 0) == (rep.gamma_eve_c.max() <= cfg.r_E)
