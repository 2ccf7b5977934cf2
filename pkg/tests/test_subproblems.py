import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from star_rsma import channel
from star_rsma import hermitian as hm
from star_rsma.conic import solve
from star_rsma.errors import ConfigurationError
from star_rsma.model import gain_tables_trace, psi_phi, receive_matrices, star_Q
from star_rsma.optimizer import evaluate_point, initial_beams, initial_star
from star_rsma.subproblems import (
    IterateAnchor,
    Variant,
    active_elements,
    anchor_values,
    best_t,
    build_beamforming_problem,
    build_phase_problem,
    constraint_violation,
    expand_Q,
    linearize_f,
    linearize_g,
    stream_names,
)

from conftest import desk_config, random_beams, random_star


def _setup(seed=0, variant=Variant(), **kw):
    cfg = desk_config(**kw)
    cs = channel.generate(cfg, seed)
    star = initial_star(cs, variant)
    P = initial_beams(cs, cfg, star, variant)
    pt = evaluate_point(cs, cfg, variant, P, star)
    anchor = IterateAnchor(P, pt.Q, pt.tau, pt.beta, pt.lam)
    return cfg, cs, pt, anchor


def _random_anchor(seed, tau=1.3, beta=1.8):
    rng = np.random.default_rng(seed)
    cfg = desk_config(K_r=2, K_t=1)
    cs = channel.generate(cfg, seed)
    star = random_star(rng, cfg.N_S)
    bs = random_beams(rng, cfg.N_T, cfg.K + 1, scale=0.3)
    return cfg, cs, IterateAnchor(bs.P, star_Q(star), tau, beta, 0.0), rng


def _psi(cs, cfg, P, Q):
    gu, _ = gain_tables_trace(cs, Q, P)
    return psi_phi(gu, cfg.sigma2)[0]


def test_stream_names():
    assert stream_names(2) == ["P_c", "P_1", "P_2"]
    assert stream_names(2, common=False) == ["P_1", "P_2"]


def test_active_elements():
    np.testing.assert_array_equal(active_elements(6, "star", "t"), np.arange(6))
    np.testing.assert_array_equal(active_elements(6, "ris", "r"), [0, 1, 2])
    np.testing.assert_array_equal(active_elements(6, "ris", "t"), [3, 4, 5])
    with pytest.raises(ConfigurationError):
        active_elements(5, "ris", "r")


def test_bad_variant_and_anchor():
    with pytest.raises(ConfigurationError):
        Variant(surface="mirror")
    with pytest.raises(ConfigurationError):
        IterateAnchor([], {}, lam=-1.0)
    with pytest.raises(ConfigurationError):
        IterateAnchor([], {}, rho=-1.0)
    with pytest.raises(ConfigurationError):
        IterateAnchor([], {}, tau=float("nan"))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 500))
def test_surrogates_exact_at_anchor(seed):
    cfg, cs, anchor, _ = _random_anchor(seed)
    vals = anchor_values(cs, anchor, Variant(), "beamforming")
    psi0 = _psi(cs, cfg, anchor.P, anchor.Q)
    for k in range(cs.K):
        assert linearize_f(cs, cfg, anchor, k).evaluate(vals) == pytest.approx(anchor.tau * psi0[k], rel=1e-10)
        assert linearize_g(cs, cfg, anchor, k).evaluate(vals) == pytest.approx((anchor.beta - 1) * psi0[k], rel=1e-10)


def test_surrogate_first_order_accuracy():
    """Error of the expansion of tau*psi shrinks quadratically with the step."""
    cfg, cs, anchor, rng = _random_anchor(1)
    D = [0.1 * hm.random_hermitian(rng, cs.N_T) for _ in anchor.P]
    dtau = 0.7
    errs = []
    for eps in (1e-2, 1e-3):
        P = [p + eps * d for p, d in zip(anchor.P, D)]
        tau = anchor.tau + eps * dtau
        vals = dict(zip(stream_names(cs.K), P), tau=tau, beta=anchor.beta)
        true = tau * _psi(cs, cfg, P, anchor.Q)[0]
        errs.append(abs(linearize_f(cs, cfg, anchor, 0).evaluate(vals) - true))
    assert errs[1] <= errs[0] / 50


def test_g_has_no_matrix_gradient_at_beta_one():
    cfg, cs, anchor, _ = _random_anchor(2, beta=1.0)
    g = linearize_g(cs, cfg, anchor, 0)
    assert all(np.allclose(C, 0) for C in g.mats.values())
    assert g.scalars["beta"] == pytest.approx(_psi(cs, cfg, anchor.P, anchor.Q)[0])


@pytest.mark.parametrize("lam", [0.0, 0.4])
def test_rate_constraint_coefficients(lam):
    cfg, cs, anchor, _ = _random_anchor(3)
    anchor.lam = lam
    prob = build_beamforming_problem(cs, cfg, anchor)
    Bu, _ = receive_matrices(cs, anchor.Q)
    c = prob.labelled("rate_0")[0]
    # constraint stored as t - rhs <= 0
    own = -c.expr.mats["P_1"]
    other = -c.expr.mats["P_2"]
    np.testing.assert_allclose(own, anchor.tau * Bu[0], rtol=1e-10, atol=1e-14 * np.abs(Bu[0]).max())
    np.testing.assert_allclose(other, (anchor.tau - lam) * Bu[0], rtol=1e-10, atol=1e-14 * np.abs(Bu[0]).max())


def test_beam_problem_labels():
    cfg, cs, _, anchor = _setup(K_r=2, K_t=1, J_r=1, J_t=1)
    prob = build_beamforming_problem(cs, cfg, anchor)
    labels = [c.label for c in prob.constraints]
    assert sum(lbl.startswith("internal_") for lbl in labels) == 3 * 2
    assert sum(lbl.startswith("eve_private_") for lbl in labels) == 2 * 3
    assert sum(lbl.startswith("eve_common_") for lbl in labels) == 2
    assert "power" in labels and "common_nonneg" in labels
    assert len(prob.powers) == 1
    sdma = build_beamforming_problem(cs, cfg, anchor, Variant(common=False))
    assert "P_c" not in sdma.matrix_vars
    assert not any(c.label.startswith(("common_", "eve_common_")) for c in sdma.constraints)
    ub = build_beamforming_problem(cs, cfg, anchor, Variant(secrecy=False))
    assert not any(c.label.startswith(("internal_", "eve_")) for c in ub.constraints)


@pytest.mark.parametrize("variant", [Variant(), Variant(common=False), Variant(surface="ris")])
def test_anchor_feasible_and_t_zero(variant):
    """At the anchor, with lambda equal to the current ratio, the best t is exactly zero."""
    cfg, cs, pt, anchor = _setup(4, variant)
    prob = build_beamforming_problem(cs, cfg, anchor, variant)
    vals = anchor_values(cs, anchor, variant, "beamforming")
    t0 = best_t(prob, vals)
    assert t0 == pytest.approx(0.0, abs=1e-9 * max(1.0, float(np.max(pt.psi))))
    vals["t"] = t0
    assert constraint_violation(prob, vals) <= 1e-9


@pytest.mark.parametrize("variant", [Variant(), Variant(common=False), Variant(secrecy=False)])
def test_beam_solve_improves_on_anchor(variant):
    cfg, cs, pt, anchor = _setup(5, variant)
    prob = build_beamforming_problem(cs, cfg, anchor, variant)
    sol = solve(prob)
    assert sol.ok
    assert sol["t"] >= -1e-7
    assert constraint_violation(prob, sol.values) <= 1e-6


def test_tau_beta_tight_at_optimum():
    cfg, cs, pt, anchor = _setup(6, K_r=2, K_t=1)
    sol = solve(build_beamforming_problem(cs, cfg, anchor))
    assert sol.ok
    assert sol["tau"] == pytest.approx(sol["beta"] ** (1 / cs.K), rel=1e-5)


def test_single_user_beam_problem():
    cfg, cs, pt, anchor = _setup(7, K_r=1, K_t=0, J_r=1, J_t=0)
    prob = build_beamforming_problem(cs, cfg, anchor)
    assert not prob.powers  # tau <= beta is linear for one user
    assert solve(prob).ok


def test_phase_problem_structure():
    cfg, cs, _, anchor = _setup(8)
    star = build_phase_problem(cs, cfg, anchor)
    assert sum(c.label.startswith("diag_") for c in star.constraints) == cs.N_S
    assert star.matrix_vars == {"Q_r": cs.N_S, "Q_t": cs.N_S}
    ris_anchor = _setup(8, Variant(surface="ris"))[3]
    ris = build_phase_problem(cs, cfg, ris_anchor, Variant(surface="ris"))
    assert ris.matrix_vars == {"Q_r": cs.N_S // 2, "Q_t": cs.N_S // 2}
    assert sum(c.label.startswith("diag_r_") for c in ris.constraints) == cs.N_S // 2


def test_penalty_vanishes_at_rank_one_anchor():
    cfg, cs, pt, anchor = _setup(9)
    anchor.rho = 10.0
    prob = build_phase_problem(cs, cfg, anchor)
    vals = anchor_values(cs, anchor, Variant(), "phase")
    vals["t"] = 0.0
    assert prob.objective.evaluate(vals) == pytest.approx(0.0, abs=1e-9)


def test_phase_step_does_not_lose_ground():
    """Small instance: the phase SDP optimum is at least the anchor's t."""
    cfg, cs, pt, anchor = _setup(10, N_T=2, N_S=4, K_r=1, K_t=1, J_r=1, J_t=0)
    prob = build_phase_problem(cs, cfg, anchor)
    vals = anchor_values(cs, anchor, Variant(), "phase")
    t_anchor = best_t(prob, vals)
    vals["t"] = t_anchor
    assert constraint_violation(prob, vals) <= 1e-9
    sol = solve(prob)
    assert sol.ok
    assert sol["t"] >= t_anchor - 1e-7 * max(1.0, abs(t_anchor))
    Qr, Qt = sol["Q_r"], sol["Q_t"]
    np.testing.assert_allclose(np.diag(Qr).real + np.diag(Qt).real, 1.0, atol=1e-6)


def test_expand_Q_places_blocks():
    Qr = np.full((2, 2), 1.0 + 0j)
    Qt = np.full((2, 2), 2.0 + 0j)
    out = expand_Q(Qr, Qt, 4, "ris")
    assert out["r"][:2, :2].sum() == 4 and out["r"][2:, 2:].sum() == 0
    assert out["t"][2:, 2:].sum() == 8 and out["t"][:2, :2].sum() == 0
    full = expand_Q(np.eye(4), np.eye(4), 4, "star")
    np.testing.assert_array_equal(full["r"], np.eye(4))
