import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosecool.bath_rates import BathSpec, compute_rates
from bosecool.coarse_dynamics import (CoarseModel, CoarseProjector, CoarseState, FTable, apply_B_ladder,
                                      apply_C_ladder, check_L11_vanishes, coarse_trajectory_table,
                                      coherence_spectrum, db_symmetrization_residual,
                                      detailed_balance_residual, evolve_coarse, f_closed, f_numeric,
                                      ladder_residual, microscopic_derivative, random_coarse_state,
                                      stationary_json, stationary_populations, v_coefficient)
from bosecool.fock_basis import build_basis
from bosecool.liouville import pure_state
from bosecool.vacua import VacuumLabel, VacuumStructure

W = VacuumLabel


def test_f_closed_examples():
    assert all(f_closed(l, 0, N) == 0 for l in range(8) for N in (1, 2, 5))
    assert f_closed(2, 1, 2) == pytest.approx(1.0)
    assert f_closed(4, 1, 3) ** 2 == pytest.approx(4.0)
    with pytest.raises(ValueError):
        f_closed(3, 2, 3)


def test_f_closed_follows_recurrence():
    for N in (2, 3, 7):
        for l in range(0, 10):
            for s in range(0, l // 2 + 1):
                lhs = f_closed(l + 2, s + 1, N) ** 2
                assert lhs == pytest.approx(f_closed(l, s, N) ** 2 + 4 * l / N + 2 - 2 / N)


def test_f_numeric_examples(make_bundle):
    S = make_bundle(2, 6).structure
    assert f_numeric(S, (2, 1, 1)) == pytest.approx(1.0, abs=1e-12)
    assert f_numeric(S, (3, 0, 1)) == 0.0


def test_f_is_v_independent():
    S = VacuumStructure(build_basis(6, 8))
    t = FTable.build(S)
    assert t.numeric[W(8, 1, 1)] == pytest.approx(t.numeric[W(8, 1, 2)], abs=1e-10)
    assert t.max_deviation() < 1e-10


@pytest.mark.parametrize("N", [2, 3, 4])
def test_ladder_expansions(make_bundle, N):
    S = make_bundle(N, 8).structure
    worst = 0.0
    for w in S.labels:
        for k in range(S.basis.L_max - w.l + 1):
            worst = max(worst, ladder_residual(S, S.ops.B, k, w, apply_B_ladder(S, k, w)))
            if w.l + k + 1 <= S.basis.L_max:
                worst = max(worst, ladder_residual(S, S.ops.C, k, w, apply_C_ladder(S, k, w)))
    assert worst < 1e-9


def test_ladder_expansion_examples(make_bundle):
    S = make_bundle(2, 6).structure
    assert apply_B_ladder(S, 2, (0, 0, 1)) == {(W(0, 0, 1), 0): pytest.approx(1.0)}
    assert (W(2, 1, 1), 0) not in apply_B_ladder(S, 1, (2, 1, 1))
    assert apply_C_ladder(S, 0, (0, 0, 1)) == {}
    c = apply_C_ladder(S, 0, (2, 1, 1))
    assert c[(W(0, 0, 1), 1)] == pytest.approx(1 / (2 * math.sqrt(2)))
    for l, N in [(0, 2), (3, 4), (5, 6)]:
        assert v_coefficient(l, 1, N) == pytest.approx(l / N + 0.5)


def test_project_examples(make_bundle):
    b = make_bundle(3, 6)
    P, S = b.projector, b.structure
    v1 = S.vacua[W(2, 1, 1)].embed(b.basis)
    v2 = S.vacua[W(3, 0, 1)].embed(b.basis)
    cs = P.project(pure_state(v1))
    assert cs.n((2, 1, 1)) == pytest.approx(1.0) and cs.total == pytest.approx(1.0)
    cs = P.project(pure_state(v1 + v2))
    assert cs.n((2, 1, 1)) == pytest.approx(0.5) and cs.n((3, 0, 1)) == pytest.approx(0.5)
    assert cs.r((2, 1, 1), (3, 0, 1)) == pytest.approx(0.5)
    assert cs.r((3, 0, 1), (2, 1, 1)) == pytest.approx(0.5)


def test_lift_geometric_populations():
    S = VacuumStructure(build_basis(1, 40))
    P = CoarseProjector(S)
    rho = P.lift(CoarseState.single((0, 0, 1)), math.log(2))
    d = np.real(np.diag(rho))
    assert d[:4] == pytest.approx([0.5, 0.25, 0.125, 0.0625], abs=1e-12)
    assert np.trace(rho).real == pytest.approx(1.0)


def test_lift_rejects_large_tail(make_bundle):
    P = make_bundle(2, 6).projector
    with pytest.raises(ValueError):
        P.lift(CoarseState.single((0, 0, 1)), math.log(2))
    P.lift(CoarseState.single((0, 0, 1)), math.log(2), tail_tol=None)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 4.0))
def test_project_lift_roundtrip(make_bundle, seed, beta):
    b = make_bundle(3, 6)
    cs = random_coarse_state(b.projector.labels, np.random.default_rng(seed))
    rho = b.projector.lift(cs, beta, tail_tol=None)
    back = b.projector.project(rho)
    assert np.trace(rho).real == pytest.approx(1.0)
    for w in b.projector.labels:
        assert back.n(w) == pytest.approx(cs.n(w), abs=1e-12)
    for p in b.projector.pairs:
        assert abs(back.coherences[p] - cs.coherences[p]) < 1e-12
    assert cs.cauchy_schwarz_excess() <= 1e-12
    assert b.projector.unprojected_weight(rho) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 3.0), st.floats(-2.0, 0.0))
def test_coarse_evolution_conserves_family_mass(seed, beta, beta_mu):
    S = VacuumStructure(build_basis(3, 8))
    rates = compute_rates(BathSpec(3, 0.1, beta, beta_mu).with_gamma_down(1.0))
    model = CoarseModel.from_structure(S, rates)
    cs = random_coarse_state(model.labels, np.random.default_rng(seed))
    tr = evolve_coarse(model, cs, 5.0 / model.slow_rate(), n_samples=11)
    m0 = cs.family_masses()
    for i in range(len(tr.times)):
        st_i = tr.state(i)
        assert st_i.total == pytest.approx(1.0, abs=1e-9)
        for fam, m in st_i.family_masses().items():
            assert m == pytest.approx(m0[fam], abs=1e-9)


@pytest.mark.parametrize("beta,beta_mu", [(math.log(2), 0.0), (math.log(2), -1.0), (1.5, -0.3)])
def test_stationary_state(make_bundle, beta, beta_mu):
    S = make_bundle(3, 8).structure
    rates = compute_rates(BathSpec(3, 0.1, beta, beta_mu).with_gamma_down(1.0))
    model = CoarseModel.from_structure(S, rates)
    cs0 = random_coarse_state(model.labels, np.random.default_rng(2))
    stat = stationary_populations(model, cs0)
    assert np.abs(model.Gn @ model.to_vectors(stat)[0]).max() < 1e-12
    assert detailed_balance_residual(model, stat) < 1e-12
    ratio = stat.n((2, 1, 1)) / stat.n((0, 0, 1))
    assert ratio == pytest.approx(math.exp(beta_mu) * math.exp(-2 * beta), rel=1e-12)
    slowest = min(model.slow_rate(), -coherence_spectrum(model)["full"].real.max())
    tr = evolve_coarse(model, cs0, 40.0 / slowest, n_samples=2)
    assert np.abs(tr.n[-1] - model.to_vectors(stat)[0]).max() < 1e-9
    assert np.abs(tr.r[-1]).max() < 1e-9


def test_cold_bath_stationary_state_is_family_base(make_bundle):
    S = make_bundle(3, 8).structure
    rates = compute_rates(BathSpec(3, 0.1, math.inf).with_gamma_down(1.0))
    model = CoarseModel.from_structure(S, rates)
    stat = stationary_populations(model, CoarseState.single((6, 3, 1)))
    assert stat.n((0, 0, 1)) == pytest.approx(1.0)


def test_coherence_spectrum(make_bundle):
    model = make_bundle(3, 6).model
    spec = coherence_spectrum(model)
    assert spec["full"].real.max() < 0
    assert spec["db"].real.max() <= 1e-12
    assert spec["neg_offdiag"] == 0.0
    assert np.all(spec["neg"] < 0)
    assert db_symmetrization_residual(model) < 1e-12


def test_coherences_decay_in_weighted_norm(make_bundle):
    model = make_bundle(3, 6).model
    x2 = model.rates.gamma1_up / model.rates.gamma1_down
    wts = np.array([x2 ** min(p[0].s, p[1].s) for p in model.pairs])
    lam = coherence_spectrum(model)["full"].real.max()
    cs = random_coarse_state(model.labels, np.random.default_rng(7))
    tr = evolve_coarse(model, cs, 3.0 / model.slow_rate(), n_samples=7)
    norm = lambda r: np.sqrt(np.sum(np.abs(r) ** 2 / wts))
    for t, r in zip(tr.times, tr.r):
        assert norm(r) <= norm(tr.r[0]) * math.exp(lam * t) * (1 + 1e-9)


def test_microscopic_two_quantum_term_matches_rate_equations():
    # cold bath keeps the ladder-thermal tails well inside the cutoff
    S = VacuumStructure(build_basis(3, 16))
    P = CoarseProjector(S)
    rates = compute_rates(BathSpec(3, 0.1, math.log(10)).with_gamma_down(1.0))
    model = CoarseModel.from_structure(S, rates)
    low = [w for w in S.labels if w.l <= 4]
    cs = random_coarse_state(low, np.random.default_rng(1))
    mic = microscopic_derivative(P, S.ops, rates, cs, "L12")
    co = model.derivative(cs)
    scale = rates.gamma1_down
    assert max(abs(mic.n(w) - co.n(w)) for w in S.labels) < 1e-10 * scale
    assert max(abs(mic.coherences[p] - co.coherences[p]) for p in P.pairs) < 1e-10 * scale
    assert check_L11_vanishes(P, S.ops, rates, labels=low) < 1e-9


def test_L11_vanishes_on_single_states():
    # long ladders (N=2, L_max=40) so the geometric tails at beta = ln 2 are ~1e-12
    S = VacuumStructure(build_basis(2, 40))
    P = CoarseProjector(S)
    rates = compute_rates(BathSpec(2, 0.1, math.log(2)).with_gamma_down(1.0))
    states = [CoarseState.single((0, 0, 1)), CoarseState({W(0, 0, 1): 0.5, W(2, 1, 1): 0.5},
                                                          {(W(0, 0, 1), W(2, 1, 1)): 0.3 + 0.1j})]
    assert check_L11_vanishes(P, S.ops, rates, states=states) < 1e-9


def test_L11_projection_nonzero_with_short_ladders(make_bundle):
    # truncated geometric tails break the cancellation; this is a cutoff effect
    b = make_bundle(3, 8)
    cs = CoarseState({W(2, 1, 1): 0.5, W(3, 0, 1): 0.5}, {(W(2, 1, 1), W(3, 0, 1)): 0.3 + 0.1j})
    assert check_L11_vanishes(b.projector, b.ops, b.rates, states=[cs]) > 1e-6


def test_tables(make_bundle):
    model = make_bundle(2, 4).model
    tr = evolve_coarse(model, CoarseState.single((2, 1, 1)), 1.0, n_samples=3)
    header, rows = coarse_trajectory_table(tr)
    assert header[:3] == ["t", "trace_drift", "leak_top2"]
    assert "n_2.1.1" in header and "r_0.0.1__2.1.1_re" in header and "r_0.0.1__2.1.1_im" in header
    assert len(rows) == 3 and len(rows[0]) == len(header)
    js = stationary_json(model, stationary_populations(model, CoarseState.single((2, 1, 1))))
    assert set(js) >= {"populations", "beta_e_prime", "family_masses"}
