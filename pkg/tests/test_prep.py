import math

import numpy as np
import pytest

from spinhydro.model import (BathModel, ChainModel, DisorderRealization,
                             build_dipolar, draw_disorder)
from spinhydro.operators import (OperatorSum, X, Y, Z, collective_spin,
                                 normalized_trace_product, pauli)
from spinhydro.prep import (
    closed_form_rdq, closed_form_rz, optimal_jb_delay_us,
    simulate_prep_sequence, spatial_correlation_analytic,
    spatial_correlation_mc, thermalization_projection,
)

MODEL = ChainModel(n_sites=6, J=30.4, coupling_range=None)
BATH = BathModel(mode="gaussian", width_krad=7.0)
DIS = draw_disorder(BATH, MODEL, seed=11)


def test_closed_form_rz_coefficients():
    obs = closed_form_rz(DIS, tau_ms=1.08)
    assert np.allclose(obs.coeffs, np.sin(DIS.w * 1.08 / 3.0))
    assert obs.operator.coefficient(((2, Z),)) == pytest.approx(obs.coeffs[2] / 2)


def test_closed_form_zero_disorder():
    dis0 = DisorderRealization(w=np.zeros(5), seed=0)
    assert closed_form_rz(dis0, 1.0).operator.is_zero()
    assert closed_form_rdq(dis0, 1.0).operator.is_zero()


def test_closed_form_unit_coefficient():
    # w tau/3 = pi/2 at one site gives alpha = 1
    w = np.zeros(4)
    w[1] = 3 * math.pi / 2
    obs = closed_form_rz(DisorderRealization(w=w, seed=0), tau_ms=1.0)
    assert obs.coeffs[1] == pytest.approx(1.0)


def test_closed_form_requires_positive_tau():
    with pytest.raises(ValueError):
        closed_form_rz(DIS, 0.0)
    with pytest.raises(ValueError):
        closed_form_rdq(DIS, -1.0)


def test_closed_form_rdq_structure():
    obs = closed_form_rdq(DIS, tau_ms=0.96, axis="y")
    want = np.sin((DIS.w[:-1] + DIS.w[1:]) * 0.96 / 3.0)
    assert np.allclose(obs.coeffs, want)
    # (3/4) alpha' (SzSz - SxSx) per bond in Pauli units
    assert obs.operator.coefficient(((0, Z), (1, Z))) == pytest.approx(
        0.75 * want[0] / 4)
    assert obs.operator.coefficient(((0, X), (1, X))) == pytest.approx(
        -0.75 * want[0] / 4)


def test_closed_form_rdq_long_range_weights():
    obs = closed_form_rdq(DIS, tau_ms=0.96, axis="y", model=MODEL,
                          long_range=True)
    w = DIS.w * 0.96 / 3.0
    amp = 0.75 * math.sin(w[0] + w[2]) / 8.0  # r = 2 pair carries 1/8
    assert obs.operator.coefficient(((0, Z), (2, Z))) == pytest.approx(amp / 4)


def test_rz_zero_mean_over_realizations():
    # E[alpha] = 0: mean over many realizations within 4 standard errors
    n = 10_000
    rng = np.random.default_rng(4)
    w = rng.normal(0, 7.0, size=n)
    alphas = np.sin(w * 1.08 / 3.0)
    assert abs(alphas.mean()) < 4 * alphas.std() / math.sqrt(n)


def test_rz_overlap_with_homogeneous_decays():
    # the homogeneous amplitude mean_j cos(w_j tau/3) starts at 1 and dies;
    # the phase-cycled random observable stays orthogonal to the uniform sum
    big_model = ChainModel(n_sites=10, J=30.4)
    zsum = collective_spin(Z, 10)
    homog, rand_overlap = [], []
    for tau in (1e-4, 0.18, 0.42, 1.08):
        cos_amp, vals = [], []
        for s in range(60):
            dis = draw_disorder(BATH, big_model, seed=700 + s)
            cos_amp.append(np.mean(np.cos(dis.w * tau / 3.0)))
            o = closed_form_rz(dis, tau).operator
            vals.append(normalized_trace_product(o, zsum)
                        / max(o.norm() * zsum.norm(), 1e-300))
        homog.append(np.mean(cos_amp))
        rand_overlap.append(np.mean(vals))
    assert homog[0] == pytest.approx(1.0, abs=1e-6)
    assert homog[1] > homog[2] > homog[3]
    assert homog[-1] < 0.1
    assert abs(rand_overlap[-1]) < 0.1


def test_thermalization_projection_properties():
    H = build_dipolar(MODEL)
    rho = pauli(X, 0, 6) * 0.3 + H * 1.7
    out = thermalization_projection(rho, H)
    # projection onto H: idempotent, orthogonal part dropped
    assert (thermalization_projection(out, H) - out).norm() < 1e-14
    coef = normalized_trace_product(rho, H) / normalized_trace_product(H, H)
    assert (out - H * coef).norm() < 1e-14
    assert thermalization_projection(pauli(X, 0, 6), H).is_zero()
    with pytest.raises(ValueError):
        thermalization_projection(rho, OperatorSum.zero(6))


def test_jb_state_slope_linear_in_te():
    # projection weight of the two-pulse pair grows linearly at small t_e
    from scipy.linalg import expm

    from spinhydro.linalg import to_dense
    from spinhydro.prep import _rotate
    from spinhydro.sequence import US_TO_RAD

    L = 4
    model = ChainModel(n_sites=L, J=30.4, coupling_range=None)
    H = build_dipolar(model)
    Hm = to_dense(H)
    rho0 = to_dense(collective_spin(X, L))
    dim = 2 ** L
    slopes = []
    for t_e in (0.5, 1.0, 2.0):
        u = expm(-1j * Hm * (t_e * US_TO_RAD))
        rho = u @ rho0 @ u.conj().T
        rho = _rotate(rho, L, (1, 0, 0), math.pi / 4)
        lam = np.real(np.trace(rho @ Hm)) / np.real(np.trace(Hm @ Hm))
        slopes.append(lam / t_e)
    assert slopes[0] == pytest.approx(slopes[1], rel=0.01)
    assert slopes[1] == pytest.approx(slopes[2], rel=0.05)
    assert slopes[0] > 0


def test_simulate_rz_ideal_matches_closed_form():
    sim = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18, encode="ideal")
    ref = closed_form_rz(DIS, sim.tau_ms)
    assert sim.tau_ms == pytest.approx(1.08)
    assert np.max(np.abs(sim.coeffs - ref.coeffs)) < 1e-10


@pytest.mark.parametrize("axis", ["x", "y"])
def test_simulate_rz_axis_variants(axis):
    sim = simulate_prep_sequence(f"rZ_{axis}", MODEL, DIS, n_cycles=6,
                                 encode="ideal")
    ref = closed_form_rz(DIS, sim.tau_ms, axis=axis)
    assert np.max(np.abs(sim.coeffs - ref.coeffs)) < 1e-10


def test_simulate_rz_phase_cycle_cancels_cosine_quadrature():
    # the two-branch difference leaves no transverse component at all
    sim = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=6, encode="ideal")
    clean = closed_form_rz(DIS, sim.tau_ms).operator
    from spinhydro.linalg import to_dense

    resid = sim.rho - to_dense(clean)
    assert np.max(np.abs(resid)) < 1e-12


def test_simulate_rz_pulsed_no_couplings_close_to_closed_form():
    sim = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18,
                                 encode="wahuha", include_couplings=False)
    ref = closed_form_rz(DIS, sim.tau_ms)
    assert sim.overlap_with(ref.operator) > 0.999


def test_simulate_rz_full_hamiltonian_overlap():
    sim = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18,
                                 encode="wahuha", include_couplings=True)
    ref = closed_form_rz(DIS, sim.tau_ms)
    assert sim.overlap_with(ref.operator) >= 0.9


def test_pi_control_suppresses_random_state():
    sim = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18, encode="ideal")
    ctrl = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18,
                                  encode="ideal", with_pi_control=True)
    assert ctrl.magnitude() <= 0.1 * sim.magnitude()
    # and in the pulse-resolved mode with the full Hamiltonian
    simw = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18,
                                  encode="wahuha", include_couplings=True)
    ctrlw = simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=18,
                                   encode="wahuha", include_couplings=True,
                                   with_pi_control=True)
    assert ctrlw.magnitude() <= 0.1 * simw.magnitude()


def test_simulate_rdq_matches_closed_form_shape():
    sim = simulate_prep_sequence("rDQ_y", MODEL, DIS, n_cycles=16,
                                 encode="ideal")
    ref = closed_form_rdq(DIS, sim.tau_ms, axis="y")
    scale = float(np.dot(sim.coeffs, ref.coeffs) / np.dot(ref.coeffs, ref.coeffs))
    assert scale > 0
    resid = np.linalg.norm(sim.coeffs - scale * ref.coeffs)
    assert resid < 1e-10 * max(1.0, np.linalg.norm(sim.coeffs))
    assert sim.overlap_with(ref.operator) > 0.98


def test_simulate_prep_guards():
    with pytest.raises(ValueError):
        simulate_prep_sequence("rZ_z", MODEL, DIS, n_cycles=0)
    big = ChainModel(n_sites=13, J=30.4)
    big_dis = draw_disorder(BATH, big, seed=0)
    with pytest.raises(ValueError):
        simulate_prep_sequence("rZ_z", big, big_dis, n_cycles=2)
    with pytest.raises(ValueError):
        simulate_prep_sequence("rXX_z", MODEL, DIS, n_cycles=2)


def test_observable_json_round_trip():
    from spinhydro.prep import observable_from_json, observable_to_json

    for kind, tau in (("rZ_z", 1.08), ("rDQ_y", 0.96)):
        if kind.startswith("rZ"):
            obs = closed_form_rz(DIS, tau)
        else:
            obs = closed_form_rdq(DIS, tau)
        data = observable_to_json(obs, include_operator=True)
        back = observable_from_json(data)
        assert back.kind == obs.kind
        assert np.allclose(back.coeffs, obs.coeffs)
        assert (back.operator - obs.operator).norm() < 1e-14
    bad = observable_to_json(closed_form_rz(DIS, 1.08))
    bad["coeffs"][0] += 0.5
    with pytest.raises(ValueError):
        observable_from_json(bad)


def test_optimal_jb_delay_positive_weight():
    model = ChainModel(n_sites=4, J=30.4, coupling_range=None)
    dis = draw_disorder(BATH, model, seed=2)
    t_e = optimal_jb_delay_us(model, dis)
    assert 0 < t_e <= 60.0


GEO_BATH = BathModel(mode="geometric")


def test_spatial_correlation_equal_site_limit():
    # tau -> infinity: E[alpha_j^2] -> 1/2
    val = spatial_correlation_analytic(GEO_BATH, 60.0, 4, 4, 10)
    assert val == pytest.approx(0.5, abs=1e-6)


def test_spatial_correlation_small_tau_limit():
    # tau -> 0: E[alpha_j alpha_k] -> <w_j w_k> tau^2 / 9
    mat = GEO_BATH.coupling_matrix(10)
    tau = 1e-4
    want = float(mat[4] @ mat[5]) / 4.0 * tau ** 2 / 9.0
    got = spatial_correlation_analytic(GEO_BATH, tau, 4, 5, 10)
    assert got == pytest.approx(want, rel=1e-4)


def test_spatial_correlation_needs_geometric_bath():
    with pytest.raises(ValueError):
        spatial_correlation_analytic(BATH, 1.0, 0, 1, 6)


@pytest.mark.parametrize("j,k,tau", [(5, 5, 0.3), (5, 6, 0.3), (5, 6, 1.08),
                                     (5, 7, 0.6), (4, 6, 1.0)])
def test_spatial_correlation_monte_carlo_agreement(j, k, tau):
    ana = spatial_correlation_analytic(GEO_BATH, tau, j, k, 12)
    mc, err = spatial_correlation_mc(GEO_BATH, tau, j, k, 12, 150_000, seed=3)
    assert abs(mc - ana) < 3 * err


def test_decorrelation_at_operating_tau():
    # |E[a_j a_{j+1}]| / E[a_j^2] small at the operating encoding time
    num = spatial_correlation_analytic(GEO_BATH, 1.08, 5, 6, 12)
    den = spatial_correlation_analytic(GEO_BATH, 1.08, 5, 5, 12)
    assert abs(num / den) <= 0.05
