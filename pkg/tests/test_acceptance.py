"""End-to-end acceptance scenarios.

Each test prints one PASS/FAIL line with the measured numbers.  The two
large transport scenarios dominate the runtime (tens of minutes each on a
small desktop); everything else completes in seconds to a few minutes.
"""

import math
import time

import numpy as np
import pytest

from spinhydro.engine import (EvolutionJob, combine_curves,
                              estimate_infinite_t_trace, evolve_correlation,
                              evolve_correlation_set,
                              free_fermion_autocorrelation)
from spinhydro.model import (BathModel, ChainModel, DisorderRealization,
                             HamiltonianParams, build_dipolar, build_field,
                             build_tunable, draw_disorder,
                             local_energy_density)
from spinhydro.mqc import (RotationScan, extract_correlation, overlap,
                           scan_fit_residual, synthesize_scan)
from spinhydro.operators import (IstoLabel, OperatorSum, X, Y, Z,
                                 collective_spin, isto, multiply,
                                 normalized_trace_product, pauli, spin)
from spinhydro.prep import (closed_form_rdq, closed_form_rz,
                            simulate_prep_sequence,
                            spatial_correlation_analytic,
                            spatial_correlation_mc)
from spinhydro.sequence import (NegativeDelayError, SequenceParams,
                                compiled_roundtrip_residual,
                                simulate_finite_pulses, sixteen_pulse)
from spinhydro.transport import (CorrelationCurve, diffusion_constant,
                                 envelope_curve, fit_exponent)

# fit windows fixed by the dense and size cross-checks (see tests below for
# the finite-size reasoning); times are dimensionless Jt
BALLISTIC_WINDOW = (5.0, 50.0)
COEXISTENCE_WINDOW = (12.0, 28.0)
DUAL_DIFFUSION_SPIN_WINDOW = (10.0, 22.0)
DUAL_DIFFUSION_ENERGY_WINDOW = (12.0, 34.0)


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def test_case1_ballistic_spin_free_fermion():
    """Non-interacting chain at L = 200: spin z = 1.0 +- 0.15 on Jt in [5, 50]."""
    t0 = time.time()
    model = ChainModel(n_sites=200, J=1.0, coupling_range=1)
    grid = np.arange(0.0, 55.0001, 0.05)
    curve = free_fermion_autocorrelation(model, 0.5, 100, grid)
    fit = fit_exponent(envelope_curve(curve), *BALLISTIC_WINDOW)
    ok = abs(fit.z - 1.0) <= 0.15
    _report("case-1 ballistic spin", ok,
            f"z = {fit.z:.3f} +- {fit.z_err:.3f}, {time.time()-t0:.1f}s")
    assert ok
    assert time.time() - t0 < 60.0


@pytest.mark.slow
def test_case2_coexistence_spin_diffusive_energy_ballistic():
    """Interacting integrable chain (u, v, h) = (-0.15, 0.3, 0) at L = 18:
    spin exponent exceeds the energy exponent by at least 0.5 on the
    pre-revival window Jt in [12, 28].

    The window comes from a dense cross-check: L = 10 and L = 12 energy
    curves separate beyond Jt ~ 19 at L = 12 (ballistic fronts reach the
    edges), which scales to Jt ~ 28 at L = 18; the spin transient ends near
    Jt ~ 12 because the engineered couplings are 0.15 J / 0.3 J.
    """
    t0 = time.time()
    L = 18
    model = ChainModel(n_sites=L, J=1.0, coupling_range=1)
    params = HamiltonianParams(u=-0.15, v=0.3)
    H = build_tunable(model, params)
    c = L // 2
    grid = np.concatenate([[0.0], np.geomspace(0.4, 29.0, 42)])
    spin_op = spin(Z, c, L)
    energy_op = local_energy_density(model, params, None, c)
    spin_curve, energy_curve = evolve_correlation_set(
        H, [(spin_op, spin_op), (energy_op, energy_op)], grid,
        method="krylov", n_vectors=20, seed=71,
        labels=["spin_local", "energy_local"])
    fs = fit_exponent(spin_curve, *COEXISTENCE_WINDOW)
    fe = fit_exponent(energy_curve, *COEXISTENCE_WINDOW)
    sep = fs.z - fe.z
    ok = sep >= 0.5
    _report("case-2 coexistence", ok,
            f"spin z = {fs.z:.3f} +- {fs.z_err:.3f}, "
            f"energy z = {fe.z:.3f} +- {fe.z_err:.3f}, "
            f"separation = {sep:.3f}, {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 7200.0


@pytest.mark.slow
def test_case3_dual_diffusion_with_disorder():
    """Non-integrable chain (u, v, h) = (-0.15, 0.3, 0.23), 20 disorder
    realizations: both channels fit z = 2.0 +- 0.4 on their pre-revival
    windows.

    The chain keeps the leading beyond-nearest coupling shell (1/r^3 at
    r <= 2), which is the dominant integrability breaker alongside the
    field; with nearest-neighbor truncation the energy channel stays in the
    ballistic-to-diffusive crossover (z ~ 1.3) throughout every reachable
    window.  Windows are per channel, following the different transients
    (the experiment likewise fits spin and energy from different start
    times): the spin fit ends at Jt = 22 where a desk-scale disorder-plus-
    tail plateau sets in, and the size cross-check (L = 13 vs 16) bounds
    the energy window at Jt ~ 34.
    """
    t0 = time.time()
    L = 16
    n_realizations = 20
    model = ChainModel(n_sites=L, J=1.0, coupling_range=2)
    model_phys = ChainModel(n_sites=L, J=30.4, coupling_range=2)
    nn_model = ChainModel(n_sites=L, J=1.0, coupling_range=1)
    params = HamiltonianParams(u=-0.15, v=0.3, h=0.23)
    bath = BathModel(mode="gaussian", width_krad=7.0)
    c = L // 2
    grid = np.concatenate([[0.0], np.geomspace(0.4, 36.0, 44)])
    spin_curves, energy_curves = [], []
    spin_op = spin(Z, c, L)
    for r in range(n_realizations):
        raw = draw_disorder(bath, model_phys, seed=1000 + r)
        dis = DisorderRealization(w=raw.w / model_phys.J, seed=raw.seed)
        H = build_tunable(model, params, dis)
        energy_op = local_energy_density(nn_model, params, dis, c)
        sc, ec = evolve_correlation_set(
            H, [(spin_op, spin_op), (energy_op, energy_op)], grid,
            method="krylov", n_vectors=5, seed=4000 + r,
            labels=["spin_local", "energy_local"])
        spin_curves.append(sc)
        energy_curves.append(ec)
    spin_curve = combine_curves(spin_curves)
    energy_curve = combine_curves(energy_curves)
    fs = fit_exponent(spin_curve, *DUAL_DIFFUSION_SPIN_WINDOW)
    fe = fit_exponent(energy_curve, *DUAL_DIFFUSION_ENERGY_WINDOW)
    ok = abs(fs.z - 2.0) <= 0.4 and abs(fe.z - 2.0) <= 0.4
    _report("case-3 dual diffusion", ok,
            f"spin z = {fs.z:.3f} +- {fs.z_err:.3f}, "
            f"energy z = {fe.z:.3f} +- {fe.z_err:.3f}, {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 14400.0


def test_sequence_compiler_round_trip():
    """50 random feasible targets compile, rebuild and match the target
    Hamiltonian to < 1e-12 relative norm at L = 8; the delta-pulse
    effective-Hamiltonian residual falls with tau0 (log-log slope >= 0.9)."""
    t0 = time.time()
    L = 8
    model = ChainModel(n_sites=L, J=1.0, coupling_range=None)
    rng = np.random.default_rng(1234)
    dis = DisorderRealization(w=rng.normal(0.0, 0.23, L), seed=0)
    H_native = build_dipolar(model) + build_field(model, dis.w)
    worst = 0.0
    n_ok = 0
    while n_ok < 50:
        target = HamiltonianParams(u=float(rng.uniform(-0.4, 0.4)),
                                   v=float(rng.uniform(-0.4, 0.4)),
                                   h=float(rng.uniform(-0.3, 0.3)))
        try:
            _, residual = compiled_roundtrip_residual(model, target, dis, H_native)
        except NegativeDelayError:
            continue
        worst = max(worst, residual)
        n_ok += 1
    small = ChainModel(n_sites=3, J=1.0, coupling_range=None)
    H_small = build_dipolar(small) + build_field(small, dis.w[:3])
    taus = np.geomspace(2.0, 20.0, 6)
    resid = [simulate_finite_pulses(
        sixteen_pulse(SequenceParams(u=0.1, v=-0.05, c=0.2, tau0_us=t)),
        H_small).hamiltonian_residual for t in taus]
    slope = float(np.polyfit(np.log(taus), np.log(resid), 1)[0])
    ok = worst < 1e-12 and slope >= 0.9
    _report("sequence compiler round trip", ok,
            f"worst residual = {worst:.2e} over 50 targets, "
            f"residual slope vs tau0 = {slope:.2f}, {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 300.0


def test_preparation_equivalence():
    """Simulated random-Zeeman preparation at L = 8 with ideal decoupling
    matches sin(w tau/3) to 1e-10; the flipped-cycle control suppresses the
    magnitude to <= 10 percent."""
    t0 = time.time()
    model = ChainModel(n_sites=8, J=30.4, coupling_range=None)
    bath = BathModel(mode="gaussian", width_krad=7.0)
    dis = draw_disorder(bath, model, seed=17)
    sim = simulate_prep_sequence("rZ_z", model, dis, n_cycles=18, encode="ideal")
    ref = closed_form_rz(dis, sim.tau_ms)
    dev = float(np.max(np.abs(sim.coeffs - ref.coeffs)))
    ctrl = simulate_prep_sequence("rZ_z", model, dis, n_cycles=18,
                                  encode="ideal", with_pi_control=True)
    ratio = ctrl.magnitude() / sim.magnitude()
    # pulse-resolved control with the full Hamiltonian stays suppressed too
    simw = simulate_prep_sequence("rZ_z", model, dis, n_cycles=18,
                                  encode="wahuha", include_couplings=True)
    ctrlw = simulate_prep_sequence("rZ_z", model, dis, n_cycles=18,
                                   encode="wahuha", include_couplings=True,
                                   with_pi_control=True)
    ratio_w = ctrlw.magnitude() / simw.magnitude()
    ok = dev < 1e-10 and ratio <= 0.1 and ratio_w <= 0.1
    _report("preparation equivalence", ok,
            f"max coeff dev = {dev:.2e}, control ratios = {ratio:.2e} (ideal) "
            f"/ {ratio_w:.2e} (pulsed), {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 600.0


def test_spatial_correlation_formula():
    """Monte-Carlo over >= 1e5 bath configurations matches the analytic
    product formula within 3 sigma at 10 (j, k, tau) points; tau -> infinity
    gives E[alpha_j alpha_k] -> delta_jk / 2."""
    t0 = time.time()
    bath = BathModel(mode="geometric")
    L = 12
    points = [(5, 5, 0.2), (5, 5, 1.08), (5, 6, 0.3), (5, 6, 1.08),
              (5, 7, 0.45), (5, 7, 1.08), (4, 6, 0.7), (4, 8, 0.9),
              (6, 6, 0.6), (3, 4, 1.3)]
    worst_pull = 0.0
    for i, (j, k, tau) in enumerate(points):
        ana = spatial_correlation_analytic(bath, tau, j, k, L)
        mc, err = spatial_correlation_mc(bath, tau, j, k, L, 120_000, seed=10 + i)
        worst_pull = max(worst_pull, abs(mc - ana) / err)
    equal_site = spatial_correlation_analytic(bath, 200.0, 5, 5, L)
    cross_site = spatial_correlation_analytic(bath, 200.0, 5, 6, L)
    ok = (worst_pull < 3.0 and abs(equal_site - 0.5) < 1e-6
          and abs(cross_site) < 1e-6)
    _report("spatial correlation formula", ok,
            f"worst pull = {worst_pull:.2f} sigma over 10 points, "
            f"late-time limits ({equal_site:.6f}, {cross_site:.2e}), "
            f"{time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 120.0


def _hermitian_tensor_state(L, rng, l_values=(1, 2)):
    coeffs = {}
    op = OperatorSum.zero(L)
    for j in range(L):
        for l in l_values:
            a0 = complex(rng.standard_normal())
            coeffs[(l, 0, j)] = a0
            op = op + isto(IstoLabel(l, 0, j), L) * a0
            for m in range(1, l + 1):
                amp = complex(rng.standard_normal(), rng.standard_normal())
                coeffs[(l, m, j)] = amp
                coeffs[(l, -m, j)] = (-1) ** m * amp.conjugate()
                op = op + isto(IstoLabel(l, m, j), L) * amp
                op = op + isto(IstoLabel(l, -m, j), L) * coeffs[(l, -m, j)]
    gram = {}
    for l in l_values:
        for m in range(-l, l + 1):
            for mp in range(-l, l + 1):
                gram[(l, m, mp)] = sum(coeffs[(l, m, j)]
                                       * np.conj(coeffs[(l, mp, j)])
                                       for j in range(L)) / L
    return op, gram


def test_mqc_round_trip_and_simulated_states():
    """Tomography recovers a known PSD correlation to 1e-8; simulated ideal
    preparations give a dominant eigenvalue > 0.95 with the uniform-Z and
    (XX - YY) pair families as leading components."""
    t0 = time.time()
    L = 6
    rng = np.random.default_rng(55)
    op, gram = _hermitian_tensor_state(L, rng)
    spec = extract_correlation(synthesize_scan(op), l_max=2)
    worst = max(abs(spec.c.get(key, 0.0) * spec.total_weight - val.real)
                for key, val in gram.items())

    bath = BathModel(mode="gaussian", width_krad=7.0)
    model = ChainModel(n_sites=L, J=30.4)

    def averaged(kind, tau, base):
        acc = None
        for s in range(40):
            dis = draw_disorder(bath, model, seed=base + s)
            obs = (closed_form_rz(dis, tau) if kind == "rZ"
                   else closed_form_rdq(dis, tau, axis="z"))
            vals = synthesize_scan(obs).values
            acc = vals if acc is None else acc + vals
        return RotationScan(values=acc / 40, n_sites=L)

    spec_rz = extract_correlation(averaged("rZ", 1.08, 4000), l_max=3)
    zfam = OperatorSum(L, {((j, Z),): 1 / math.sqrt(L) for j in range(L)})
    rz_ok = (spec_rz.eigenvalues[0] > 0.95 and spec_rz.components[0].l == 1
             and abs(overlap(spec_rz.components[0].operator, zfam)) > 0.99)

    spec_dq = extract_correlation(averaged("rDQ", 0.96, 6000), l_max=3)
    fam = OperatorSum.zero(L)
    for j in range(L):
        lo, hi = sorted((j, (j + 1) % L))
        fam = fam + OperatorSum(L, {((lo, X), (hi, X)): 1.0,
                                    ((lo, Y), (hi, Y)): -1.0})
    dq_ok = (spec_dq.eigenvalues[0] > 0.95 and spec_dq.components[0].l == 2
             and abs(overlap(spec_dq.components[0].operator, fam)) > 0.99)

    ok = worst < 1e-8 and rz_ok and dq_ok
    _report("tomography round trip", ok,
            f"correlation recovery = {worst:.2e}, "
            f"lambda1 = {spec_rz.eigenvalues[0]:.4f} (Z family) / "
            f"{spec_dq.eigenvalues[0]:.4f} (pair family), {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 600.0


def test_engine_cross_validation():
    """Dense, Lanczos-stochastic, expm-stochastic and free-fermion methods
    agree on L = 10 fixtures within stated errors; energy is conserved and
    C(0) = 1/4 per site."""
    t0 = time.time()
    L = 10
    model = ChainModel(n_sites=L, J=1.0, coupling_range=1)
    H = build_tunable(model, HamiltonianParams(u=0.5))
    site = L // 2
    grid = np.linspace(0.0, 10.0, 21)
    A = spin(Z, site, L)
    dense = evolve_correlation(EvolutionJob(H=H, A=A, B=A, t_grid=grid,
                                            method="dense"))
    ff = free_fermion_autocorrelation(model, 0.5, site, grid)
    ff_dev = float(np.max(np.abs(dense.values - ff.values)))
    pulls = {}
    for method in ("krylov", "typicality"):
        est = evolve_correlation(EvolutionJob(H=H, A=A, B=A, t_grid=grid,
                                              method=method, n_vectors=16,
                                              seed=5))
        pulls[method] = float(np.max(np.abs(est.values - dense.values)
                                     / np.maximum(est.stderrs, 1e-14)))
    # energy conservation across methods on the interacting chain
    H2 = build_tunable(model, HamiltonianParams(u=-0.15, v=0.3))
    want = normalized_trace_product(H2, H2)
    cons_dev = {}
    for method, kw in (("dense", {}), ("krylov", {"n_vectors": 8}),
                       ("typicality", {"n_vectors": 8})):
        curve = evolve_correlation(EvolutionJob(H=H2, A=H2, B=H2,
                                                t_grid=np.linspace(0, 6, 7),
                                                method=method, seed=9, **kw))
        tol = 1e-9 if method == "dense" else 4 * max(curve.stderrs.max(), 1e-12)
        cons_dev[method] = float(np.max(np.abs(curve.values - want))) / tol
    ok = (dense.values[0] == pytest.approx(0.25) and ff_dev < 1e-10
          and all(p < 3.0 for p in pulls.values())
          and all(d < 1.0 for d in cons_dev.values()))
    _report("engine cross-validation", ok,
            f"t=0 value = {dense.values[0]:.4f}, free-fermion dev = {ff_dev:.1e}, "
            f"stochastic pulls = {pulls['krylov']:.2f}/{pulls['typicality']:.2f} sigma, "
            f"{time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 300.0


def test_exponent_fitter_and_diffusion_oracle():
    """Exact synthetic power laws recovered to 1e-10; the diffusion constant
    of a Monte-Carlo lattice walk is recovered within 5 percent."""
    t0 = time.time()
    t = np.linspace(1.0, 100.0, 400)
    worst = 0.0
    for z in (1.0, 2.0, 2.5):
        fit = fit_exponent(CorrelationCurve(t, t ** (-1.0 / z), np.zeros(400)),
                           2.0, 90.0)
        worst = max(worst, abs(fit.z - z))
    rng = np.random.default_rng(321)
    p_hop = 0.25
    n_walkers = 200_000
    marks = np.unique(np.geomspace(40, 400, 12).astype(int))
    pos = np.zeros(n_walkers, dtype=np.int64)
    p0 = []
    prev = 0
    for tm in marks:
        for _ in range(tm - prev):
            r = rng.random(n_walkers)
            pos += (r < p_hop).astype(np.int64) - (r > 1 - p_hop).astype(np.int64)
        prev = tm
        p0.append(np.mean(pos == 0))
    p0 = np.array(p0)
    err = np.sqrt(p0 * (1 - p0) / n_walkers)
    fit = fit_exponent(CorrelationCurve(marks.astype(float), p0, err),
                       float(marks[0]), float(marks[-1]), fix_z=2.0)
    d_hat = diffusion_constant(fit)
    rel = abs(d_hat - p_hop) / p_hop
    ok = worst < 1e-10 and rel < 0.05
    _report("exponent fitter and diffusion oracle", ok,
            f"power-law dev = {worst:.1e}, walk D = {d_hat:.4f} vs {p_hop} "
            f"({100*rel:.1f}%), {time.time()-t0:.0f}s")
    assert ok
    assert time.time() - t0 < 60.0
