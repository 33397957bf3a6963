"""Acceptance criteria; each test prints one PASS/FAIL line at its tolerance."""

import csv
import io

import numpy as np

from conftest import SCENARIOS, two_mode_kg
from pilotwave.dynamics import ManyState, ParticleState, integrate_many, integrate_single
from pilotwave.geometry import Minkowski, integrate_curved, integrate_many_curved
from pilotwave.harness import experiments as X
from pilotwave.harness import scenario as S
from pilotwave.harness.schema import load_scenario
from pilotwave.massfield import (ManyQuantumMassField, MassParams, QuantumMassField, first_order_comparison,
                                 mass_many, mass_single, tachyon_scan)
from pilotwave.wavefield import (Event, GaussianPacket, PlaneWaveSuperposition, ProductProvider, SpacetimeGrid,
                                 StaticMode, solve_klein_gordon, solve_schrodinger)


def _load(name):
    return load_scenario(SCENARIOS / f"{name}.json")


def test_ac1_positivity_versus_tachyons(acceptance):
    standing = X.scan_tachyon(_load("tachyon_standing_wave")).report
    grid = SpacetimeGrid(0.0, 2 * np.pi, 512, 0.0, 1.0, 1)
    plane = tachyon_scan(PlaneWaveSuperposition([(1.0, 0.3)]), grid, MassParams()).to_dict()
    ok = (standing["n_points"] >= 500 and standing["tachyon_count"] >= 1 and standing["min_mass_new"] > 0
          and plane["tachyon_count"] == 0 and plane["min_mass_new"] > 0)
    acceptance(1, "positivity vs tachyons", ok,
               f"standing wave: {standing['tachyon_count']} tachyonic points, min M_new "
               f"{standing['min_mass_new']:.3g}; plane wave: {plane['tachyon_count']} tachyonic, "
               f"min M_new {plane['min_mass_new']:.3g}")
    assert ok


def test_ac2_on_shell_conservation(acceptance):
    scn = _load("static_gaussian")
    params = S.mass_params(scn)
    provider = S.build_provider(scn)
    field = S.build_mass_field(provider, params)
    init = S.initial_states(scn, provider, params, S.build_metric(scn)).states[0]
    fine = integrate_single(init, field, params, 1e-3, 10_000)
    coarse = integrate_single(init, field, params, 2e-3, 5_000)
    c2 = params.c**2
    r_fine = fine.max_vv_residual / c2
    ratio = (coarse.max_vv_residual / c2) / r_fine
    ok = r_fine <= 1e-8 and 8.0 <= ratio <= 24.0 and fine.exit_reason is None
    acceptance(2, "on-shell conservation", ok,
               f"max |v.v - c^2|/c^2 = {r_fine:.3g} <= 1e-8 over 1e4 steps; halving ratio {ratio:.2f} in [8, 24]")
    assert ok


def test_ac3_conformal_equivalence(acceptance):
    rep = X.compare_conformal(_load("conformal_gaussian")).report
    ok = rep["deviation"] <= 1e-6 and rep["dtau"] == 1e-4 and rep["steps"] * rep["dtau"] >= 1.0 - 1e-12
    acceptance(3, "conformal equivalence", ok, f"path deviation {rep['deviation']:.3g} <= 1e-6 at dtau 1e-4")
    assert ok


def test_ac4_nonrelativistic_limit(acceptance):
    rep = X.compare_nonrel(_load("nonrel_gaussian")).report
    p = rep["exponent"]
    ok = rep["c_values"] == [10.0, 20.0, 40.0] and p is not None and 1.8 <= p <= 2.2
    devs = ", ".join(f"{r['deviation']:.3g}" for r in rep["rows"])
    acceptance(4, "non-relativistic limit", ok, f"p = {p:.4f} in [1.8, 2.2]; D(c) = {devs}")
    assert ok


def test_ac5_reductions(acceptance):
    params = MassParams()
    g = GaussianPacket(0.0, 1.0)
    s = ParticleState.from_coordinate_velocity(0.0, 0.5, 0.1)
    single = integrate_single(s, QuantumMassField(g, params), params, 1e-3, 1000)
    (many,) = integrate_many(ManyState([s]), ManyQuantumMassField(ProductProvider([g]), params), params,
                             1e-3, 1000)
    d_many = max(np.max(np.abs(getattr(many, k) - getattr(single, k))) for k in ("t", "x", "v0", "v1"))
    curved = integrate_curved(s, Minkowski(), QuantumMassField(g, params), params, 1e-3, 1000)
    pair = ManyState([ParticleState.from_coordinate_velocity(0.0, -0.3, 0.1),
                      ParticleState.from_coordinate_velocity(0.0, 0.3, -0.1)])
    mf2 = ManyQuantumMassField(ProductProvider([g, g]), params)
    flat2 = integrate_many(pair, mf2, params, 1e-3, 200)
    curved2 = integrate_many_curved(pair, Minkowski(), mf2, params, 1e-3, 200)
    d_curved = max(np.max(np.abs(curved.x - single.x)), np.max(np.abs(curved.t - single.t)),
                   max(np.max(np.abs(a.x - b.x)) for a, b in zip(flat2, curved2)))
    d_mu = 0.0
    for t, x in ((0.0, 0.0), (0.3, 0.8), (-1.0, 1.7)):
        e = Event(t, x)
        m1 = mass_single(g, e, params).value
        d_mu = max(d_mu, abs(mass_many(ProductProvider([g]), [e], params).value - m1) / m1)
    ok = d_many <= 1e-12 and d_curved <= 1e-12 and d_mu <= 1e-12
    acceptance(5, "reductions", ok, f"N=1 vs single {d_many:.3g}; flat curved vs flat {d_curved:.3g}; "
               f"mu=m mass {d_mu:.3g}; all <= 1e-12")
    assert ok


def test_ac6_taylor_regime(acceptance):
    params = MassParams()
    worst, ratios = 0.0, []
    for chi in (1e-3, -1e-3, 3e-4, -3e-4, 1e-5):
        # static profiles: box A / A = -A''/A is +kappa^2 for cos(kappa x) and -kappa^2 for exp(kappa x)
        kappa = float(np.sqrt(abs(chi)))
        profile = f"cos({kappa!r}*x)" if chi > 0 else f"exp({kappa!r}*x)"
        rep = first_order_comparison(StaticMode(profile), Event(0.0, 0.1), params)
        assert abs(rep["chi"] - chi) <= 1e-6 * abs(chi)
        worst = max(worst, abs(rep["diff_mass_first_order"]) / (params.m * rep["chi"] ** 2))
        ratios.append(rep["linear_term_ratio_std_over_new"])
    ok = worst <= 1.0
    acceptance(6, "Taylor regime", ok, f"max |M - m(1+chi)| / (m chi^2) = {worst:.3f} <= 1 for |chi| <= 1e-3; "
               f"linear-term ratio sqrt(M2_std) vs M = {np.mean(ratios):.4f} (factor-2 mismatch recorded, "
               f"not asserted)")
    assert ok


def test_ac7_field_solvers(acceptance):
    grid = SpacetimeGrid(-20.0, 20.0, 256, 0.0, 10.0, 10_000)
    packet = GaussianPacket(0.0, 1.0, 0.5, "schrodinger", spreading=True)
    cn = solve_schrodinger(packet.psi(0 * grid.x, grid.x), grid)
    drift = cn.diagnostics["max_norm_drift"]
    length, n = 2 * np.pi, 1024
    dx = length / n
    kg_grid = SpacetimeGrid(0.0, length, n, 0.0, length, int(round(length / (0.5 * dx))))
    ex = two_mode_kg()
    x = kg_grid.x
    dpsi = -1j * ex.omegas[0] * np.exp(1j * x) - 0.5j * ex.omegas[1] * np.exp(-2j * x)
    kg = solve_klein_gordon(ex.psi(0 * x, x), dpsi, kg_grid)
    err = max(np.max(np.abs(kg.samples[i] - ex.psi(np.full_like(x, kg_grid.t[i]), x)))
              for i in range(0, kg_grid.n_t + 1, 64))
    cfl = kg_grid.dt / dx
    ok = drift <= 1e-8 and err <= 1e-4 and abs(cfl - 0.5) < 1e-3
    acceptance(7, "field solvers", ok, f"CN norm drift {drift:.3g} <= 1e-8 over 1e4 steps; KG two-mode error "
               f"{err:.3g} <= 1e-4 at CFL {cfl:.3f}")
    assert ok


def test_ac8_equivariance(acceptance):
    rep = X.ensemble(_load("ensemble_free_gaussian")).report
    ks = [r["ks"] for r in rep["rows"]]
    ok = rep["n_samples"] == 10_000 and len(ks) >= 2 and all(r["within_band"] for r in rep["rows"])
    acceptance(8, "equivariance", ok, f"n = {rep['n_samples']}, max KS {max(ks):.4g} <= critical "
               f"{rep['critical_value']:.4g} at t = {[r['t'] for r in rep['rows']]}")
    assert ok


def test_ac9_exchange_symmetry(acceptance):
    out = X.run_scenario(_load("two_particle_mirror"))
    assert out.exit_code == 0
    paths = [np.array([float(r["x"]) for r in csv.DictReader(io.StringIO(out.artifacts[f"trajectory_{i}.csv"]))])
             for i in (0, 1)]
    dev = float(np.max(np.abs(paths[0] + paths[1])))
    ok = dev <= 1e-8 and len(paths[0]) == 1001
    acceptance(9, "exchange symmetry", ok, f"max |x1 + x2| = {dev:.3g} <= 1e-8 over {len(paths[0]) - 1} steps")
    assert ok
