import json
import math

import numpy as np
import pytest

from pilotwave.dynamics import (CSV_COLUMNS, ManyState, ParticleState, TrajectoryRecord, accel_many,
                                accel_nr, accel_single, guidance_velocity, integrate_many,
                                integrate_nr, integrate_nr_ensemble, integrate_single,
                                newtonian_time_factors, nonrel_limit_deviation, path_deviation,
                                rk4_run, guidance_velocity_nr)
from pilotwave.errors import (ComparisonError, ConfigurationError, InitializationError, NumericalError,
                              UndefinedPhaseError)
from pilotwave.massfield import (FunctionMassField, ManyQuantumMassField, MassParams, QuantumMassField,
                                 UniformMassField)
from pilotwave.wavefield import (CallableProvider, Event, GaussianPacket, GridField, PlaneWaveSuperposition,
                                 ProductProvider, SpacetimeGrid, StaticMode)

ETA = np.diag([1.0, -1.0])


# --------------------------------------------------------------------------- states


def test_state_constructors_are_on_shell():
    s = ParticleState.from_coordinate_velocity(0.0, 0.0, 0.6, c=2.0)
    assert s.vv() == pytest.approx(4.0, rel=1e-14)
    assert s.velocity[1] / s.velocity[0] == pytest.approx(0.3)
    r = ParticleState.at_rest(1.0, 2.0, c=3.0)
    np.testing.assert_array_equal(r.velocity, [3.0, 0.0])
    assert ParticleState.on_shell(0.0, 0.0, 0.75).velocity[0] == pytest.approx(1.25)


def test_superluminal_coordinate_speed_rejected():
    with pytest.raises(InitializationError):
        ParticleState.from_coordinate_velocity(0.0, 0.0, 1.0)


def test_many_state_needs_particles():
    with pytest.raises(ConfigurationError):
        ManyState([])


# --------------------------------------------------------------------------- single-particle force


def test_uniform_mass_gives_zero_acceleration(params):
    s = ParticleState.from_coordinate_velocity(0.0, 0.3, 0.4)
    np.testing.assert_array_equal(accel_single(s, UniformMassField(2.0), params), 0.0)


def test_rest_particle_feels_minus_gradient_of_log_mass(params, static_gaussian):
    # ln M = 1/2 - x^2/4 for the unit gaussian, so a^x = -(c^2/2) d ln M/dx = x/4
    for x in (-1.3, 0.4, 1.0):
        a = accel_single(ParticleState.at_rest(0.0, x), QuantumMassField(static_gaussian, params), params)
        assert a[0] == pytest.approx(0.0, abs=1e-12)
        assert a[1] == pytest.approx(x / 4.0, rel=1e-8)


def test_rest_acceleration_scales_with_c_squared():
    c = 3.0
    p = MassParams(c=c)
    field = FunctionMassField(lambda t, x: 1.0 + 0.1 * np.sin(x), c=c)
    a = accel_single(ParticleState.at_rest(0.0, 0.5, c=c), field, p)
    m = 1.0 + 0.1 * math.sin(0.5)
    assert a[1] == pytest.approx(-c**2 / (2 * m) * 0.1 * math.cos(0.5), rel=1e-9)


@pytest.mark.parametrize("u", [-0.7, 0.0, 0.2, 0.9])
def test_acceleration_is_orthogonal_to_velocity(params, static_gaussian, u):
    s = ParticleState.from_coordinate_velocity(0.0, 0.8, u)
    a = accel_single(s, QuantumMassField(static_gaussian, params), params)
    vn = np.linalg.norm(s.velocity)
    assert abs(s.velocity @ ETA @ a) <= 1e-12 * vn * max(np.linalg.norm(a), 1.0)


# --------------------------------------------------------------------------- single-particle integration


def test_plane_wave_gives_straight_line(params, plane_wave):
    s = ParticleState.from_coordinate_velocity(0.0, 0.1, 0.3)
    rec = integrate_single(s, QuantumMassField(plane_wave, params), params, 1e-2, 300)
    assert rec.max_vv_residual <= 1e-12
    np.testing.assert_allclose(rec.x, 0.1 + s.velocity[1] * rec.tau, atol=1e-12)
    np.testing.assert_allclose(rec.t, s.velocity[0] * rec.tau, atol=1e-12)
    assert rec.exit_reason is None
    assert rec.clamped_steps == 0


def test_step_halving_is_fourth_order(params, static_gaussian):
    f = QuantumMassField(static_gaussian, params)
    s = ParticleState.from_coordinate_velocity(0.0, 0.5, 0.1)
    r1 = integrate_single(s, f, params, 4e-2, 50)
    r2 = integrate_single(s, f, params, 2e-2, 100)
    ratio = r1.max_vv_residual / r2.max_vv_residual
    assert 8.0 <= ratio <= 24.0


def test_matches_fine_step_reference(params, static_gaussian):
    f = QuantumMassField(static_gaussian, params)
    s = ParticleState.from_coordinate_velocity(0.0, 0.5, 0.1)
    coarse = integrate_single(s, f, params, 2e-2, 50)
    fine = integrate_single(s, f, params, 2e-4, 5000)
    assert np.max(np.abs(coarse.x - fine.x[::100])) <= 1e-8
    assert np.max(np.abs(coarse.t - fine.t[::100])) <= 1e-8


def test_static_field_is_time_translation_invariant(params, static_gaussian):
    f = QuantumMassField(static_gaussian, params)
    a = integrate_single(ParticleState.from_coordinate_velocity(0.0, 0.4, 0.2), f, params, 1e-2, 100)
    b = integrate_single(ParticleState.from_coordinate_velocity(5.0, 0.4, 0.2), f, params, 1e-2, 100)
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    np.testing.assert_allclose(b.t - a.t, 5.0, atol=1e-12)


def test_renormalize_keeps_shell(params, static_gaussian):
    f = QuantumMassField(static_gaussian, params)
    s = ParticleState.from_coordinate_velocity(0.0, 0.5, 0.1)
    rec = integrate_single(s, f, params, 5e-2, 100, renormalize=True)
    # the particle runs down the hump; the residual is rounding relative to v0^2
    assert np.all(np.abs(rec.vv_residual) <= 1e-14 * rec.v0**2)
    assert np.max(rec.v0) > 10.0


def test_off_shell_initial_state_rejected(params, static_gaussian):
    bad = ParticleState(Event(0.0, 0.0), np.array([1.0, 0.5]))
    with pytest.raises(InitializationError):
        integrate_single(bad, QuantumMassField(static_gaussian, params), params, 1e-2, 10)


def test_domain_exit_truncates_record(params):
    grid = SpacetimeGrid(-5.0, 5.0, 128, 0.0, 1.0, 20)
    k = 2 * np.pi / 10
    w = 0.5 * k**2
    samples = np.exp(1j * (k * grid.x[None, :] - w * grid.t[:, None]))
    f = QuantumMassField(GridField(grid, samples), params)
    rec = integrate_single(ParticleState.at_rest(0.1, 0.0), f, params, 1e-2, 500)
    assert rec.exit_reason is not None and "domain" in rec.exit_reason
    assert 1 < len(rec) < 501
    assert rec.t[-1] <= 1.0


def test_rk4_guards():
    with pytest.raises(ConfigurationError):
        rk4_run(np.zeros(4), lambda y: (y, (1.0, False, False)), 0.0, 1)
    # v0 decreasing linearly: the worldline turns past-directed
    deriv = lambda y: (np.array([y[2], y[3], -1.0, 0.0]), (1.0, False, False))  # noqa: E731
    with pytest.raises(NumericalError) as exc:
        rk4_run(np.array([0.0, 0.0, 1.0, 0.0]), deriv, 0.1, 50)
    assert exc.value.last_good["step"] >= 9
    blow = lambda y: (np.array([1.0, 1.0, 0.0, np.inf]), (1.0, False, False))  # noqa: E731
    with pytest.raises(NumericalError):
        rk4_run(np.array([0.0, 0.0, 1.0, 0.0]), blow, 0.1, 5)


# --------------------------------------------------------------------------- records


def _record(params, static_gaussian):
    f = QuantumMassField(static_gaussian, params)
    return integrate_single(ParticleState.from_coordinate_velocity(0.0, 0.5, 0.1), f, params, 1e-2, 20)


def test_csv_header_and_roundtrip(tmp_path, params, static_gaussian):
    rec = _record(params, static_gaussian)
    path = tmp_path / "trajectory.csv"
    rec.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = TrajectoryRecord.from_csv(path)
    for k in ("step", "tau", "t", "x", "v0", "v1", "vv_residual", "mass"):
        np.testing.assert_array_equal(getattr(back, k), getattr(rec, k))
    assert back.flags == rec.flags


def test_json_roundtrip(tmp_path, params, static_gaussian):
    rec = _record(params, static_gaussian)
    path = tmp_path / "trajectory.json"
    rec.to_json(path)
    d = json.loads(path.read_text())
    np.testing.assert_array_equal(d["x"], rec.x)
    assert d["step"] == list(range(21))
    assert d["exit_reason"] is None
    assert len(d["energy_proxy"]) == 21


def test_energy_proxy_is_half_mass_times_norm(params, static_gaussian):
    rec = _record(params, static_gaussian)
    np.testing.assert_allclose(rec.energy_proxy, 0.5 * rec.mass[0] * (rec.v0**2 - rec.v1**2), rtol=1e-12)


# --------------------------------------------------------------------------- guidance


def test_guidance_de_broglie(params, plane_wave):
    v = guidance_velocity(plane_wave, Event(0.0, 0.2), params)
    omega = math.sqrt(1 + 0.3**2)
    assert v[1] / v[0] == pytest.approx(0.3 / omega, rel=1e-10)
    assert abs(v @ ETA @ v - 1.0) <= 1e-12


def test_guidance_real_profile_is_at_rest(params, static_gaussian):
    v = guidance_velocity(static_gaussian, Event(0.0, 0.7), params)
    # a static real profile carries only the time phase of the rest energy
    assert v[1] == pytest.approx(0.0, abs=1e-12)
    assert v[0] == pytest.approx(1.0, rel=1e-12)


def test_guidance_schrodinger_adds_rest_energy(params):
    pk = GaussianPacket(0.0, 1.0, 0.0, "schrodinger", 1.0)
    v = guidance_velocity(pk, Event(0.0, 0.3), params)
    np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-12)


def test_guidance_spacelike_gradient_raises(params):
    p = CallableProvider(lambda t, x: np.exp(1j * (2.0 * x - 0.5 * t)))
    with pytest.raises(InitializationError):
        guidance_velocity(p, Event(0.0, 0.0), params)


def test_guidance_at_node_raises(params, sine_mode):
    with pytest.raises(UndefinedPhaseError):
        guidance_velocity(sine_mode, Event(0.0, 0.0), params)


# --------------------------------------------------------------------------- Bohm-Newton baseline


def test_accel_nr_gaussian(params):
    pk = GaussianPacket(0.0, 1.0, 0.0, "schrodinger")
    # Q = 1/4 - x^2/8 for the unit gaussian
    assert accel_nr(1.0, 0.0, pk, params) == pytest.approx(0.25, rel=1e-8)
    assert accel_nr(-0.6, 3.0, pk, params) == pytest.approx(-0.15, rel=1e-8)


def test_accel_nr_plane_wave_vanishes(params):
    pw = PlaneWaveSuperposition([(1.0, 0.7)], "schrodinger")
    assert accel_nr(0.3, 0.7, pw, params) == pytest.approx(0.0, abs=1e-12)


def test_accel_nr_cosine_profile(params):
    # A = 1 + 0.3 cos x gives a = 0.15 sin x / (1 + 0.3 cos x)^2; accel_nr also cross-checks the log-mass form
    mode = StaticMode("1 + 0.3*cos(x)", 0.0, "schrodinger")
    for x in np.linspace(-2.0, 2.0, 9):
        exact = 0.15 * math.sin(x) / (1 + 0.3 * math.cos(x)) ** 2
        assert accel_nr(float(x), 0.0, mode, params, t=0.1 * x) == pytest.approx(exact, rel=1e-8, abs=1e-12)


def test_integrate_nr_plane_wave_uniform(params):
    pw = PlaneWaveSuperposition([(1.0, 0.7)], "schrodinger")
    u0 = guidance_velocity_nr(pw, Event(0.0, 0.0), params)
    assert u0 == pytest.approx(0.7, rel=1e-10)
    rec = integrate_nr(0.0, u0, pw, params, 1e-2, 100)
    np.testing.assert_allclose(rec.x, u0 * rec.t, atol=1e-12)


def test_integrate_nr_rest_at_centre(params):
    pk = GaussianPacket(0.0, 1.0, 0.0, "schrodinger")
    rec = integrate_nr(0.0, 0.0, pk, params, 1e-2, 100)
    np.testing.assert_allclose(rec.x, 0.0, atol=1e-14)
    assert np.all(np.isnan(rec.vv_residual))


def test_free_packet_follows_width(params):
    pk = GaussianPacket(0.0, 1.0, 0.5, "schrodinger", spreading=True)
    for x0 in (1.0, -0.7):
        u0 = guidance_velocity_nr(pk, Event(0.0, x0), params)
        rec = integrate_nr(x0, u0, pk, params, 1e-2, 200)
        exact = x0 * pk.sigma_at(rec.t) / 1.0 + 0.5 * rec.t
        assert np.max(np.abs(rec.x - exact)) <= 1e-4


def test_nr_paths_do_not_depend_on_c():
    pk = GaussianPacket(0.0, 1.0, 0.0, "schrodinger")
    a = integrate_nr(0.8, 0.1, pk, MassParams(c=10.0), 1e-2, 50)
    b = integrate_nr(0.8, 0.1, pk, MassParams(c=40.0), 1e-2, 50)
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-12)


def test_ensemble_independent_of_thread_count(monkeypatch, params):
    pk = GaussianPacket(0.0, 1.0, 0.0, "schrodinger", spreading=True)
    x0 = np.linspace(-2.0, 2.0, 50)
    u0 = np.zeros_like(x0)
    monkeypatch.setenv("PILOTWAVE_THREADS", "1")
    _, a = integrate_nr_ensemble(x0, u0, pk, params, 1e-2, 20, chunk=16)
    monkeypatch.setenv("PILOTWAVE_THREADS", "4")
    _, b = integrate_nr_ensemble(x0, u0, pk, params, 1e-2, 20, chunk=16)
    np.testing.assert_array_equal(a, b)
    monkeypatch.setenv("PILOTWAVE_THREADS", "many")
    with pytest.raises(ConfigurationError):
        integrate_nr_ensemble(x0, u0, pk, params, 1e-2, 2)


def test_nonrel_needs_three_c_values(params):
    with pytest.raises(ConfigurationError):
        nonrel_limit_deviation(lambda c: GaussianPacket(0.0, 1.0, 0.0, "schrodinger", c=c),
                               params, 0.5, 0.0, 0.1, [10.0, 20.0])


def test_nonrel_plane_wave_exact(params):
    res = nonrel_limit_deviation(lambda c: PlaneWaveSuperposition([(1.0, 0.5)], "schrodinger", c=c),
                                 params, 0.0, 0.5, 0.2, [10.0, 20.0, 40.0], dtau=1e-2)
    assert res["exact_match"]
    assert res["exponent"] is None


def test_newtonian_time_factors():
    np.testing.assert_allclose(newtonian_time_factors([1.0, 4.0], 2.5), [math.sqrt(0.4), math.sqrt(1.6)])


# --------------------------------------------------------------------------- path deviation


def _line(t, x):
    n = len(t)
    z = np.zeros(n)
    return TrajectoryRecord(np.arange(n), np.asarray(t), np.asarray(t), np.asarray(x), z, z, z, z, [""] * n)


def test_path_deviation():
    t = np.linspace(0.0, 1.0, 11)
    assert path_deviation(_line(t, t), _line(t, t)) == 0.0
    assert path_deviation(_line(t, t), _line(t, t + 0.25)) == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(ComparisonError):
        path_deviation(_line([0.0, 1.0, 0.5], [0, 0, 0]), _line(t, t))
    with pytest.raises(ComparisonError):
        path_deviation(_line(t, t), _line(t + 2.0, t))


# --------------------------------------------------------------------------- many particles


def _pair(xa, ua, xb, ub):
    return ManyState([ParticleState.from_coordinate_velocity(0.0, xa, ua),
                      ParticleState.from_coordinate_velocity(0.0, xb, ub)])


def test_single_factor_reduces_to_single_particle(params, static_gaussian):
    s = ParticleState.from_coordinate_velocity(0.0, 0.6, -0.2)
    a1 = accel_single(s, QuantumMassField(static_gaussian, params), params)
    an = accel_many(ManyState([s]), ManyQuantumMassField(ProductProvider([static_gaussian]), params), params)
    np.testing.assert_allclose(an[0], a1, atol=1e-12)
    r1 = integrate_single(s, QuantumMassField(static_gaussian, params), params, 1e-2, 100)
    (rn,) = integrate_many(ManyState([s]), ManyQuantumMassField(ProductProvider([static_gaussian]), params),
                           params, 1e-2, 100)
    for k in ("t", "x", "v0", "v1"):
        np.testing.assert_allclose(getattr(rn, k), getattr(r1, k), atol=1e-12)


def test_product_of_plane_waves_gives_straight_lines(params):
    pv = ProductProvider([PlaneWaveSuperposition([(1.0, 0.3)]), PlaneWaveSuperposition([(1.0, -0.5)])])
    st = _pair(-1.0, 0.2, 1.0, -0.4)
    np.testing.assert_allclose(accel_many(st, ManyQuantumMassField(pv, params), params), 0.0, atol=1e-12)
    recs = integrate_many(st, ManyQuantumMassField(pv, params), params, 1e-2, 100)
    for r, s in zip(recs, st.states):
        np.testing.assert_allclose(r.x, s.position.x + s.velocity[1] * r.tau, atol=1e-12)


def test_mirror_images_stay_mirrored(params, static_gaussian):
    pv = ProductProvider([static_gaussian, static_gaussian])
    recs = integrate_many(_pair(-0.3, 0.1, 0.3, -0.1), ManyQuantumMassField(pv, params), params, 1e-2, 100)
    assert np.max(np.abs(recs[0].x + recs[1].x)) <= 1e-8
    np.testing.assert_allclose(recs[0].t, recs[1].t, atol=1e-12)


def test_relabeling_permutes_outputs(params):
    pv = ProductProvider([GaussianPacket(0.5, 1.0), GaussianPacket(-0.2, 0.8)])
    swapped = ProductProvider([GaussianPacket(-0.2, 0.8), GaussianPacket(0.5, 1.0)])
    a = integrate_many(_pair(0.1, 0.2, -0.4, 0.0), ManyQuantumMassField(pv, params), params, 1e-2, 50)
    b = integrate_many(_pair(-0.4, 0.0, 0.1, 0.2), ManyQuantumMassField(swapped, params), params, 1e-2, 50)
    np.testing.assert_allclose(a[0].x, b[1].x, atol=1e-12)
    np.testing.assert_allclose(a[1].x, b[0].x, atol=1e-12)
    assert a[0].meta["particle"] == 0 and b[1].meta["particle"] == 1
