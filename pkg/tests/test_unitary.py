import math

import numpy as np
import pytest
from scipy.special import jv

from kinkscope.core.analysis import fringe_spacing, mirror_residual, outer_fringe_mass
from kinkscope.core.bound_states import (
    beat_frequency,
    bound_state_lattice,
    double_well_bound_states,
    inverse_decay_length,
    single_well_bound_state,
)
from kinkscope.core.lattice import (
    Boundary,
    KinkState,
    LatticeSpec,
    ballistic_links,
    build_hamiltonian,
    l1_distance,
    normalize,
)
from kinkscope.core.unitary import (
    RampKind,
    RampSchedule,
    analytic_fringes,
    bessel_kernel,
    bessel_free_propagate,
    eigen_propagate,
    fringe_profile,
    fringe_spacing_theory,
    fringes_for_spec,
    prepare_bilocal_tunneling,
    prepare_psi_plus,
    run_release,
    second_peak_ratio,
    sudden_switch_on,
)
from kinkscope.utils.errors import ConfigError, NonAdiabaticPreparation


def halves(p):
    """Left and right weights; a middle link is shared equally."""
    p = np.asarray(p)
    m = p.size
    if m % 2 == 0:
        return p[: m // 2].sum(), p[m // 2:].sum()
    mid = m // 2
    return p[:mid].sum() + 0.5 * p[mid], p[mid + 1:].sum() + 0.5 * p[mid]


def free_lattice(n_links, g=1.0):
    return LatticeSpec(n_sites=n_links + 1, g=g, boundary=Boundary.EFFECTIVELY_INFINITE)


# ramps


@pytest.mark.parametrize("kind", [RampKind.LINEAR, RampKind.SMOOTH])
def test_ramp_multiplier_is_monotone(kind):
    ramp = RampSchedule(kind, 10.0)
    s = [ramp.multiplier(t) for t in np.linspace(0.0, 10.0, 101)]
    assert s[0] == 1.0
    assert s[-1] == 0.0
    assert all(a >= b for a, b in zip(s, s[1:]))


def test_ramp_needs_duration():
    with pytest.raises(ConfigError):
        RampSchedule(RampKind.LINEAR, 0.0)
    assert RampSchedule().is_sudden


# eigen propagation


def test_eigen_propagate_zero_step_is_identity():
    spec = LatticeSpec(21, 1.0, wells={10: 0.2})
    psi = KinkState(normalize(np.arange(20) + 1j))
    out = eigen_propagate(psi, build_hamiltonian(spec), 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_ground_state_is_stationary():
    spec = bound_state_lattice(0.15, 1.0, 10)
    psi = prepare_psi_plus(spec)
    h = build_hamiltonian(spec)
    out = eigen_propagate(psi, h, 123.4)
    assert np.max(np.abs(out.probabilities() - psi.probabilities())) <= 1e-10
    assert abs(out.norm - 1.0) <= 1e-12


def test_beat_reaches_equal_populations():
    # odd separation: no link on the mirror plane
    spec = bound_state_lattice(0.15, 1.0, 11)
    sol = double_well_bound_states(spec)
    omega = 0.5 * (sol.exact_energies[1] - sol.exact_energies[0])
    psi = KinkState(normalize(sol.exact_plus + sol.exact_minus))
    out = eigen_propagate(psi, build_hamiltonian(spec), 0.25 * math.pi / omega)
    left, right = halves(out.probabilities())
    assert left == pytest.approx(0.5, abs=1e-6)
    assert right == pytest.approx(0.5, abs=1e-6)


def test_energy_is_conserved():
    spec = LatticeSpec(101, 1.0, wells={40: 0.3, 60: 0.1})
    h = build_hamiltonian(spec)
    psi = KinkState.localized(100, 45)
    e0 = np.real(np.vdot(psi.amplitudes, h @ psi.amplitudes))
    for t in (1.0, 10.0, 100.0):
        a = eigen_propagate(psi, h, t).amplitudes
        assert abs(np.real(np.vdot(a, h @ a)) - e0) <= 1e-8 * 4.0


# Bessel kernel


def test_bessel_zero_time_is_identity():
    spec = free_lattice(201)
    psi = KinkState.localized(201, 100)
    assert np.array_equal(bessel_free_propagate(psi, spec, 0.0).amplitudes, psi.amplitudes)


def test_bessel_delta_kink_spreads_as_bessel_squared():
    spec = free_lattice(401)
    out = bessel_free_propagate(KinkState.localized(401, 200), spec, 30.0)
    d = np.arange(401) - 200
    assert np.allclose(out.probabilities(), jv(d, 60.0) ** 2, atol=1e-12)


@pytest.mark.parametrize("gt", [1.0, 20.0, 300.0, 1000.0])
def test_bessel_kernel_keeps_unit_norm(gt):
    k = bessel_kernel(1.0, gt, 100000)
    assert abs(np.sum(np.abs(k) ** 2) - 1.0) <= 1e-10


def test_bessel_matches_eigen_propagation():
    spec = free_lattice(1001)
    psi = KinkState.localized(1001, 500)
    a = bessel_free_propagate(psi, spec, 50.0)
    b = eigen_propagate(psi, build_hamiltonian(spec), 50.0)
    assert l1_distance(a.probabilities(), b.probabilities()) <= 1e-6


def test_bessel_rejects_wells_and_hard_walls():
    psi = KinkState.localized(20, 10)
    with pytest.raises(ConfigError, match="no wells"):
        bessel_free_propagate(psi, LatticeSpec(21, 1.0, wells={3: 0.1}, boundary=Boundary.EFFECTIVELY_INFINITE), 1.0)
    with pytest.raises(ConfigError, match="effectively-infinite"):
        bessel_free_propagate(psi, LatticeSpec(21, 1.0), 1.0)


def test_wide_packet_smooths_bessel_oscillation():
    m = 1201
    spec = free_lattice(m)
    wide = KinkState(normalize(np.exp(-0.15 * np.abs(np.arange(m) - 600))))
    narrow = KinkState.localized(m, 600)

    def jagged(state):
        p = bessel_free_propagate(state, spec, 100.0).probabilities()
        return np.mean(np.abs(np.diff(p))) / p.max()

    assert jagged(wide) * 3.0 <= jagged(narrow)


# preparation


def test_psi_plus_is_symmetric_eigenvector():
    spec = bound_state_lattice(0.15, 1.0, 50)
    psi = prepare_psi_plus(spec)
    a = np.real(psi.amplitudes)
    h = build_hamiltonian(spec)
    e = a @ h @ a
    assert np.max(np.abs(h @ a - e * a)) <= 1e-9
    p = psi.probabilities()
    assert mirror_residual(p) <= 1e-10
    left, right = halves(p)
    assert left == pytest.approx(0.5, abs=1e-6)
    assert right == pytest.approx(0.5, abs=1e-6)


def test_dynamical_preparation_reaches_ground_state():
    spec = bound_state_lattice(0.5, 1.0, 4)
    exact = prepare_psi_plus(spec)
    dyn = prepare_psi_plus(spec, dynamical=True)
    assert abs(np.vdot(exact.amplitudes, dyn.amplitudes)) ** 2 >= 0.99


def test_fast_preparation_is_flagged():
    spec = bound_state_lattice(0.5, 1.0, 4)
    with pytest.raises(NonAdiabaticPreparation) as info:
        prepare_psi_plus(spec, dynamical=True, duration=1.0)
    assert info.value.fidelity < 0.99


def test_dynamical_preparation_needs_even_separation():
    with pytest.raises(ConfigError, match="even"):
        prepare_psi_plus(bound_state_lattice(0.5, 1.0, 5), dynamical=True)


def test_bilocal_state_tunnels():
    w, g, L = 0.25, 1.0, 31
    spec = bound_state_lattice(w, g, L)
    omega = beat_frequency(w, g, L)
    bound = 2.0 * math.exp(-inverse_decay_length(w, g) * L)

    _, right = halves(prepare_bilocal_tunneling(spec, 0.0).probabilities())
    assert right <= bound

    left, right = halves(prepare_bilocal_tunneling(spec, 0.25 * math.pi / omega).probabilities())
    assert left == pytest.approx(0.5, abs=1e-3)
    assert right == pytest.approx(0.5, abs=1e-3)

    left, _ = halves(prepare_bilocal_tunneling(spec, 0.5 * math.pi / omega).probabilities())
    assert left <= bound


def test_sudden_switch_on_follows_two_level_beat():
    w, g, L = 0.25, 1.0, 15
    spec = bound_state_lattice(w, g, L)
    t = 0.25 * math.pi / beat_frequency(w, g, L)
    left, _ = halves(sudden_switch_on(spec, t).probabilities())
    # the single-well state also feeds the continuum, so only the beat phase is compared
    assert left == pytest.approx(0.5, abs=0.05)


# fringe oracle


def test_analytic_fringes_shape():
    n0, L, gamma0, g, t, m = 1000, 100, 0.149438, 1.0, 1000.0, 2101
    p = analytic_fringes(n0, L, gamma0, g, t, m)
    centre = n0 + L // 2
    assert p.sum() == pytest.approx(1.0)
    assert int(np.argmax(p)) == centre
    x_zero = 2.0 * math.pi * g * t / L
    # cosine zero falls between links; the discrete minimum sits next to it
    near = int(round(centre + x_zero))
    assert p[near] <= 1e-4 * p[centre]
    assert fringe_spacing_theory(g, t, L) == pytest.approx(125.66, abs=0.01)


def test_phase_i_shifts_fringes_by_quarter_period():
    x = np.array([0.0])
    assert fringe_profile(x, 100, 0.15, 1.0, 1000.0, "1")[0] == pytest.approx(2.0)
    assert fringe_profile(x, 100, 0.15, 1.0, 1000.0, "i")[0] == pytest.approx(1.0)


def test_second_peak_ratio():
    assert second_peak_ratio(100, 0.149438) == pytest.approx(0.722, abs=1e-3)


# release


def double_slit(L, t=1000.0):
    m = ballistic_links(1.0, t, L)
    spec = LatticeSpec.centered(m, 1.0, 0.15, separation=L, boundary=Boundary.EFFECTIVELY_INFINITE)
    trace = run_release(spec, prepare_psi_plus(spec), RampSchedule(), [0.0, t], engine="bessel")
    return spec, trace


def test_double_slit_matches_fringe_formula():
    L, t = 100, 1000.0
    spec, trace = double_slit(L, t)
    p = trace.final
    assert abs(p.sum() - 1.0) <= 1e-8
    assert l1_distance(p, fringes_for_spec(spec, t)) <= 0.05

    gamma0 = inverse_decay_length(0.15, 1.0)
    centre = (spec.n_links - 1) / 2.0
    half = 2.0 * gamma0 * t
    spacing = fringe_spacing(p, (centre - half, centre + half))
    assert spacing == pytest.approx(fringe_spacing_theory(1.0, t, L), rel=0.03)


def test_shorter_separation_loses_outer_fringes():
    def outer(L):
        spec, trace = double_slit(L)
        centre = (spec.n_links - 1) / 2.0
        return outer_fringe_mass(trace.final, (centre - 900.0, centre + 900.0))

    assert outer(50) < outer(100)


def test_self_interference_stays_mirror_symmetric():
    spec = LatticeSpec.centered(201, 1.0, 0.25)
    initial = KinkState(single_well_bound_state(spec).vector)
    trace = run_release(spec, initial, RampSchedule(), np.linspace(0.0, 300.0, 31))
    assert all(mirror_residual(p) <= 1e-8 for p in trace.distributions)
    assert np.max(np.abs(trace.distributions.sum(axis=1) - 1.0)) <= 1e-8


def test_ramped_release_keeps_norm():
    spec = LatticeSpec.centered(301, 1.0, 0.25, boundary=Boundary.EFFECTIVELY_INFINITE)
    initial = KinkState(single_well_bound_state(spec).vector)
    trace = run_release(spec, initial, RampSchedule(RampKind.LINEAR, 5.0), [0.0, 2.5, 5.0, 20.0])
    assert trace.times.tolist() == [0.0, 2.5, 5.0, 20.0]
    assert np.max(np.abs(trace.distributions.sum(axis=1) - 1.0)) <= 1e-8
    assert trace.metadata["ramp"] == "linear"


def test_release_rejects_unknown_engine():
    spec = LatticeSpec.centered(21, 1.0, 0.25)
    with pytest.raises(ConfigError, match="engine"):
        run_release(spec, KinkState.localized(20, 10), RampSchedule(), [1.0], engine="rk4")
