import numpy as np
import pytest

from kinkscope.core.lattice import KinkState, LatticeSpec, build_hamiltonian, l1_distance
from kinkscope.core.spin_chain import (
    SpinChainSpec,
    bond_observables,
    build_spin_hamiltonian,
    full_evolve_dephasing,
    full_evolve_pure,
    ghz_decoherence_demo,
    kink_configuration,
    kink_start,
    z_signs,
)
from kinkscope.core.trajectories import TrajectoryPool, UnravelingPlan, Segment
from kinkscope.core.unitary import eigen_propagate
from kinkscope.utils.errors import ConfigError, TrajectoryConvergenceError


def effective_distributions(n_spins, g, wells, link, times):
    h = build_hamiltonian(LatticeSpec(n_spins, g, wells=wells))
    start = KinkState.localized(n_spins - 1, link)
    return [eigen_propagate(start, h, t).probabilities() for t in times]


def test_z_signs_and_kink_configuration():
    assert z_signs(2).tolist() == [[1, 1, -1, -1], [1, -1, 1, -1]]
    assert kink_configuration(4, 1) == 0b0011
    assert kink_configuration(4, 0) == 0b0111
    bonds = bond_observables(6)
    for link in range(5):
        s = kink_configuration(6, link)
        assert bonds[:, s].tolist() == [1.0 if b == link else 0.0 for b in range(5)]
    with pytest.raises(ConfigError):
        kink_configuration(4, 3)


def test_spin_hamiltonian_is_hermitian_with_weak_link():
    spec = SpinChainSpec.with_weak_links(5, 0.3, {2: 0.1})
    assert spec.bond_couplings == (1.0, 1.0, 0.9, 1.0)
    h = build_spin_hamiltonian(spec).toarray()
    assert np.allclose(h, h.conj().T)
    # kink energy on the weak bond sits 2w below a regular bond
    e = np.diag(h)
    assert e[kink_configuration(5, 2)] - e[kink_configuration(5, 1)] == pytest.approx(-0.2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_spins": 15, "g": 0.1},
        {"n_spins": 4, "g": -0.1},
        {"n_spins": 4, "g": 0.1, "bond_couplings": (1.0, 1.0)},
        {"n_spins": 4, "g": 0.1, "boundary_pinning": (2.0, -1.0)},
    ],
)
def test_invalid_chain_is_config_error(kwargs):
    with pytest.raises(ConfigError):
        SpinChainSpec(**kwargs)


def test_classical_chain_keeps_kink_in_place():
    times = np.linspace(0.0, 50.0, 6)
    trace = full_evolve_pure(SpinChainSpec(n_spins=6, g=0.0), 2, times)
    assert np.allclose(trace.distributions, np.eye(5)[2])
    assert trace.metadata["max_kink_number"] == pytest.approx(1.0)


def test_pure_evolution_conserves_energy():
    spec = SpinChainSpec.with_weak_links(8, 0.1, {3: 0.05})
    trace = full_evolve_pure(spec, 3, np.linspace(0.0, 100.0, 11))
    assert trace.metadata["energy_drift"] <= 1e-8 * abs(trace.metadata["energy"])
    assert trace.metadata["method"] == "dense"


def test_chain_matches_one_kink_model():
    n, g, wells, link = 10, 0.05, {4: 0.05}, 4
    times = np.linspace(0.0, 5.0 / g, 11)
    trace = full_evolve_pure(SpinChainSpec.with_weak_links(n, g, wells), link, times)
    for p, q in zip(trace.distributions, effective_distributions(n, g, wells, link, times)):
        assert l1_distance(p, q) <= 0.05


def test_chain_matches_one_kink_model_at_stronger_field():
    # a bare configuration would beat against its virtual pair admixture at this field
    n, g, wells, link = 10, 0.1, {4: 0.05}, 4
    times = np.linspace(0.0, 20.0 / g, 21)
    trace = full_evolve_pure(SpinChainSpec.with_weak_links(n, g, wells), link, times, dressed=True)
    assert trace.metadata["dressed"] is True
    assert len(trace.distributions) == 21
    for p, q in zip(trace.distributions, effective_distributions(n, g, wells, link, times)):
        assert l1_distance(p, q) <= 0.05


def test_dressed_start_stays_close_to_configuration():
    spec = SpinChainSpec.with_weak_links(8, 0.1, {3: 0.05})
    bare = kink_start(spec, 3)
    dressed = kink_start(spec, 3, dressed=True)
    assert np.linalg.norm(dressed) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.vdot(bare, dressed)) ** 2 >= 0.99
    # the admixture is a band eigen-combination, so it does not beat
    trace = full_evolve_pure(spec, 3, np.linspace(0.0, 200.0, 21), dressed=True)
    assert 1.0 <= trace.metadata["max_kink_number"] <= 1.02


def test_dressed_start_without_field_is_the_configuration():
    spec = SpinChainSpec.with_weak_links(6, 0.0, {2: 0.05})
    assert np.allclose(kink_start(spec, 2, dressed=True), kink_start(spec, 2), atol=1e-12)


def test_dressed_start_from_sparse_band_matches_dense_projection():
    spec = SpinChainSpec.with_weak_links(11, 0.1, {5: 0.05})
    dressed = kink_start(spec, 4, dressed=True)
    _, vecs = np.linalg.eigh(build_spin_hamiltonian(spec).toarray())
    band = vecs[:, : spec.n_links]
    expected = band @ (band.conj().T @ kink_start(spec, 4))
    expected /= np.linalg.norm(expected)
    assert abs(np.vdot(expected, dressed)) == pytest.approx(1.0, abs=1e-10)


def test_pinned_chain_stays_in_one_kink_sector():
    # a bare kink start oscillates up to about 1 + N g^2 / 2 extra kinks
    g = 0.05
    spec = SpinChainSpec.with_weak_links(12, g, {5: 0.05})
    trace = full_evolve_pure(spec, 5, np.linspace(0.0, 20.0 / g, 11))
    assert trace.metadata["method"] == "krylov"
    assert 1.0 <= trace.metadata["max_kink_number"] <= 1.05


# dephasing


def test_zero_dephasing_reproduces_pure_evolution():
    spec = SpinChainSpec.with_weak_links(5, 0.3, {2: 0.1})
    times = [0.0, 2.0, 5.0]
    pure = full_evolve_pure(spec, 1, times)
    mixed = full_evolve_dephasing(spec, 1, 0.0, times)
    assert np.allclose(pure.distributions, mixed.distributions, atol=1e-10)


def test_dephasing_without_field_freezes_kink():
    spec = SpinChainSpec(n_spins=5, g=0.0)
    trace = full_evolve_dephasing(spec, 1, 0.5, [0.0, 1.0, 3.0])
    assert np.allclose(trace.distributions, np.eye(4)[1], atol=1e-12)


def test_trajectories_converge_to_dense_solution():
    spec = SpinChainSpec.with_weak_links(6, 0.5, {2: 0.1})
    times = [0.5, 1.0, 2.0]
    dense = full_evolve_dephasing(spec, 2, 0.5, times, method="dense")
    traj = full_evolve_dephasing(spec, 2, 0.5, times, seed=11, method="trajectories", n_trajectories=2000)
    assert traj.metadata["n_trajectories"] == 2000
    stderr = traj.metadata["stderr"]
    for p, q, err in zip(traj.distributions, dense.distributions, stderr):
        assert l1_distance(p, q) <= 3.0 * err.sum()


def test_trajectory_mean_is_independent_of_worker_count():
    spec = SpinChainSpec.with_weak_links(5, 0.4, {1: 0.1})

    def run(workers):
        return full_evolve_dephasing(
            spec, 1, 0.5, [0.5, 1.0], seed=3, method="trajectories", n_trajectories=120, workers=workers, batch_size=16,
        )

    assert np.array_equal(run(1).distributions, run(4).distributions)


def test_dephasing_limits_and_step_bound():
    with pytest.raises(ConfigError, match="exceeds"):
        full_evolve_dephasing(SpinChainSpec(n_spins=6, g=0.1), 2, 0.5, [1.0], dt=0.1)
    with pytest.raises(ConfigError, match="dense"):
        full_evolve_dephasing(SpinChainSpec(n_spins=8, g=0.1), 2, 0.5, [1.0], method="dense")
    with pytest.raises(ConfigError, match="trajectory"):
        full_evolve_dephasing(SpinChainSpec(n_spins=13, g=0.1), 2, 0.5, [1.0], method="trajectories")
    with pytest.raises(ConfigError, match="method"):
        full_evolve_dephasing(SpinChainSpec(n_spins=4, g=0.1), 1, 0.5, [1.0], method="exact")


def test_stopped_pool_reports_non_convergence():
    psi0 = np.array([1.0, 0.0], dtype=complex)
    plan = UnravelingPlan(
        psi0=psi0,
        segments=(Segment(5, np.eye(2, dtype=complex), 0.1),),
        z_signs=np.array([[1.0, -1.0]]),
        observables=np.array([[1.0, 0.0]]),
    )

    def stop_on_start(msg):
        if msg.startswith("trajectories started"):
            pool.stop()

    pool = TrajectoryPool(workers=1, batch_size=2, on_status=stop_on_start)
    with pytest.raises(TrajectoryConvergenceError):
        pool.run(plan, 10, seed=0)


def test_pool_mean_and_batches():
    psi0 = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    plan = UnravelingPlan(
        psi0=psi0,
        segments=(Segment(1, np.eye(2, dtype=complex), 0.5),),
        z_signs=np.array([[1.0, -1.0]]),
        observables=np.array([[1.0, 0.0]]),
    )
    pool = TrajectoryPool(workers=2, batch_size=4)
    result = pool.run(plan, 16, seed=0)
    assert result.mean.shape == (1, 1)
    # sz jumps never change populations
    assert result.mean[0, 0] == pytest.approx(0.5)
    assert result.stderr[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert pool.jobs(10) and [j.count for j in pool.jobs(10)] == [4, 4, 2]


# GHZ coherence


def test_ghz_rate_is_gamma_times_n():
    decay = ghz_decoherence_demo(4, 0.3)
    assert decay.expected_rate == pytest.approx(1.2)
    assert decay.fitted_rate == pytest.approx(decay.expected_rate, rel=1e-6)
    assert np.allclose(decay.coherence, np.exp(-1.2 * decay.times), rtol=1e-9)


def test_ghz_decay_time_halves_when_chain_doubles():
    short = ghz_decoherence_demo(3, 0.2)
    long = ghz_decoherence_demo(6, 0.2)
    assert (1.0 / long.fitted_rate) == pytest.approx(0.5 / short.fitted_rate, rel=1e-6)


def test_ghz_without_dephasing_stays_coherent():
    decay = ghz_decoherence_demo(5, 0.0, times=[0.0, 1.0, 10.0])
    assert np.allclose(decay.coherence, 1.0)
    assert decay.fitted_rate == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigError):
        ghz_decoherence_demo(8, 0.1)


def test_pool_flags_standard_error_above_target():
    hadamard = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
    plan = UnravelingPlan(
        psi0=np.array([1.0, 0.0], dtype=complex),
        segments=(Segment(2, hadamard, 0.5),),
        z_signs=np.array([[1.0, -1.0]]),
        observables=np.array([[1.0, 0.0]]),
    )
    with pytest.raises(TrajectoryConvergenceError) as info:
        TrajectoryPool(workers=2, batch_size=4).run(plan, 16, seed=0, max_stderr=1e-3)
    assert info.value.context["achieved_stderr"] > 1e-3
