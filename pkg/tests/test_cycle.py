import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from collision_kernel import opalg
from collision_kernel.cycle import (CHANNEL_CACHE, Channel, averaged_channel, cycle_unitary,
                                    evolve_stroboscopic, exact_midcycle, fingerprint,
                                    partial_unitaries, single_channel, snap_tau)
from collision_kernel.errors import ModelError
from collision_kernel.model import (InteractionEnsemble, InteractionSpec, InteractionTerm, Kick,
                                    SimulationParams, SwitchingFunction)
from collision_kernel.opalg import SIGMA_X, SIGMA_Y, SIGMA_Z
from collision_kernel.qubit import to_ensemble, zz_ensemble
from collision_kernel.randomize import random_density, random_ensemble, random_hermitian

I2 = np.eye(2)
ZZ = np.kron(SIGMA_Z, SIGMA_Z)
seeds = st.integers(0, 2 ** 32 - 1)


def ensemble(terms=(), h_s=None, h_a=None, rho_a=None):
    spec = InteractionSpec("A", 1.0, I2 / 2 if rho_a is None else rho_a,
                           np.zeros((2, 2)) if h_a is None else h_a, tuple(terms))
    return InteractionEnsemble(2, np.zeros((2, 2)) if h_s is None else h_s, (spec,))


def test_zero_hamiltonian_gives_identity():
    ens = ensemble()
    p = SimulationParams(0.1)
    assert_allclose(cycle_unitary(ens, 0, p), np.eye(4))
    assert_allclose(single_channel(ens, 0, p).super, np.eye(4), atol=1e-15)


@pytest.mark.parametrize("substeps", [1, 7, 64])
def test_constant_hamiltonian_exact(substeps, rng):
    h_s, h_a = random_hermitian(rng, 2), random_hermitian(rng, 2)
    v = random_hermitian(rng, 4)
    ens = ensemble([InteractionTerm(SwitchingFunction.constant(0.8), v)], h_s, h_a)
    dt = 0.3
    h = np.kron(h_s, I2) + np.kron(I2, h_a) + 0.8 * v
    u = cycle_unitary(ens, 0, SimulationParams(dt, substeps=substeps))
    assert_allclose(u, opalg.mat_exp(-1j * dt * h), atol=1e-12)


def test_commuting_family_closed_form():
    ens = ensemble([InteractionTerm(SwitchingFunction.polynomial([0, 1]), ZZ)])
    u = cycle_unitary(ens, 0, SimulationParams(1.0, substeps=16))
    assert_allclose(u, opalg.mat_exp(-0.5j * ZZ), atol=1e-14)


def test_cycle_unitary_is_unitary(rng):
    ens = random_ensemble(rng, scale=3.0)
    for s in ens.specs:
        u = cycle_unitary(ens, s, SimulationParams(0.2))
        assert np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= 1e-10


def test_kick_is_applied_last():
    g = np.kron(SIGMA_X, SIGMA_Y)
    spec = InteractionSpec("K", 1.0, I2 / 2, 0.4 * SIGMA_Z, (), Kick(g, 0.3))
    ens = InteractionEnsemble(2, 0.7 * SIGMA_X, (spec,))
    dt = 0.5
    free = opalg.mat_exp(-1j * dt * (np.kron(0.7 * SIGMA_X, I2) + np.kron(I2, 0.4 * SIGMA_Z)))
    kick = opalg.mat_exp(-1j * 0.3 * g)
    assert_allclose(cycle_unitary(ens, 0, SimulationParams(dt)), kick @ free, atol=1e-13)


def test_zz_dephasing_suppresses_coherence():
    ens = ensemble([InteractionTerm(SwitchingFunction.constant(), ZZ)])
    dt = 0.6
    rho = opalg.bloch_to_density([1, 0, 0])
    out = single_channel(ens, 0, SimulationParams(dt)).apply(rho)
    # 4x4 oracle: Tr_A over the two ancilla eigenstates with weight 1/2
    u = opalg.mat_exp(-1j * dt * ZZ)
    oracle = opalg.partial_trace(u @ np.kron(rho, I2 / 2) @ u.conj().T, [2, 2], keep=0)
    assert_allclose(out, oracle, atol=1e-14)
    assert abs(out[0, 1]) == pytest.approx(0.5 * abs(np.cos(2 * dt)), abs=1e-14)
    assert abs(out[0, 1]) < abs(rho[0, 1])


def test_zz_keeps_diagonal_states_diagonal(rng):
    ens = ensemble([InteractionTerm(SwitchingFunction.constant(1.3), ZZ)], 0.4 * SIGMA_Z,
                   rho_a=random_density(rng, 2))
    out = single_channel(ens, 0, SimulationParams(0.7)).apply(np.diag([0.3, 0.7]))
    assert_allclose(out, np.diag([0.3, 0.7]), atol=1e-14)


def test_averaged_single_spec_equals_single_channel(rng):
    ens = random_ensemble(rng, n_specs=1)
    p = SimulationParams(0.05)
    assert_array_equal(averaged_channel(ens, p, use_cache=False).super,
                       single_channel(ens, 0, p).super)


def test_identical_specs_mixture(rng):
    ens1 = random_ensemble(rng, n_specs=1)
    s = ens1.specs[0]
    twins = tuple(InteractionSpec(lbl, p, s.rho_a, s.h_ancilla, s.terms)
                  for lbl, p in (("a", 0.3), ("b", 0.7)))
    ens2 = InteractionEnsemble(ens1.dim_s, ens1.h_system, twins)
    p = SimulationParams(0.05)
    assert_allclose(averaged_channel(ens2, p).super, single_channel(ens1, 0, p).super, atol=1e-14)


def test_mixture_of_identity_and_pi_pulse():
    # spec b: H_SA = (pi/2) sigma_x (x) 1 over dt = 1 flips the system
    pulse = InteractionTerm(SwitchingFunction.constant(np.pi / 2), np.kron(SIGMA_X, I2))
    sa = InteractionSpec("a", 0.25, I2 / 2, np.zeros((2, 2)))
    sb = InteractionSpec("b", 0.75, I2 / 2, np.zeros((2, 2)), (pulse,))
    ens = InteractionEnsemble(2, np.zeros((2, 2)), (sa, sb))
    ch = averaged_channel(ens, SimulationParams(1.0))
    # hand-built: 0.25 * identity + 0.75 * (rho -> X rho X), X real symmetric
    oracle = 0.25 * np.eye(4) + 0.75 * np.kron(SIGMA_X, SIGMA_X)
    assert_allclose(ch.super, oracle, atol=1e-14)


@settings(max_examples=200)
@given(seeds)
def test_random_channels_are_cptp(seed):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(rng, dims_a=(2, 3), scale=2.0)
    ch = averaged_channel(ens, SimulationParams(float(rng.uniform(0.01, 0.5)), substeps=16),
                          use_cache=False)
    assert ch.min_choi_eigenvalue() >= -1e-9
    assert ch.trace_preservation_error() <= 1e-10
    assert ch.cptp_violations() == []


def test_integrator_second_order(rng):
    ens = random_ensemble(rng, n_specs=1, scale=2.0, max_degree=3)
    # pin a genuinely time-dependent, non-commuting pair of terms
    s = ens.specs[0]
    terms = (InteractionTerm(SwitchingFunction.polynomial([0, 0, 3]), s.terms[0].op),
             InteractionTerm(SwitchingFunction.polynomial([1, -1]), s.terms[1].op))
    ens = InteractionEnsemble(ens.dim_s, ens.h_system,
                              (InteractionSpec("A", 1.0, s.rho_a, s.h_ancilla, terms),))
    us = {n: cycle_unitary(ens, 0, SimulationParams(0.5, substeps=n)) for n in (16, 32, 64, 128)}
    diffs = [np.linalg.norm(us[2 * n] - us[n], 2) for n in (16, 32, 64)]
    for a, b in zip(diffs, diffs[1:]):
        assert a / b >= 3.5


def test_evolve_identity_channel_constant():
    ch = Channel(np.eye(4, dtype=complex), 2, 0.1)
    rho = opalg.bloch_to_density([0.2, 0.1, -0.3])
    traj = evolve_stroboscopic(ch, rho, 5)
    assert len(traj) == 6
    for s in traj.states:
        assert_array_equal(s, rho)
    assert_allclose(traj.times, 0.1 * np.arange(6))


def test_evolve_zero_steps():
    ch = Channel(np.eye(4, dtype=complex), 2, 0.1)
    traj = evolve_stroboscopic(ch, I2 / 2, 0)
    assert len(traj) == 1


def test_evolve_rejects_bad_input():
    ch = Channel(np.eye(4, dtype=complex), 2, 0.1)
    with pytest.raises(ModelError):
        evolve_stroboscopic(ch, np.eye(3) / 3, 2)
    with pytest.raises(ModelError):
        evolve_stroboscopic(ch, I2 / 2, -1)


def test_zz_trace_preserved_over_1000_cycles():
    ens = to_ensemble(zz_ensemble(1.0, 0.5, 1.0, (0, 0, 0.3)))
    traj = evolve_stroboscopic(averaged_channel(ens, SimulationParams(0.01)),
                               opalg.bloch_to_density([1, 0, 0]), 1000)
    assert max(abs(np.trace(s) - 1) for s in traj.states) <= 1e-11


def test_semigroup_consistency_exact(rng):
    ens = random_ensemble(rng)
    ch = averaged_channel(ens, SimulationParams(0.05))
    rho = random_density(rng, ens.dim_s)
    whole = evolve_stroboscopic(ch, rho, 7)
    first = evolve_stroboscopic(ch, rho, 3)
    second = evolve_stroboscopic(ch, first.states[-1], 4)
    assert_array_equal(whole.states[-1], second.states[-1])


def test_midcycle_zero_hamiltonian(rng):
    ens = ensemble()
    rho = random_density(rng, 2)
    for tau in (0.01, 0.05, 0.09):
        out, _ = exact_midcycle(ens, 0, rho, tau, SimulationParams(0.1))
        assert_allclose(out, rho, atol=1e-15)


def test_midcycle_endpoint_matches_channel(rng):
    ens = random_ensemble(rng, n_specs=1)
    p = SimulationParams(0.1, substeps=32)
    rho = random_density(rng, ens.dim_s)
    out, snapped = exact_midcycle(ens, 0, rho, 0.1, p)
    assert snapped == 0.1
    assert_allclose(out, single_channel(ens, 0, p).apply(rho), atol=1e-13)


def test_midcycle_zz_half_cycle_dense_oracle():
    ens = ensemble([InteractionTerm(SwitchingFunction.polynomial([0, 1]), ZZ)], 0.9 * SIGMA_Z,
                   0.4 * SIGMA_X, opalg.bloch_to_density([0, 0, 0.5]))
    p = SimulationParams(0.2, substeps=8)
    rho = opalg.bloch_to_density([0.6, 0.2, 0.1])
    out, snapped = exact_midcycle(ens, 0, rho, 0.1, p)
    assert snapped == pytest.approx(0.1)
    h0 = np.kron(0.9 * SIGMA_Z, I2) + np.kron(I2, 0.4 * SIGMA_X)
    u = np.eye(4)
    for j in range(4):  # the first four of eight midpoint sub-steps
        xi = (j + 0.5) / 8
        u = opalg.mat_exp(-1j * 0.025 * (h0 + xi * ZZ)) @ u
    joint = u @ np.kron(rho, ens.specs[0].rho_a) @ u.conj().T
    assert_allclose(out, opalg.partial_trace(joint, [2, 2], keep=0), atol=1e-14)


def test_snap_tau():
    p = SimulationParams(1.0, substeps=4)
    assert snap_tau(0.3, p) == (1, 0.25)
    assert snap_tau(1.0, p) == (4, 1.0)
    with pytest.raises(ModelError):
        snap_tau(1.2, p)


def test_partial_unitaries_end_equals_cycle(rng):
    ens = random_ensemble(rng, n_specs=1)
    p = SimulationParams(0.1, substeps=8)
    us = partial_unitaries(ens, 0, p)
    assert len(us) == 9
    assert_array_equal(us[-1], cycle_unitary(ens, 0, p))


def test_channel_cache_hits_and_keys(rng):
    ens = random_ensemble(rng)
    p = SimulationParams(0.05)
    a = averaged_channel(ens, p)
    assert averaged_channel(ens, p) is a
    assert fingerprint(ens, p) != fingerprint(ens, SimulationParams(0.05, substeps=32))
    assert fingerprint(ens, p) == fingerprint(ens, SimulationParams(0.05, n_cycles=99))


def test_channel_cache_thread_safe(rng):
    ens = random_ensemble(rng)
    CHANNEL_CACHE.clear()
    results = []

    def work(dt):
        results.append(averaged_channel(ens, SimulationParams(dt)).super)

    threads = [threading.Thread(target=work, args=(0.01 * (1 + i % 3),)) for i in range(9)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ref = {dt: averaged_channel(ens, SimulationParams(dt), use_cache=False).super
           for dt in (0.01, 0.02, 0.03)}
    assert len(results) == 9
    assert all(any(np.array_equal(r, v) for v in ref.values()) for r in results)
