"""Decoherence modes, their rates and the universal rate bound.

A qubit meets ancillas drawn from two types. The leading dissipator is split
into jump operators weighted by the spectrum of Q = diag(q) - q q^T, and every
rate is compared with dt E^2 (<dim A> - |q|^2) / hbar^2. The Caves-Milburn
kick model closes the demo: its dissipation prefactor is 1/(4 dt sigma).
"""

import numpy as np

from collision_kernel.cycle import averaged_channel
from collision_kernel.lindblad import decompose, rate_bound
from collision_kernel.model import SimulationParams
from collision_kernel.qubit import caves_milburn_scenario, double_commutator_prefactor
from collision_kernel.randomize import random_ensemble
from collision_kernel.series import generator_parts, liouvillian_exact


def lindblad_demo(dt=0.01):
    ens = random_ensemble(np.random.default_rng(3), dim_s=2, dims_a=(2, 3), n_specs=2)
    dec = decompose(ens, generator_parts(ens), dt)
    bound = rate_bound(ens, dt, dec)
    print("ancilla weights q:", np.round(dec.q, 4))
    print("Q spectrum gamma_m:", np.round(dec.gammas, 4))
    print(f"{len(dec.modes)} modes, reconstruction error {dec.reconstruction_error:.1e}")
    top = sorted(dec.rates, reverse=True)[:4]
    print("largest rates:", " ".join(f"{r:.3e}" for r in top))
    print(f"bound Gamma_max = {bound.gamma_max:.3e}, worst rate/bound = {bound.worst_ratio:.3f}\n")


def caves_milburn_demo(dt=1e-3, sigma=10.0):
    sc = caves_milburn_scenario(sigma, dt, dt)
    gen = liouvillian_exact(averaged_channel(sc.ensemble, SimulationParams(dt)))
    c, resid = double_commutator_prefactor(gen, sc.x_s)
    print(f"Caves-Milburn: measured prefactor {c:.6f}, predicted 1/(4 dt sigma) = {sc.prefactor:.6f}")
    print(f"fit residual outside -[X, [X, .]]: {resid:.1e}")


if __name__ == "__main__":
    lindblad_demo()
    caves_milburn_demo()
