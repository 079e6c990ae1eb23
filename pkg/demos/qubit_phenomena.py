"""Projection, dephasing, thermalization and purification of a qubit under
rapid repeated collisions with ancilla qubits.

Each scenario is run twice: with the exact per-cycle channel iterated n times,
and with the order-one Bloch equation. The two agree to the truncation error.
"""

import numpy as np

from collision_kernel import opalg
from collision_kernel.cycle import averaged_channel, evolve_stroboscopic
from collision_kernel.model import SimulationParams
from collision_kernel.qubit import (bloch_coefficients, integrate_bloch, ss_ensemble,
                                    to_ensemble, xx_ensemble, zz_ensemble)

DT = 0.01
CYCLES = 20000
A0 = np.array([0.6, 0.3, -0.5])

SCENARIOS = [
    ("ZZ, unpolarized ancillas: projection onto the z axis", zz_ensemble(1.0, 0.5, 1.0, (0, 0, 0)), A0),
    ("XX, <sx> = 0.5: complete depolarization", xx_ensemble(1.0, 0.5, 1.0, (0.5, 0, 0)), A0),
    ("sigma.sigma, R = 0.5: thermalization to the ancilla purity", ss_ensemble(1.0, 0.5, 1.0, (0, 0, 0.5)), A0),
    ("sigma.sigma, R = 1: purification of a mixed start", ss_ensemble(1.0, 0.5, 1.0, (0, 0, 1.0)), np.zeros(3)),
]


def run(title, qe, a0):
    ch = averaged_channel(to_ensemble(qe), SimulationParams(DT))
    traj = evolve_stroboscopic(ch, opalg.bloch_to_density(a0), CYCLES)
    pts = traj.bloch()
    bl = integrate_bloch(bloch_coefficients(qe), DT, a0, CYCLES * DT, DT)
    print(title)
    print(f"{'t':>8} {'ax':>10} {'ay':>10} {'az':>10} {'|a|':>8}")
    for n in np.linspace(0, CYCLES, 6).astype(int):
        ax, ay, az = pts[n]
        print(f"{traj.times[n]:8.1f} {ax:10.6f} {ay:10.6f} {az:10.6f} {np.linalg.norm(pts[n]):8.5f}")
    dev = np.max(np.linalg.norm(bl.points - pts, axis=1))
    print(f"max distance to Bloch-equation solution: {dev:.2e}\n")


if __name__ == "__main__":
    for args in SCENARIOS:
        run(*args)
