"""How the effective Liouvillian (1/dt) log(channel) approaches its small-dt series.

For a random two-ancilla-type model the exact generator is compared with the
truncations L0 and L0 + dt L1. The errors fall as dt and dt^2.
"""

import numpy as np

from collision_kernel import opalg
from collision_kernel.cycle import averaged_channel
from collision_kernel.diagnostics import loglog_fit
from collision_kernel.model import SimulationParams
from collision_kernel.randomize import random_ensemble
from collision_kernel.series import channel_coefficients, liouvillian_exact, liouvillian_series


def main():
    ens = random_ensemble(np.random.default_rng(7), dim_s=2, n_specs=2, max_degree=2)
    ser = liouvillian_series(channel_coefficients(ens, 3), 2)
    dts = 10 ** np.linspace(-1, -3, 7)
    print(f"{'dt':>10} {'|L-L0|':>12} {'|L-L0-dtL1|':>14} {'|L-..-dt^2L2|':>15}")
    errs = []
    for dt in dts:
        gen = liouvillian_exact(averaged_channel(ens, SimulationParams(dt, substeps=4096)))
        row = [opalg.spectral_norm(gen - ser.truncated(dt, m)) for m in range(3)]
        errs.append(row)
        print(f"{dt:10.2e} {row[0]:12.3e} {row[1]:14.3e} {row[2]:15.3e}")
    errs = np.array(errs)
    for m in range(2):
        slope, r2 = loglog_fit(dts, errs[:, m])
        print(f"order {m} truncation: fitted slope {slope:.3f} (R^2 = {r2:.6f})")


if __name__ == "__main__":
    main()
