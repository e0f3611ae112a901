"""A BSDE driven by fBm through a tanh field, solved two ways, then smoothed.

Run: python3 demos/bsde_rough_drift.py
"""
import numpy as np

from youngbsde import (BsdeProblem, Driver, EtaSpec, TimeGrid, approximation_sequence,
                       functions, generate_eta, sample_brownian, solve_backward, solve_picard,
                       stability_in_eta)

grid = TimeGrid.uniform(1.0, 100)
ens = sample_brownian(grid, 5000, 1, seed=3)
eta = generate_eta(EtaSpec.fbm(0.75, seed=0, scale=0.5), grid)
prob = BsdeProblem(lambda x: np.sin(x[:, 0]), 1.0, eta, [functions.tanh(1.0, 0.5)],
                   Driver.smooth(0.3, 0.2, 0.1))

back = solve_backward(prob, ens)
pic = solve_picard(prob, ens, sweeps=6)
print(f"backward Y0 = {back.y0:.5f} +- {back.y0_stderr:.5f}")
print(f"picard   Y0 = {pic.y0:.5f} +- {pic.y0_stderr:.5f}")
print("picard sweep changes:", " ".join(f"{c:.2e}" for c in pic.contraction))

print("\nsmoothed drivers against the rough limit (common randomness):")
levels = approximation_sequence(eta, levels=4, width=0.125, ratio=4.0)
for row in stability_in_eta(prob, levels, 1.5, ens):
    print(f"  level {row.level}: d_1.5(eta_n, eta) = {row.qvar_distance:.4f}  "
          f"|Y0_n - Y0| = {row.y0_gap:.2e} (se {row.stderr:.1e})")
