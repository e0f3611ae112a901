"""Exact p-variation of a zigzag and of fBm, then a Young integral against fBm.

Run: python3 demos/variation_and_young.py
"""
import numpy as np

from youngbsde import (DiscretePath, EtaSpec, TimeGrid, brute_force_pvar, generate_eta,
                       pvar_norm, young_bound_report, young_integral)

zig = DiscretePath(TimeGrid.uniform(1.0, 2), np.array([0.0, 1.0, 0.0]))
print(f"zigzag 2-variation: {pvar_norm(zig, 2.0):.15f} (sqrt 2 = {np.sqrt(2):.15f})")

small = generate_eta(EtaSpec.fbm(0.7, seed=1), TimeGrid.uniform(1.0, 12))
print(f"fBm on 13 nodes, p=1.6: DP {pvar_norm(small, 1.6):.12f}, "
      f"all partitions {brute_force_pvar(small, 1.6):.12f}")

grid = TimeGrid.uniform(1.0, 400)
eta = generate_eta(EtaSpec.fbm(0.75, seed=0), grid)
for p in (1.2, 1.4, 1.6, 2.0):
    print(f"  ||eta||_{p}-var = {pvar_norm(eta, p):.4f}")

integrand = DiscretePath(grid, np.cos(3 * grid.times))
exact = young_integral(integrand, eta).value
for r in (1, 4, 16):
    lp = young_integral(integrand, eta, "left-point", refinement=r).value
    print(f"left-point sums, refinement {r:>2}: {lp:+.6f} (exact pl {exact:+.6f})")
rep = young_bound_report(integrand, eta, 1.5, 1.5)
print(f"Young estimate: lhs {rep.lhs:.4f} <= rhs {rep.rhs:.4f}")
