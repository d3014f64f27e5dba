"""
Entropy crisis of the random active path model
===============================================

Belief propagation from a random start falls back to the all-zero fixed
point, whose entropy per weight drops linearly in lambda and hits zero at
lambda_c.  Beyond that point the frozen ansatz clamps the energy.
"""

from rapnet.solver import (
    SolverConfig,
    find_lambda_c,
    frozen_energy_curve,
    paramagnetic_observables,
    sweep_lambda,
)

config = SolverConfig(init_mode="random", amplitude=0.1)

# small sweep; the bundled CLI runs the full grid
grid = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
result = sweep_lambda(1000, grid, num_samples=4, solver_config=config, root_seed=1)

print("lambda    e_bp      s_bp    s_closed")
for row in result.aggregate:
    _, _, s_ref = paramagnetic_observables(row.lam)
    print(f"{row.lam:5.1f}  {row.e_mean:8.4f}  {row.s_mean:7.4f}  {s_ref:7.4f}")

# negative entropy above lambda_c: the paramagnetic solution is unphysical there
critical = find_lambda_c()
print(f"\nlambda_c = {critical.lambda_c:.10f}   e_c = {critical.e_c:.10f}")

bp_critical = find_lambda_c(1000, config, (5.0, 8.0), mode="bp", num_samples=4, root_seed=1)
print(f"BP bisection at N=1000: lambda_c = {bp_critical.lambda_c:.4f}")

print("\nfrozen energy curve")
for lam, e in frozen_energy_curve([2.0, 4.0, 6.0, critical.lambda_c, 8.0, 10.0], critical):
    print(f"  {lam:7.4f}  {e:8.5f}")
