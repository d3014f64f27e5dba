"""
Checking belief propagation against brute force
================================================

On trees the Bethe free energy is exact.  Loops make it an approximation;
the gap is reported rather than hidden.
"""

from rapnet.exact import compare_bp_exact, exact_enumerate, oracle_suite
from rapnet.graph import FactorGraph
from rapnet.solver import SolverConfig

config = SolverConfig(init_mode="random", seed=0)

# a single interaction: ln Z = 3 ln 2 + ln cosh 1
single = FactorGraph(1, 3, [[0, 1, 2]], [1])
print("single interaction  ln Z =", exact_enumerate(single).log_Z)

suite = oracle_suite(num_acyclic=8, num_loopy=4, max_vars=18, seed=3)
print("\n kind     p  vars  M   max |BP - exact|")
for g in suite:
    rep = compare_bp_exact(g, config)
    kind = "tree " if rep.acyclic else "loopy"
    print(f" {kind}  {g.depth:3d} {g.num_variables:5d} {g.num_interactions:3d}   {rep.max_abs:.2e}")

# low temperature: the enumeration settles on the planted ground state
g = suite[-1]
for beta in (1.0, 5.0, 20.0):
    res = exact_enumerate(g, beta)
    print(f"beta={beta:4.1f}  <E>={res.energy:8.4f}  ground={res.ground_energy}")
