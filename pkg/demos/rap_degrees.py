"""
Random active paths and their degree profile
=============================================

Each interaction picks one weight from every population.  The number of
interactions a weight joins is Poisson with mean lambda = M / N.
"""

import numpy as np

from rapnet.graph import (
    RapParams,
    build_rap,
    degree_histogram,
    dropconnect_from_lambda,
    hamiltonian,
    poisson_goodness_of_fit,
    poisson_pmf,
)

# one instance at the mean degree of interest
params = RapParams.from_lambda(2000, 3, 6.336, seed=0)
graph, planted = build_rap(params)
print(f"N={graph.population_size}  p={graph.depth}  M={graph.num_interactions}")

# couplings are built from the planted weights, so they sit at the ground state
print("H(planted) =", hamiltonian(graph, planted), " (-M)")

stats = degree_histogram(graph)
print("mean degree", float(stats.mean_degree), " per population", np.round(stats.population_split, 3))

print("\n k   observed   poisson")
for k in range(0, 16):
    frac = stats.histogram.get(k, 0) / stats.num_variables
    print(f"{k:2d}   {frac:8.5f}  {poisson_pmf(6.336, k):8.5f}")

chi2, dof, p = poisson_goodness_of_fit(stats, 6.336)
print(f"\nchi-square {chi2:.2f} on {dof} dof, p = {p:.3f}")
print("total variation distance", round(stats.total_variation(6.336), 4))

# the same lambda seen as a per-layer keep probability of a width-N net
print("\nkeep probability for lambda=6.336, N=2000:", round(dropconnect_from_lambda(6.336, 2000), 5))
