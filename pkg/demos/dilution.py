"""
Redundancy under random weight removal
======================================

Train a 784-100-200-10 sigmoid net, then delete first-layer weights at
random.  Test error stays flat for mild dilution and climbs to chance as
the surviving paths thin out.  MNIST files can be used through an
ExperimentConfig; the synthetic prototype task keeps the demo offline.
"""

import numpy as np

from rapnet.data import ExperimentConfig, experiment_datasets
from rapnet.network import (
    TrainConfig,
    dilution_sweep,
    init_mlp,
    path_product_histogram,
    test_error,
    train,
)

cfg = ExperimentConfig(synthetic=True, lr_schedule=((20, 0.1),))
train_set, test_set = experiment_datasets(cfg)
net, curve = train(init_mlp(cfg.widths, cfg.seed), train_set,
                   TrainConfig(cfg.lr_schedule, cfg.batch_size, cfg.seed), test_set=test_set)
print("epoch  loss    test error")
for epoch, loss, err in curve[::5] + curve[-1:]:
    print(f"{epoch:5d}  {loss:.4f}  {err:.3f}")

grid = [(p, 0.0, 0.0) for p in np.linspace(0.0, 1.0, 11)]
print("\n p1    error   stderr")
for p1, _, _, mean, se, _ in dilution_sweep(net, grid, replicates=5, dataset=test_set):
    print(f"{p1:4.1f}  {mean:.3f}   {se:.3f}")

# products of weights along random input-to-output paths
stats = path_product_histogram(net, 50_000, seed=0)
print(f"\npositive products: {stats.sign_balance:.3f}")
print(f"inside the central 10% of the range: {stats.central_fraction(0.1):.3f}")
print("baseline error", test_error(net, test_set))
