"""
Dropconnect with random feedback
================================

Dropconnect on the top weight population, trained with a fixed random
feedback matrix in place of the transposed weights.  Prediction averages
softmax outputs over Gaussian samples of the masked pre-activation.
"""

from rapnet.data import ExperimentConfig, experiment_datasets
from rapnet.network import (
    DropconnectConfig,
    TrainConfig,
    gaussian_inference,
    init_mlp,
    make_feedback,
    test_error,
    train,
)

cfg = ExperimentConfig(synthetic=True, lr_schedule=((15, 0.1),))
train_set, test_set = experiment_datasets(cfg)
net0 = init_mlp(cfg.widths, cfg.seed)
tc = TrainConfig(cfg.lr_schedule, cfg.batch_size, cfg.seed)

bp_net, _ = train(net0, train_set, tc)
print(f"plain backprop          error {test_error(bp_net, test_set):.3f}")

feedback = make_feedback(net0, layers=(3,), bound=0.5, seed=cfg.seed)
fa_net, _ = train(net0, train_set, tc, feedback=feedback)
print(f"feedback alignment      error {test_error(fa_net, test_set):.3f}")

for keep in (0.05, 0.3, 0.9):
    dc = DropconnectConfig({3: keep})
    net, _ = train(net0, train_set, tc, dropconnect=dc, feedback=feedback)
    proba = gaussian_inference(net, test_set.inputs, dc, num_samples=100, seed=0)
    print(f"hybrid, keep={keep:4.2f}      error {test_error(net, test_set, proba):.3f}")
