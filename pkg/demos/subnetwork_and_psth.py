"""
Finding the inputs of one neuron
================================

Threshold a fitted adjacency matrix to find the neurons acting on a target,
then look at the same relation through a model-free lens: the
spike-triggered coefficient, which counts target spikes shortly after each
source spike.
"""

import numpy as np

from hawkesneuro import ExpHawkesModel, SimConfig, adjacency, simulate
from hawkesneuro.adm4 import Adm4Config, fit_adm4, select_subnetwork
from hawkesneuro.network import psth, triggered_coefficient

A = np.zeros((5, 5))
A[4, [0, 2]] = 0.5  # neurons 0 and 2 feed neuron 4
truth = ExpHawkesModel(np.full(5, 1.0), A, 5.0)
data = simulate(truth, SimConfig(horizon=60.0, n_trials=9, rng_seed=2))

model, _ = fit_adm4(data, Adm4Config(beta_grid=(2.0, 5.0, 10.0), lasso_weight=5.0))
sources = select_subnetwork(adjacency(model), target=4, threshold=0.05)
print("inputs of neuron 4:", sources)

for s in range(4):
    value, _ = triggered_coefficient(data, target=4, source=s, half_width=0.05)
    print(f"triggered coefficient {s} -> 4: {value:.3f}")

#############################################################################
# A peri-stimulus time histogram of all trials.  The network has no stimulus,
# so it should be flat up to Poisson noise.
edges, counts = psth(data, 5.0)
print("PSTH counts per 5 s bin:", counts)
