"""
Recovering a small excitatory network
=====================================

Simulate a three-neuron exponential Hawkes network, then estimate its
connectivity twice: once with the exponential-kernel likelihood fit and once
with the piecewise-constant least-squares fit.  The two adjacency matrices
should agree on which connections exist.
"""

import numpy as np

from hawkesneuro import ExpHawkesModel, SimConfig, adjacency, simulate
from hawkesneuro.adm4 import Adm4Config, fit_adm4
from hawkesneuro.network import matrix_distance
from hawkesneuro.npl import NplConfig, fit_npl

# neuron 0 drives neuron 1; every neuron also excites itself a little
A = np.array([[0.3, 0.0, 0.0], [0.4, 0.2, 0.0], [0.0, 0.0, 0.3]])
truth = ExpHawkesModel(mu=np.full(3, 0.5), A=A, beta=3.0)

# nine trials of 200 s each, with a fixed seed
data = simulate(truth, SimConfig(horizon=200.0, n_trials=9, rng_seed=1))
print("events per neuron:", data.counts().sum(axis=0))

#############################################################################
# Exponential kernels.  The decay is picked from a grid; with no lasso weight
# given, it is chosen by leave-one-trial-out cross-validation.
exp_model, diag = fit_adm4(data, Adm4Config(beta_grid=(1.0, 2.0, 3.0, 5.0, 10.0)))
print("chosen decay:", exp_model.beta, " lasso weight:", round(diag["lasso_weight"], 2))
print(np.round(adjacency(exp_model), 2))

#############################################################################
# Piecewise-constant kernels need a support long enough to cover the decay.
pw_model, _ = fit_npl(data, NplConfig(K=10, delta=0.15, lasso_weight=10.0))
print(np.round(adjacency(pw_model), 2))

fro, spectral = matrix_distance(adjacency(exp_model), adjacency(pw_model))
print(f"distance between the two estimates: frobenius {fro:.3f}, spectral {spectral:.3f}")
