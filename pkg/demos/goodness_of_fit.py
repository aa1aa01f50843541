"""
Testing a fitted model with time rescaling
==========================================

A correct model maps each spike train to a unit-rate Poisson process through
its compensator.  The subsampled test below draws a few trials at a time,
rescales and cumulates them, and checks the result with a Kolmogorov-Smirnov
statistic.  The acceptance rate over many draws summarises the fit.
"""

import numpy as np

from hawkesneuro import ExpHawkesModel, SimConfig, simulate
from hawkesneuro.gof import GofConfig, quantile, run_gof, subsample_size

truth = ExpHawkesModel(np.full(3, 0.5), [[0.3, 0, 0], [0.4, 0.2, 0], [0, 0, 0.3]], 3.0)
data = simulate(truth, SimConfig(horizon=100.0, n_trials=9, rng_seed=4))

print("trials drawn per subsample:", subsample_size(data.n_trials))
print("Kolmogorov quantile at 5%%: %.4f" % quantile(0.05)[0])

report = run_gof(truth, data, GofConfig(alpha=0.05, n_subsamples=100, rng_seed=0))
print("acceptance under the generating model:", report.acceptance_rates)

#############################################################################
# Removing the interactions leaves only Poisson baselines, which cannot
# explain the bursts caused by self-excitation.
poisson = ExpHawkesModel(truth.mu, np.zeros((3, 3)), truth.beta)
print("acceptance without interactions:", run_gof(poisson, data).acceptance_rates)
