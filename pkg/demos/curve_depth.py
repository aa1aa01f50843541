"""
Ranking a path among simulated ones
===================================

Halfspace depth measures how central a curve is within a sample.  Here it is
approximated over random directions after sampling each curve at a few grid
points.  A curve shifted far from the sample gets the minimal depth; one
drawn from the same distribution lands somewhere in the middle.
"""

import numpy as np

from hawkesneuro.core import SamplePath
from hawkesneuro.depth import curve_depth, rank_in_sample

rng = np.random.default_rng(0)
walks = np.cumsum(rng.standard_normal((101, 300)) * 0.1, axis=1) - 45.0
sample = [SamplePath(0.0, 0.01, w) for w in walks[1:]]
typical = SamplePath(0.0, 0.01, walks[0])
shifted = SamplePath(0.0, 0.01, walks[0] + 30.0)

print("depth of a typical path: %.3f" % curve_depth(typical, sample, d=5))
print("depth of a shifted path: %.3f" % curve_depth(shifted, sample, d=5))

#############################################################################
# Ranks are taken within the pooled set, so a path exchangeable with the
# sample has a rank spread evenly over 1..101.  Few grid points keep the
# depths from all tying at the minimum.
for d in (3, 5, 50):
    _, rank, members = rank_in_sample(typical, sample, n_directions=1000, seed=1, d=d)
    print(f"d={d:2d}: rank {rank}, distinct member depths {len(np.unique(members))}")
