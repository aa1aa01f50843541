"""
A membrane potential driven by spikes
=====================================

The potential follows a mean-reverting diffusion and jumps by ``a(x)`` at
every presynaptic spike.  From one 13 s recording we estimate the diffusion
coefficient, the jump size and the drift, then regenerate fresh paths from
the fitted coefficients.
"""

import numpy as np

from hawkesneuro import ExpHawkesModel
from hawkesneuro import jumpdiff as jd

# three independent presynaptic neurons firing at 1 Hz each
driver = ExpHawkesModel(np.ones(3), np.zeros((3, 3)), 1.0)
truth = jd.JumpDiffusionModel(
    b=lambda x: -2 * (x + 45),
    sigma=lambda x: np.full(np.shape(x), 0.5),
    a=lambda x: np.full(np.shape(x), 2.0),
    driver=driver,
)
path, spikes = jd.simulate_path(truth, x0=-45.0, dt=1e-3, T=13.0, seed=3)
print("samples:", len(path), " presynaptic spikes:", sum(len(s) for s in spikes))

#############################################################################
# The estimators: truncated squared increments for sigma^2, plain squared
# increments for g = sigma^2 + a^2 f, a kernel regression for the spike rate f
# seen from state x, and the drift after removing the jumps.
fit = jd.fit_jumpdiff(path, spikes, driver)
print("sigma^2 (constant approximation): %.3f" % fit.sigma2_const)
print("jump size, linear approximation: slope %.3f, intercept %.3f" % fit.a_lin)
print("drift, linear approximation: slope %.3f, intercept %.3f" % fit.b_lin)

#############################################################################
# Ignoring the jumps folds them into a much larger diffusion coefficient.
plain = jd.fit_diffusion(path)
print("sigma^2 when jumps are ignored: %.2f" % plain.sigma2_const)

paths = jd.regenerate(fit, driver, T=13.0, dt=1e-3, x0=(-55.0, -35.0), seed=7, n_paths=5)
print("regenerated path means:", [round(float(p.values.mean()), 1) for p in paths])
