"""The three W1-optimal coupling constructions used by the equilibrium
assembly: discrete-discrete (LP plan), one-dimensional (comonotone
quantile), and discrete-continuous (semi-discrete dual ascent).

Run:  python3 demos/demo_transport_couplings.py
"""

import numpy as np

from teamsolve import (build_box_partition, ot_discrete, ot_quantile_1d,
                       ot_semidiscrete, w1_quantile_quadrature)
from teamsolve.measures import CpwaDensityMeasure, DiscreteMeasure

rng = np.random.default_rng(1)

# discrete-to-discrete: exact plan via the transport LP
a = DiscreteMeasure(rng.uniform(0, 1, (4, 2)), rng.dirichlet(np.ones(4)))
b = DiscreteMeasure(rng.uniform(0, 1, (6, 2)), rng.dirichlet(np.ones(6)))
coupling, w1 = ot_discrete(a, b)
print("discrete OT: W1 = %.6f, plan support = %d entries"
      % (w1, (coupling.plan > 1e-12).sum()))
src, tgt = coupling.sample_pairs(rng, 100000)
print("  sampled mean cost %.6f (matches W1)"
      % np.linalg.norm(src - tgt, axis=1).mean())

# one-dimensional: spread each atom over its quantile range
half = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
uniform = CpwaDensityMeasure(build_box_partition([(0, 1)], (1,)), [1, 1])
q = ot_quantile_1d(half, uniform)
print("quantile coupling: quadrature W1 = %.6f, sampled = %.6f"
      % (w1_quantile_quadrature(half, uniform), q.cost_estimate(rng, 200000)))

# discrete-to-continuous: ascend the concave semi-discrete dual, then the
# potentials carve the target into assignment cells
two = DiscreteMeasure([[0.25, 0.5], [0.75, 0.5]], [0.5, 0.5])
square = CpwaDensityMeasure(build_box_partition([(0, 1), (0, 1)], (2, 2)),
                            np.ones(9))
sd = ot_semidiscrete(two, square, rng=rng, n_iterations=8000)
print("semi-discrete: cell masses %s vs weights %s"
      % (np.round(sd.est_masses, 3), two.weights))
print("  coupling cost %.4f, dual value %.4f"
      % (sd.cost_estimate(rng, 200000), sd.dual_value(rng, 200000)))
cond = sd.sample_given_source(rng, np.zeros(5000, dtype=int))
print("  conditional cell of the left atom spans x in [%.3f, %.3f]"
      % (cond[:, 0].min(), cond[:, 0].max()))
