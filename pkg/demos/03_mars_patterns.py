"""
Piecewise-linear patterns with MARS
===================================

Hinge functions find kinks. When a cleaner driver is available, pruning
drops the noisier one.
"""
import numpy as np

from crelgd.mars import MarsOptions, mars_fit, mars_predict

# A single kink at 0.5 is found exactly.
x = np.linspace(0, 1, 201)
m = mars_fit(x[:, None], np.maximum(0, x - 0.5), variable_names=["x"])
for term in m.to_dict()["terms"]:
    print(f"{term['coefficient']:+.4f} * {term['formula']}")

# A V shape needs hinges on both sides of the knot.
rng = np.random.default_rng(1)
v = rng.uniform(-1, 1, 500)
m = mars_fit(v[:, None], np.abs(v) + 0.05 * rng.standard_normal(500), variable_names=["v"])
print(f"\nV shape: {len(m.basis)} terms, GCV {m.gcv:.5f}")
for term in m.to_dict()["terms"]:
    print(f"{term['coefficient']:+.4f} * {term['formula']}")

# z carries everything x knows about y, with less noise, so x is pruned.
rng = np.random.default_rng(2)
x = rng.uniform(-1, 1, 500)
z = np.abs(x) + 0.3 * rng.standard_normal(500)
y = z + 0.1 * rng.standard_normal(500)
m = mars_fit(np.column_stack([x, z]), y, variable_names=["x", "z"])
print(f"\nwith z available, x used: {m.uses_variable(0)}, z used: {m.uses_variable(1)}")

# Interactions are allowed up to the requested degree.
X = rng.uniform(-1, 1, (400, 2))
y = np.maximum(0, X[:, 0]) * np.maximum(0, X[:, 1] - 0.2) + 0.02 * rng.standard_normal(400)
m = mars_fit(X, y, MarsOptions(max_degree=2), variable_names=["a", "b"])
print(f"\ndegree-2 fit, {len(m.basis)} terms; f(0.5, 0.7) = {mars_predict(m, [0.5, 0.7]):.4f} (truth 0.25)")
