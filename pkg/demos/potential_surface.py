"""Draw one Gaussian-process potential and look at it.

Samples a random-Fourier-feature realization, renders the surface, checks the
analytic gradient against finite differences, and exports the draw as JSON so
another implementation can reproduce the exact same function.
"""

import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gpleap import FieldConfig, KernelSpec, MeanSpec, sample_realization

config = FieldConfig(
    dimension=2,
    kernel=KernelSpec(variance=1.0, lengthscale=1.0),
    mean=MeanSpec.quadratic_well(2),
    feature_count=512,
    seed=7,
)
potential = sample_realization(config)

# the realization is an ordinary smooth function: evaluate it on a grid
axis = np.linspace(-2.0, 2.0, 121)
xx, yy = np.meshgrid(axis, axis)
points = np.stack([xx.ravel(), yy.ravel()], axis=-1)
values = potential.eval_potential(points).reshape(xx.shape)

fig, ax = plt.subplots(figsize=(5.5, 4.5))
contour = ax.contourf(xx, yy, values, levels=30)
fig.colorbar(contour, ax=ax, label="V(y)")
ax.set_title("confining quadratic mean + stationary Gaussian wiggle")
ax.set_xlabel("$y_1$")
ax.set_ylabel("$y_2$")
fig.tight_layout()
fig.savefig("potential_surface.png", dpi=120)
print("wrote potential_surface.png")

# analytic derivatives agree with finite differences of the level below
rng = np.random.default_rng(0)
h = 1e-5
worst = 0.0
for _ in range(20):
    y = rng.uniform(-1.5, 1.5, 2)
    grad = potential.eval_grad(y)
    fd = np.array([
        (potential.eval_potential(y + h * e) - potential.eval_potential(y - h * e)) / (2 * h)
        for e in np.eye(2)
    ])
    worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(grad))
print(f"max relative gradient error vs finite differences: {worst:.2e}")

with open("realization.json", "w") as fh:
    json.dump(potential.export(), fh)
print("wrote realization.json (frequencies + weights; reproducible anywhere)")
