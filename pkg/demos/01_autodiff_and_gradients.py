#!/usr/bin/env python3
"""Tour of the tensor engine: forward ops, reverse-mode gradients, Adam.

Builds a small compute graph by hand, checks its gradients against central
finite differences, and runs a few Adam steps with gradient clipping.
"""

import numpy as np

from nbtrack import numerics as nm

# ---------------------------------------------------------------------------
# 1. forward ops
# ---------------------------------------------------------------------------

x = nm.Node(np.array([0.5, -1.0, 2.0]))
w = nm.Node(np.array([[1.0, 0.0, 2.0],
                      [0.0, 1.0, -1.0]]))
b = nm.Node(np.zeros(2))

hidden = nm.sigmoid(nm.affine(w, x, b))
print("affine+sigmoid:", hidden.value)

pooled = nm.maxpool_over_time(nm.relu(nm.Node(np.array([[1.0, 3.0, -2.0],
                                                        [5.0, 2.0, 0.5]]))))
print("relu+maxpool over time:", pooled.value)

gated = nm.scale(hidden, 0.5)
loss = nm.softmax_xent(nm.affine(np.eye(2), gated, np.zeros(2)), label=1)
print("softmax cross-entropy:", loss.item())

# ---------------------------------------------------------------------------
# 2. reverse mode vs finite differences
# ---------------------------------------------------------------------------

def build():
    h = nm.sigmoid(nm.affine(w, x, b))
    return nm.softmax_xent(nm.affine(np.eye(2), nm.scale(h, 0.5), np.zeros(2)), 1)

err = nm.finite_difference_check(build, {"x": x, "w": w, "b": b})
print(f"max relative error vs central differences: {err:.2e}")

# ---------------------------------------------------------------------------
# 3. Adam with clipping: minimize (p - 3)^2 from p = 0
# ---------------------------------------------------------------------------

p = np.array([0.0])
state = nm.AdamState()
for step in range(2000):
    grad = 2.0 * (p - 3.0)          # analytic gradient of the quadratic
    nm.adam_step({"p": p}, {"p": grad}, state, lr=0.01, clip=(-2.0, 2.0))
print(f"after {state.t} Adam steps: p = {p[0]:.4f} (target 3.0)")
