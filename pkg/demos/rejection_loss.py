"""How the rejection loss behaves on a single logit vector.

Run: python3 demos/rejection_loss.py
"""

import math

import numpy as np

from uirloss.losses import stabilized_probabilities, uir_loss
from uirloss.numerics import softmax

n = 8
print(f"lower bound n ln n for n={n}: {n * math.log(n):.6f}\n")

# Sharper logits move the loss away from the bound; flat ones sit on it.
for spread in (0.0, 0.5, 2.0, 8.0):
    z = spread * np.linspace(-1, 1, n)
    plain = uir_loss(z, stabilized=False)
    stab = uir_loss(z, stabilized=True)
    print(f"spread {spread:4.1f}  plain {plain.value:10.4f}  stabilized {stab.value:8.4f}"
          f"  |grad| {np.linalg.norm(stab.grad_logits):.2e}")

# A confident classifier output. The single softmax underflows,
# the log blows up, the second softmax keeps every term bounded.
z = np.zeros(1000)
z[0] = 1000.0
p = softmax(z)
q = stabilized_probabilities(z)
print(f"\nsmallest p  = {p.min():.3e}  (log -> {np.log(p.min()) if p.min() > 0 else '-inf'})")
print(f"smallest p' = {q.min():.3e}  >= 1/(n-1+e) = {1 / (999 + math.e):.3e}")
print(f"stabilized loss = {uir_loss(z).value:.4f}")

# The gradient pushes the winning logit down and the others up.
g = uir_loss(np.array([3.0, 1.0, 0.0, -1.0])).grad_logits
print("\ngradient on [3, 1, 0, -1]:", np.round(g, 4))
