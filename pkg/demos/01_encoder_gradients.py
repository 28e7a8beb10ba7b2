"""The embedding network and its hand-written gradient.

Builds a small encoder, embeds a few records, and compares the analytic
gradient of a linear read-out of the embedding with central differences.
Then shows the momentum twin drifting towards the online encoder.
"""

import numpy as np

from semdisentangle import encoder as enc
from semdisentangle.numcore import finite_diff_grad, make_rng

rng = make_rng(0)
params = enc.init_params(D=6, H=12, N=3, rng=rng)
X = rng.normal(size=(4, 6))

Z = enc.forward(params, X)
print("embeddings (unit rows):")
print(np.round(Z, 4))
print("row norms:", np.round(np.linalg.norm(Z, axis=1), 12))

# gradient of sum_i g_i . z_i with respect to all weights
G = rng.normal(size=Z.shape)
analytic = enc.backward(params, X, G).flat()
numeric = finite_diff_grad(lambda th: float(np.sum(G * enc.forward(params.with_flat(th), X))), params.flat())
rel = np.linalg.norm(analytic - numeric) / (np.linalg.norm(analytic) + np.linalg.norm(numeric))
print(f"\n{analytic.size} parameters, relative gradient error {rel:.2e}")

# momentum twin: starts elsewhere, follows the online weights at rate 1 - omega
twin = enc.init_params(6, 12, 3, make_rng(1))
for step in range(1, 61):
    twin = enc.momentum_update(twin, params, omega=0.9)
    if step in (1, 10, 30, 60):
        gap = np.linalg.norm(twin.flat() - params.flat())
        print(f"after {step:2d} updates the twin is {gap:.2e} away")
