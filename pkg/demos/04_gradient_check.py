"""
Checking hand-derived gradients
===============================

The analytic gradient of the full objective with respect to the prompt
vectors is compared against central finite differences.
"""
import numpy as np

from nptlab import LossWeights, grad_check, init_model, rep_gradients
from nptlab.losses import Batch
from nptlab.model import ModelConfig, with_config

cfg = ModelConfig(d_e=8, b=2, d=16, K_total=4, raw_dim=16, lambda_temp=0.1, init_seed=0)
params = with_config(init_model(cfg), vision_prompt_enabled=True)
rng = np.random.default_rng(0)
params.vision_prompt = 0.3 * rng.standard_normal(8)
labels = np.concatenate([np.arange(4), rng.integers(0, 4, 16)])
batch = Batch(rng.standard_normal((20, 16)), labels, np.arange(4))

for w in (LossWeights(0, 0), LossWeights(0.3, 0.8), LossWeights(2.0, 2.0)):
    rep = grad_check(params, batch, w, step=1e-5)
    print(f"w1={w.w1} w2={w.w2}: max rel error {rep.max_rel_error:.2e} over {rep.n_checked} coords")

# The contrastive gradient on each text rep splits into a pull toward its own
# images (cohesion) and a push away from the others (repulsion)
g = rng.standard_normal((4, 16))
g /= np.linalg.norm(g, axis=1, keepdims=True)
z = rng.standard_normal((20, 16))
z /= np.linalg.norm(z, axis=1, keepdims=True)
rg = rep_gradients(z, labels, g, LossWeights(), 0.1)
print("cohesion norms ", rg.cohesion_norm.round(3), "from", rg.cohesion_count)
print("repulsion norms", rg.repulsion_norm.round(3), "from", rg.repulsion_count)
