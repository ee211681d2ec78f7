"""
Projected descent on the language-collapse loss
===============================================

Free unit vectors trained on the pairwise term alone settle into a simplex
ETF.  Progress slows near the optimum because the ETF lies on the boundary
of the feasible Gram matrices.
"""
import numpy as np

from nptlab import delta_lcd, loss_lc
from nptlab.losses import lc_gradient

K, d = 5, 32
rng = np.random.default_rng(0)
g = rng.standard_normal((K, d))
g /= np.linalg.norm(g, axis=1, keepdims=True)

for step in range(5001):
    if step in (0, 10, 100, 1000, 5000):
        off = (g @ g.T)[~np.eye(K, dtype=bool)]
        print(f"step {step:5d}  L_lc={loss_lc(g):.3e}  delta_lcd={delta_lcd(g):.3e}  "
              f"max gap to -1/(K-1)={np.abs(off + 1 / (K - 1)).max():.2e}")
    g = g - 0.05 * lc_gradient(g)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
