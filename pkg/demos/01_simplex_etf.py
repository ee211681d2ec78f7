"""
Simplex equiangular tight frames
================================

Build K unit vectors in d dimensions whose pairwise cosines all equal
-1/(K-1), then check the Gram matrix and a few edge cases.
"""
import numpy as np

from nptlab import build_etf, etf_target_gram, gram_distance
from nptlab.geometry import DimensionError

np.set_printoptions(precision=4, suppress=True)

# Four classes embedded in eight dimensions
frame = build_etf(4, 8, seed=0)
print("columns shape", frame.columns.shape)
print(frame.gram())

# every off-diagonal entry is -1/3 and the columns sum to zero
print("max |G - target|", np.abs(frame.gram() - etf_target_gram(4)).max())
print("column sum", np.abs(frame.columns.sum(axis=1)).max())

# K = 2 gives an antipodal pair
pair = build_etf(2, 2, rotation=np.eye(2))
print("K=2 columns\n", pair.columns)

# The distance of arbitrary vectors from the ETF geometry
rng = np.random.default_rng(1)
v = rng.standard_normal((4, 8))
v /= np.linalg.norm(v, axis=1, keepdims=True)
print("random unit vectors: gram distance", gram_distance(v, etf_target_gram(4)))
print("ETF rows: gram distance", gram_distance(frame.vectors, etf_target_gram(4)))

# d < K is refused; an ETF needs room for K directions here
try:
    build_etf(5, 4)
except DimensionError as e:
    print("refused:", e)
