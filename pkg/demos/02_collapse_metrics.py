"""
Collapse metrics on hand-built representations
==============================================

Compare a perfectly collapsed configuration with a noisy one using the
language collapse degree, the image-text isomorphism error and NC1-NC3.
"""
import numpy as np

from nptlab import build_etf, collapse_report

K, d, per_class = 5, 12, 8
labels = np.repeat(np.arange(K), per_class)

# Ideal case: text reps form an ETF and every image sits on its class vector
text = build_etf(K, d, seed=3).vectors
ideal = collapse_report(text, text[labels], labels)
print("ideal:", {k: round(v, 6) for k, v in ideal.flat().items()})

# Noisy case: jitter the images and squash the text reps toward one direction
rng = np.random.default_rng(0)
images = text[labels] + 0.4 * rng.standard_normal((len(labels), d))
images /= np.linalg.norm(images, axis=1, keepdims=True)
squashed = text + 1.5 * text[0]
squashed /= np.linalg.norm(squashed, axis=1, keepdims=True)
noisy = collapse_report(squashed, images, labels)
print("noisy:", {k: round(v, 4) for k, v in noisy.flat().items()})

# Reports serialize to JSON and CSV rows
print(noisy.to_json())
print(noisy.to_csv_row(header=True))
