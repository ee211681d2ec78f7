"""Simplex equiangular tight frames.

A simplex ETF is a set of K unit vectors in d >= K dimensions whose pairwise
cosines all equal -1/(K-1), the largest equal separation K vectors can have.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when a requested dimension cannot hold the requested frame."""


@dataclass(frozen=True)
class EtfFrame:
    """A d x K simplex ETF; ``columns[:, k]`` is the k-th vertex."""

    columns: np.ndarray
    rotation_seed: int

    @property
    def dim_d(self) -> int:
        return self.columns.shape[0]

    @property
    def num_classes_K(self) -> int:
        return self.columns.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        """The vertices as rows, K x d."""
        return self.columns.T

    def gram(self) -> np.ndarray:
        return self.columns.T @ self.columns

    def check(self, atol: float = 1e-9) -> None:
        """Raise AssertionError if the frame violates any ETF invariant."""
        K = self.num_classes_K
        norms = np.linalg.norm(self.columns, axis=0)
        if not np.allclose(norms, 1.0, rtol=0, atol=atol):
            raise AssertionError(f"column norms deviate from 1: {norms}")
        dev = np.abs(self.gram() - etf_target_gram(K)).max()
        if dev > atol:
            raise AssertionError(f"Gram deviates from the ETF target by {dev:.3g}")


def random_partial_rotation(d: int, K: int, seed: int) -> np.ndarray:
    """Return a d x K matrix with orthonormal columns, deterministic per seed."""
    if d < K:
        raise DimensionError(f"need d >= K for a d x K partial rotation, got d={d}, K={K}")
    rng = np.random.default_rng(seed)
    while True:
        a = rng.standard_normal((d, K))
        q, r = np.linalg.qr(a)
        # rank-deficient draws have probability zero; redraw anyway
        if np.min(np.abs(np.diag(r))) > 1e-10:
            break
    # fix the sign ambiguity of QR so the result is a function of the draw alone
    return q * np.sign(np.diag(r))


def etf_target_gram(K: int) -> np.ndarray:
    """Gram matrix of a unit simplex ETF: 1 on the diagonal, -1/(K-1) elsewhere."""
    if K < 2:
        raise ValueError(f"a simplex ETF needs K >= 2 vertices, got {K}")
    return K / (K - 1) * np.eye(K) - np.ones((K, K)) / (K - 1)


def build_etf(K: int, d: int, seed: int = 0, rotation: np.ndarray | None = None) -> EtfFrame:
    """Construct a simplex ETF of K vertices in d dimensions.

    ``rotation`` overrides the random partial rotation; it must be d x K with
    orthonormal columns.
    """
    if K < 2:
        raise ValueError(f"a simplex ETF needs K >= 2 vertices, got {K}")
    if d < K:
        raise DimensionError(f"construction needs d >= K, got d={d}, K={K}")
    if rotation is None:
        u = random_partial_rotation(d, K, seed)
    else:
        u = np.asarray(rotation, dtype=np.float64)
        if u.shape != (d, K):
            raise DimensionError(f"rotation must be {d}x{K}, got {u.shape}")
    centering = np.eye(K) - np.ones((K, K)) / K
    M = np.sqrt(K / (K - 1)) * u @ centering
    return EtfFrame(columns=M, rotation_seed=seed)


def gram_distance(reps, target: np.ndarray) -> float:
    """Frobenius distance between the Gram matrix of ``reps`` (rows) and ``target``."""
    reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise ValueError("target must be a square matrix")
    if reps.shape[0] != target.shape[0]:
        raise ValueError(f"{reps.shape[0]} reps against a {target.shape[0]}x{target.shape[0]} target")
    return float(np.linalg.norm(reps @ reps.T - target))
