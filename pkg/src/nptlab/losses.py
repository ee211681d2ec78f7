"""Prompt-tuning objective, its hand-derived gradients, and a gradient checker.

Text reps g (K x d) act as classifier vectors; image reps z (N x d) carry
integer labels in [0, K).  The objective is

    L = L_clip + w1 * L_lc + w2 * L_mi

with L_clip the mean cross-entropy of the cosine softmax, L_lc the squared
deviation of off-diagonal text similarities from the simplex value, and L_mi
the squared gap between matched image/text similarity and its maximum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import EncodeCache, ModelParams, encode_image, encode_text, predict_probs

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class LossWeights:
    w1: float = 0.3
    w2: float = 0.8

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError(f"loss weights must be nonnegative, got {self.w1}, {self.w2}")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    clip: float
    lc: float
    mi: float
    clamped: bool = False


def _labels(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    return labels


def loss_clip(probs, labels, return_clamped: bool = False):
    probs = np.atleast_2d(probs)
    labels = _labels(labels, probs.shape[1])
    p_true = probs[np.arange(len(labels)), labels]
    clamped = bool(np.any(p_true < PROB_FLOOR))
    if clamped:
        log.warning("true-label probability underflowed; clamped at %g", PROB_FLOOR)
    value = float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))
    return (value, clamped) if return_clamped else value


def _lc_residual(text_reps, E_W: float) -> np.ndarray:
    g = np.asarray(text_reps, dtype=np.float64)
    K = g.shape[0]
    if K < 2:
        raise ValueError(f"need at least 2 text reps, got {K}")
    R = g @ g.T + E_W / (K - 1)
    np.fill_diagonal(R, 0.0)
    return R


def loss_lc(text_reps, E_W: float = 1.0) -> float:
    """Sum over ordered pairs i != j of (<g_i, g_j> + E_W/(K-1))^2."""
    R = _lc_residual(text_reps, E_W)
    return float(np.sum(R * R))


def lc_gradient(text_reps, E_W: float = 1.0) -> np.ndarray:
    """dL_lc/dg = 4 R g, with R the off-diagonal residual matrix."""
    g = np.asarray(text_reps, dtype=np.float64)
    return 4.0 * _lc_residual(g, E_W) @ g


def _mi_residual(image_reps, labels, text_reps, E_W, E_H) -> np.ndarray:
    z = np.atleast_2d(np.asarray(image_reps, dtype=np.float64))
    g = np.asarray(text_reps, dtype=np.float64)
    labels = _labels(labels, g.shape[0])
    return np.einsum("nd,nd->n", z, g[labels]) - np.sqrt(E_W * E_H)


def loss_mi(image_reps, labels, text_reps, E_W: float = 1.0, E_H: float = 1.0) -> float:
    m = _mi_residual(image_reps, labels, text_reps, E_W, E_H)
    return float(np.sum(m * m))


def loss_total(probs, labels, text_reps, image_reps, weights: LossWeights,
               E_W: float = 1.0, E_H: float = 1.0) -> LossBreakdown:
    clip, clamped = loss_clip(probs, labels, return_clamped=True)
    lc = loss_lc(text_reps, E_W)
    mi = loss_mi(image_reps, labels, text_reps, E_W, E_H)
    total = clip + weights.w1 * lc + weights.w2 * mi
    return LossBreakdown(total=total, clip=clip, lc=lc, mi=mi, clamped=clamped)


def total_from_reps(image_reps, labels, text_reps, weights: LossWeights, lambda_temp: float,
                    E_W: float = 1.0, E_H: float = 1.0) -> LossBreakdown:
    probs = predict_probs(image_reps, text_reps, lambda_temp)
    return loss_total(probs, labels, text_reps, image_reps, weights, E_W, E_H)


@dataclass
class RepGradients:
    """Gradients of each loss w.r.t. the representations, treated as free vectors.

    ``components`` maps "clip", "lc", "mi" to unweighted (d_text, d_image)
    pairs; ``d_text``/``d_image`` are the weighted totals.
    """

    d_text: np.ndarray
    d_image: np.ndarray
    components: dict[str, tuple[np.ndarray, np.ndarray]]
    weights: LossWeights
    cohesion: np.ndarray  # (K, d) intra-class term of dL_clip/dg_k
    repulsion: np.ndarray  # (K, d) inter-class term of dL_clip/dg_k
    cohesion_count: np.ndarray  # n_k
    repulsion_count: np.ndarray  # N - n_k

    @property
    def cohesion_norm(self) -> np.ndarray:
        return np.linalg.norm(self.cohesion, axis=1)

    @property
    def repulsion_norm(self) -> np.ndarray:
        return np.linalg.norm(self.repulsion, axis=1)


def rep_gradients(image_reps, labels, text_reps, weights: LossWeights, lambda_temp: float,
                  E_W: float = 1.0, E_H: float = 1.0) -> RepGradients:
    z = np.atleast_2d(np.asarray(image_reps, dtype=np.float64))
    g = np.asarray(text_reps, dtype=np.float64)
    K, N = g.shape[0], z.shape[0]
    labels = _labels(labels, K)
    p = predict_probs(z, g, lambda_temp)
    Y = np.zeros_like(p)
    Y[np.arange(N), labels] = 1.0
    scale = 1.0 / (N * lambda_temp)

    # dL_clip/dg_k splits into samples of class k (cohesion) and the rest (repulsion)
    own = (p - 1.0) * Y
    other = p * (1.0 - Y)
    cohesion = scale * own.T @ z
    repulsion = scale * other.T @ z
    dg_clip = cohesion + repulsion
    dz_clip = scale * (p - Y) @ g

    if K >= 2:
        dg_lc = lc_gradient(g, E_W)
    else:
        dg_lc = np.zeros_like(g)
    dz_lc = np.zeros_like(z)

    m = _mi_residual(z, labels, g, E_W, E_H)
    dz_mi = 2.0 * m[:, None] * g[labels]
    dg_mi = np.zeros_like(g)
    np.add.at(dg_mi, labels, 2.0 * m[:, None] * z)

    counts = np.bincount(labels, minlength=K)
    return RepGradients(
        d_text=dg_clip + weights.w1 * dg_lc + weights.w2 * dg_mi,
        d_image=dz_clip + weights.w1 * dz_lc + weights.w2 * dz_mi,
        components={"clip": (dg_clip, dz_clip), "lc": (dg_lc, dz_lc), "mi": (dg_mi, dz_mi)},
        weights=weights,
        cohesion=cohesion,
        repulsion=repulsion,
        cohesion_count=counts,
        repulsion_count=N - counts,
    )


@dataclass(frozen=True)
class Batch:
    """Raw features with labels local to ``class_ids`` (label j means class_ids[j])."""

    raw_features: np.ndarray
    labels: np.ndarray
    class_ids: np.ndarray

    @classmethod
    def from_global(cls, raw_features, global_labels, class_ids) -> "Batch":
        class_ids = np.asarray(class_ids, dtype=np.int64)
        lookup = {int(c): j for j, c in enumerate(class_ids)}
        try:
            local = np.array([lookup[int(y)] for y in global_labels], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"label {e.args[0]} is not among class_ids") from None
        return cls(np.asarray(raw_features, dtype=np.float64), local, class_ids)


@dataclass
class ForwardPass:
    text_reps: np.ndarray
    image_reps: np.ndarray
    text_cache: EncodeCache
    image_cache: EncodeCache
    probs: np.ndarray


def forward(params: ModelParams, batch: Batch) -> ForwardPass:
    g, tc = encode_text(params, batch.class_ids)
    z, ic = encode_image(params, batch.raw_features)
    return ForwardPass(g, z, tc, ic, predict_probs(z, g, params.lambda_temp))


@dataclass
class ParamGradients:
    context_tokens: np.ndarray
    vision_prompt: np.ndarray | None
    losses: LossBreakdown
    reps: RepGradients = field(repr=False)

    def norm(self) -> float:
        sq = float(np.sum(self.context_tokens ** 2))
        if self.vision_prompt is not None:
            sq += float(np.sum(self.vision_prompt ** 2))
        return float(np.sqrt(sq))


def _through_normalization(d_out: np.ndarray, cache: EncodeCache) -> np.ndarray:
    """Pull a gradient on y = x/|x| back to x: (I - y y^T) d_out / |x|."""
    y = cache.reps
    radial = np.einsum("nd,nd->n", d_out, y)
    return (d_out - radial[:, None] * y) / cache.norms[:, None]


def param_gradients(params: ModelParams, batch: Batch, weights: LossWeights,
                    E_W: float = 1.0, E_H: float = 1.0, fwd: ForwardPass | None = None) -> ParamGradients:
    """Gradient of the total loss w.r.t. context tokens and the vision prompt."""
    if fwd is None:
        fwd = forward(params, batch)
    fwd.text_cache.check(params, "text")
    fwd.image_cache.check(params, "image")
    if len(fwd.text_cache.reps) != len(batch.class_ids) or len(fwd.image_cache.reps) != len(batch.labels):
        raise StaleCacheError("cache does not match the batch")

    rg = rep_gradients(fwd.image_reps, batch.labels, fwd.text_reps, weights, params.lambda_temp, E_W, E_H)
    losses = loss_total(fwd.probs, batch.labels, fwd.text_reps, fwd.image_reps, weights, E_W, E_H)

    cfg = params.config
    dx_text = _through_normalization(rg.d_text, fwd.text_cache)
    d_tokens = dx_text @ params.text_backbone  # (K, (b+1) d_e)
    d_context = d_tokens[:, : cfg.b * cfg.d_e].sum(axis=0).reshape(cfg.b, cfg.d_e)

    d_vision = None
    if cfg.vision_prompt_enabled:
        dx_image = _through_normalization(rg.d_image, fwd.image_cache)
        d_vision = params.prompt_injection.T @ dx_image.sum(axis=0)
    return ParamGradients(d_context, d_vision, losses, rg)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int
    step: float

    def ok(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error < tol


def grad_check(params: ModelParams, batch: Batch, weights: LossWeights, step: float = 1e-5,
               E_W: float = 1.0, E_H: float = 1.0, max_coords: int | None = None,
               seed: int = 0) -> GradCheckReport:
    """Compare analytic parameter gradients with central finite differences.

    Error per coordinate is |analytic - fd| / max(1, |fd|).  With
    ``max_coords`` set and more learnable coordinates than that, a random
    subset (at least 200) is checked.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    pg = param_gradients(params, batch, weights, E_W, E_H)
    slots = [("context_tokens", pg.context_tokens)]
    if pg.vision_prompt is not None:
        slots.append(("vision_prompt", pg.vision_prompt))
    coords = [(name, idx) for name, arr in slots for idx in np.ndindex(arr.shape)]
    if max_coords is not None and len(coords) > max(max_coords, 200):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max(max_coords, 200), replace=False)
        coords = [coords[i] for i in sorted(pick)]
    analytic = dict(slots)

    worst = (-1.0, "", (), 0.0, 0.0)
    probe = params.copy()
    for name, idx in coords:
        arr = getattr(probe, name)
        orig = arr[idx]
        arr[idx] = orig + step
        f = forward(probe, batch)
        lp = loss_total(f.probs, batch.labels, f.text_reps, f.image_reps, weights, E_W, E_H).total
        arr[idx] = orig - step
        f = forward(probe, batch)
        lm = loss_total(f.probs, batch.labels, f.text_reps, f.image_reps, weights, E_W, E_H).total
        arr[idx] = orig
        fd = (lp - lm) / (2 * step)
        a = float(analytic[name][idx])
        err = abs(a - fd) / max(1.0, abs(fd))
        if err > worst[0]:
            worst = (err, name, idx, a, fd)
    return GradCheckReport(worst[0], worst[1], tuple(int(i) for i in worst[2]), worst[3], worst[4], len(coords), step)
