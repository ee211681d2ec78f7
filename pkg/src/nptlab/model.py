"""Toy frozen-backbone dual encoder with learnable prompt vectors.

Text side: class k is the token sequence (u_1, ..., u_b, c_k); the flattened
tokens go through a frozen linear map and are normalized.  Image side: a raw
feature vector goes through a frozen linear map, optionally plus a frozen
injection of one learnable vision-prompt vector, and is normalized.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class DegenerateEncodingError(ArithmeticError):
    pass


class StaleCacheError(RuntimeError):
    """An EncodeCache was used with parameters it was not produced from."""


@dataclass(frozen=True)
class ModelConfig:
    d_e: int = 16
    b: int = 4
    d: int = 32
    K_total: int = 10
    raw_dim: int = 32
    lambda_temp: float = 0.05
    vision_prompt_enabled: bool = False
    init_seed: int = 0

    def validate(self) -> None:
        for name in ("d_e", "b", "d", "K_total", "raw_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d < self.K_total:
            raise ValueError(f"need d >= K_total, got d={self.d}, K_total={self.K_total}")
        if not self.lambda_temp > 0:
            raise ValueError(f"lambda_temp must be positive, got {self.lambda_temp}")


@dataclass
class ModelParams:
    config: ModelConfig
    context_tokens: np.ndarray  # (b, d_e), learnable
    vision_prompt: np.ndarray  # (d_e,), learnable when enabled
    class_embeddings: np.ndarray  # (K_total, d_e), frozen
    text_backbone: np.ndarray  # (d, (b+1)*d_e), frozen
    vision_backbone: np.ndarray  # (d, raw_dim), frozen
    prompt_injection: np.ndarray  # (d, d_e), frozen
    version: int = field(default=0, compare=False)

    FROZEN = ("class_embeddings", "text_backbone", "vision_backbone", "prompt_injection")

    @property
    def lambda_temp(self) -> float:
        return self.config.lambda_temp

    def copy(self) -> "ModelParams":
        arrays = {k: getattr(self, k).copy() for k in ("context_tokens", "vision_prompt", *self.FROZEN)}
        return ModelParams(config=self.config, version=self.version, **arrays)

    def step(self, d_context: np.ndarray, d_vision: np.ndarray | None, lr: float) -> None:
        """In-place gradient step on the learnable parameters only."""
        self.context_tokens = self.context_tokens - lr * d_context
        if d_vision is not None and self.config.vision_prompt_enabled:
            self.vision_prompt = self.vision_prompt - lr * d_vision
        self.version += 1


def init_model(config: ModelConfig) -> ModelParams:
    """Draw frozen maps with std 1/sqrt(fan_in) and context tokens with std 0.02."""
    config.validate()
    rng = np.random.default_rng(config.init_seed)
    c = config
    fan_text = (c.b + 1) * c.d_e
    text_backbone = rng.standard_normal((c.d, fan_text)) / np.sqrt(fan_text)
    vision_backbone = rng.standard_normal((c.d, c.raw_dim)) / np.sqrt(c.raw_dim)
    prompt_injection = rng.standard_normal((c.d, c.d_e)) / np.sqrt(c.d_e)
    # class-name stand-ins: unit-variance entries, like word embeddings
    class_embeddings = rng.standard_normal((c.K_total, c.d_e))
    context_tokens = 0.02 * rng.standard_normal((c.b, c.d_e))
    return ModelParams(
        config=c,
        context_tokens=context_tokens,
        vision_prompt=np.zeros(c.d_e),
        class_embeddings=class_embeddings,
        text_backbone=text_backbone,
        vision_backbone=vision_backbone,
        prompt_injection=prompt_injection,
    )


@dataclass(frozen=True)
class EncodeCache:
    """What backprop through normalization needs: outputs and pre-norm lengths."""

    kind: str  # "text" or "image"
    reps: np.ndarray
    norms: np.ndarray
    params_version: int
    params_id: int
    class_ids: np.ndarray | None = None

    def check(self, params: ModelParams, kind: str) -> None:
        if self.kind != kind:
            raise StaleCacheError(f"expected a {kind} cache, got {self.kind}")
        if self.params_id != id(params) or self.params_version != params.version:
            raise StaleCacheError("cache was produced from different or since-updated parameters")


def _normalize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateEncodingError("pre-normalization vector is zero or non-finite")
    return x / norms[:, None], norms


def text_tokens(params: ModelParams, class_ids) -> np.ndarray:
    """Flattened prompts t_k = (u_1, ..., u_b, c_k), one row per class id."""
    ids = np.asarray(class_ids, dtype=np.int64)
    K = params.config.K_total
    if ids.size and (ids.min() < 0 or ids.max() >= K):
        raise ValueError(f"class ids must lie in [0, {K})")
    ctx = np.broadcast_to(params.context_tokens.ravel(), (len(ids), params.context_tokens.size))
    return np.concatenate([ctx, params.class_embeddings[ids]], axis=1)


def encode_text(params: ModelParams, class_ids) -> tuple[np.ndarray, EncodeCache]:
    ids = np.asarray(class_ids, dtype=np.int64)
    pre = text_tokens(params, ids) @ params.text_backbone.T
    reps, norms = _normalize(pre)
    return reps, EncodeCache("text", reps, norms, params.version, id(params), ids)


def encode_image(params: ModelParams, raw_features) -> tuple[np.ndarray, EncodeCache]:
    x = np.atleast_2d(np.asarray(raw_features, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty image batch")
    pre = x @ params.vision_backbone.T
    if params.config.vision_prompt_enabled:
        pre = pre + params.prompt_injection @ params.vision_prompt
    reps, norms = _normalize(pre)
    return reps, EncodeCache("image", reps, norms, params.version, id(params))


def predict_probs(image_reps, text_reps, lambda_temp: float) -> np.ndarray:
    """Softmax over classes of <z_n, g_k> / lambda; rows sum to one."""
    logits = np.atleast_2d(image_reps) @ np.atleast_2d(text_reps).T / lambda_temp
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def save_checkpoint(params: ModelParams, path) -> None:
    """Write all tensors plus the config to an .npz file (bit-exact round trip)."""
    meta = {"format_version": CHECKPOINT_VERSION, "config": asdict(params.config), "version": params.version}
    arrays = {k: getattr(params, k) for k in ("context_tokens", "vision_prompt", *ModelParams.FROZEN)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as f:
        meta = json.loads(str(f["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        arrays = {k: f[k].copy() for k in ("context_tokens", "vision_prompt", *ModelParams.FROZEN)}
    return ModelParams(config=ModelConfig(**meta["config"]), version=meta["version"], **arrays)


def with_config(params: ModelParams, **changes) -> ModelParams:
    """Copy of ``params`` with config fields replaced (e.g. toggling the vision prompt)."""
    p = params.copy()
    p.config = replace(params.config, **changes)
    return p
