"""Synthetic labeled datasets with long-tailed class counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import build_etf


@dataclass(frozen=True)
class ImbalanceProfile:
    counts: tuple[int, ...]
    requested_tau: float
    n_max: int

    @property
    def realized_tau(self) -> float:
        return min(self.counts) / max(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def imbalance_profile(K: int, n_max: int = 16, tau: float = 1.0) -> ImbalanceProfile:
    """Exponentially decaying per-class counts from ``n_max`` down to ``n_max * tau``.

    Counts are rounded half-up and clamped at 1, so the realized ratio can
    exceed the requested one for very small tau.

    >>> imbalance_profile(5, 16, 0.01).counts
    (16, 5, 2, 1, 1)
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if K < 1 or n_max < 1:
        raise ValueError(f"K and n_max must be >= 1, got K={K}, n_max={n_max}")
    if K == 1:
        return ImbalanceProfile((n_max,), tau, n_max)
    counts = tuple(max(1, _round_half_up(n_max * tau ** (k / (K - 1)))) for k in range(K))
    return ImbalanceProfile(counts, tau, n_max)


@dataclass(frozen=True)
class ClassSplit:
    base_ids: tuple[int, ...]
    novel_ids: tuple[int, ...]


def base_novel_split(K_total: int) -> ClassSplit:
    """First ceil(K/2) classes are base, the rest novel."""
    if K_total < 2:
        raise ValueError(f"need at least 2 classes to split, got {K_total}")
    nb = (K_total + 1) // 2
    return ClassSplit(tuple(range(nb)), tuple(range(nb, K_total)))


DIRECTION_MODES = ("random-unit", "etf", "anchored")
_STREAM = {"directions": 0, "train": 1, "test": 2}


@dataclass(frozen=True)
class GeneratorConfig:
    """How raw features are drawn.

    ``anchored`` places class directions near the pull-back of the frozen
    text encoder's zero-prompt class reps (plus a shared ``modality_gap``
    offset), so the untuned model already classifies above chance; the
    remaining ``1 - alignment**2`` of each direction is random.
    """

    raw_dim: int = 32
    K_total: int = 10
    direction_mode: str = "anchored"
    noise_sigma: float = 0.3
    alignment: float = 1.0
    modality_gap: float = 1.0
    test_count: int = 50

    def validate(self) -> None:
        if self.direction_mode not in DIRECTION_MODES:
            raise ValueError(f"direction_mode must be one of {DIRECTION_MODES}, got {self.direction_mode!r}")
        if self.raw_dim < 1 or self.K_total < 1:
            raise ValueError("raw_dim and K_total must be >= 1")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.alignment <= 1:
            raise ValueError(f"alignment must lie in [0, 1], got {self.alignment}")
        if self.test_count < 1:
            raise ValueError("test_count must be >= 1")


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def anchor_directions(params, modality_gap: float, seed: int) -> np.ndarray:
    """Raw-space directions whose images line up with the zero-prompt text reps.

    Each class's text rep (context tokens zeroed) is shifted by one shared
    random offset of length ``modality_gap`` and mapped back to raw space
    with the transpose of the frozen vision map.
    """
    from .model import encode_text

    cfg = params.config
    zero = params.copy()
    zero.context_tokens = np.zeros_like(zero.context_tokens)
    g, _ = encode_text(zero, np.arange(cfg.K_total))
    rng = np.random.default_rng([seed, 3])
    offset = rng.standard_normal(cfg.d)
    offset *= modality_gap / np.linalg.norm(offset)
    return _unit_rows((g + offset) @ params.vision_backbone)


def class_directions(config: GeneratorConfig, seed: int, anchors: np.ndarray | None = None) -> np.ndarray:
    """One unit direction per class, K_total x raw_dim, deterministic per seed."""
    config.validate()
    rng = np.random.default_rng([seed, _STREAM["directions"]])
    K, D = config.K_total, config.raw_dim
    if config.direction_mode == "etf":
        return build_etf(K, D, seed).vectors.copy()
    random_dirs = _unit_rows(rng.standard_normal((K, D)))
    if config.direction_mode == "random-unit":
        return random_dirs
    if anchors is None:
        raise ValueError("anchored directions need anchors (see anchor_directions)")
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.shape != (K, D):
        raise ValueError(f"anchors must be {K}x{D}, got {anchors.shape}")
    a = config.alignment
    return _unit_rows(a * _unit_rows(anchors) + np.sqrt(1 - a * a) * random_dirs)


@dataclass
class Dataset:
    raw_features: np.ndarray
    labels: np.ndarray
    split_tag: str
    descriptor: dict = field(default_factory=dict)
    profile: ImbalanceProfile | None = None

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        ids, n = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, n)}

    def subset(self, class_ids) -> "Dataset":
        mask = np.isin(self.labels, np.asarray(class_ids))
        return Dataset(self.raw_features[mask], self.labels[mask], self.split_tag, dict(self.descriptor))

    def save(self, path) -> None:
        """Columnar text: one header line, then ``label,f1,...,fD`` per sample."""
        counts = self.class_counts()
        head = {
            "format": "nptlab-dataset/1",
            "split": self.split_tag,
            "raw_dim": int(self.raw_features.shape[1]),
            "n": len(self),
            "counts": ";".join(f"{k}:{v}" for k, v in counts.items()),
            **{k: v for k, v in self.descriptor.items() if k not in ("counts",)},
        }
        with open(path, "w") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in head.items()) + "\n")
            for y, x in zip(self.labels, self.raw_features):
                fh.write(str(int(y)) + "," + ",".join(repr(float(v)) for v in x) + "\n")

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("# "):
                raise ValueError("missing dataset header line")
            head = dict(kv.split("=", 1) for kv in header[2:].split())
            labels, rows = [], []
            for line in fh:
                if line.strip():
                    first, *rest = line.rstrip("\n").split(",")
                    labels.append(int(first))
                    rows.append([float(v) for v in rest])
        D = int(head.pop("raw_dim"))
        X = np.array(rows, dtype=np.float64).reshape(-1, D)
        split = head.pop("split")
        for k in ("format", "n", "counts"):
            head.pop(k, None)
        return cls(X, np.array(labels, dtype=np.int64), split, head)


def generate_dataset(config: GeneratorConfig, counts, seed: int, split: str = "train",
                     class_ids=None, directions: np.ndarray | None = None) -> Dataset:
    """Draw x = s_k + sigma * eps for each requested sample.

    ``counts`` is an ImbalanceProfile, a sequence aligned with ``class_ids``
    or a single int for a balanced set.  ``class_ids`` defaults to
    ``range(len(counts))`` (or all classes for an int).
    """
    config.validate()
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    profile = counts if isinstance(counts, ImbalanceProfile) else None
    if profile is not None:
        per_class = list(profile.counts)
    elif isinstance(counts, (int, np.integer)):
        n_ids = config.K_total if class_ids is None else len(class_ids)
        per_class = [int(counts)] * n_ids
    else:
        per_class = [int(c) for c in counts]
    if class_ids is None:
        class_ids = range(len(per_class))
    class_ids = np.asarray(list(class_ids), dtype=np.int64)
    if len(class_ids) != len(per_class):
        raise ValueError("counts and class_ids differ in length")
    if class_ids.size and (class_ids.min() < 0 or class_ids.max() >= config.K_total):
        raise ValueError(f"class ids must lie in [0, {config.K_total})")
    if any(c < 0 for c in per_class):
        raise ValueError("negative class count")
    if directions is None:
        directions = class_directions(config, seed)

    labels = np.repeat(class_ids, per_class)
    rng = np.random.default_rng([seed, _STREAM[split]])
    noise = rng.standard_normal((len(labels), config.raw_dim))
    X = directions[labels] + config.noise_sigma * noise
    descriptor = {
        "direction_mode": config.direction_mode,
        "noise_sigma": config.noise_sigma,
        "alignment": config.alignment,
        "modality_gap": config.modality_gap,
        "seed": seed,
    }
    return Dataset(X, labels, split, descriptor, profile)
