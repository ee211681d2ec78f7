"""Collapse diagnostics for paired text/image representations.

Representations are stored as rows: ``text_reps`` is K x d (one row per
class), ``image_reps`` is N x d with integer ``labels`` in [0, K).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import etf_target_gram, gram_distance


class DegenerateGeometryError(ValueError):
    pass


class EmptyClassError(ValueError):
    def __init__(self, cls: int):
        super().__init__(f"class {cls} has no samples")
        self.cls = cls


def _check_labels(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K}), got range [{labels.min()}, {labels.max()}]")
    return labels


def delta_lcd(text_reps, E_W: float = 1.0) -> float:
    """Mean over ordered pairs i != j of <g_i, g_j> - E_W * mu, mu = -1/(K-1).

    Zero for an exact simplex ETF; larger values mean the text
    representations crowd together.
    """
    g = np.asarray(text_reps, dtype=np.float64)
    K = g.shape[0]
    if K < 2:
        raise ValueError(f"need at least 2 text reps, got {K}")
    G = g @ g.T
    off_mean = (G.sum() - np.trace(G)) / (K * (K - 1))
    return float(off_mean + E_W / (K - 1))


def delta_mid(image_reps, labels, text_reps, E_W: float = 1.0, E_H: float = 1.0) -> tuple[float, float]:
    """Signed mean of <z_n, g_{y_n}> - sqrt(E_W E_H), and its magnitude."""
    z = np.atleast_2d(np.asarray(image_reps, dtype=np.float64))
    g = np.asarray(text_reps, dtype=np.float64)
    if z.shape[0] == 0:
        raise ValueError("empty image set")
    labels = _check_labels(labels, g.shape[0])
    sims = np.einsum("nd,nd->n", z, g[labels])
    signed = float(np.mean(sims) - np.sqrt(E_W * E_H))
    return signed, -signed


def class_prototypes(image_reps, labels, K: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-class means (K x d) and the global mean of all image reps."""
    z = np.atleast_2d(np.asarray(image_reps, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if K is None:
        K = int(labels.max()) + 1
    labels = _check_labels(labels, K)
    counts = np.bincount(labels, minlength=K)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyClassError(int(empty[0]))
    sums = np.zeros((K, z.shape[1]))
    np.add.at(sums, labels, z)
    return sums / counts[:, None], z.mean(axis=0)


def feature_collapse_nc1(image_reps, labels, K: int | None = None) -> float:
    """Average over classes of trace of the within-class covariance."""
    z = np.atleast_2d(np.asarray(image_reps, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    protos, _ = class_prototypes(z, labels, K)
    resid = z - protos[labels]
    per_class = np.bincount(labels, weights=np.einsum("nd,nd->n", resid, resid), minlength=len(protos))
    counts = np.bincount(labels, minlength=len(protos))
    return float(np.mean(per_class / counts))


def centered_prototypes(image_reps, labels, K: int | None = None) -> np.ndarray:
    """Prototypes minus the global mean, each scaled to unit length."""
    protos, zG = class_prototypes(image_reps, labels, K)
    centered = protos - zG
    norms = np.linalg.norm(centered, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DegenerateGeometryError(f"prototype of class {bad[0]} coincides with the global mean")
    return centered / norms[:, None]


def prototype_collapse_nc2(image_reps, labels, K: int | None = None) -> float:
    zt = centered_prototypes(image_reps, labels, K)
    if zt.shape[0] < 2:
        raise ValueError("prototype collapse needs K >= 2")
    return gram_distance(zt, etf_target_gram(zt.shape[0]))


def classifier_collapse_nc3(text_reps, image_reps, labels) -> float:
    """Mean distance between normalized text reps and centered-normalized prototypes."""
    g = np.asarray(text_reps, dtype=np.float64)
    zt = centered_prototypes(image_reps, labels, g.shape[0])
    gt = g / np.linalg.norm(g, axis=1, keepdims=True)
    return float(np.mean(np.linalg.norm(gt - zt, axis=1)))


REPORT_FIELDS = (
    "delta_lcd", "delta_mid_signed", "mid_error", "nc1", "nc2", "nc3",
    "text_norm_mean", "text_norm_std", "text_cos_mean", "text_cos_min", "text_cos_max",
)


@dataclass
class CollapseReport:
    delta_lcd: float
    delta_mid_signed: float
    mid_error: float
    nc1: float
    nc2: float
    nc3: float
    text_norm_mean: float
    text_norm_std: float
    text_cos_mean: float
    text_cos_min: float
    text_cos_max: float
    per_class_norms: list[float] = field(default_factory=list)

    def flat(self) -> dict:
        """Scalar fields only, in the fixed column order."""
        return {k: getattr(self, k) for k in REPORT_FIELDS}

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    def to_csv_row(self, header: bool = False) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow({k: repr(v) for k, v in self.flat().items()})
        return buf.getvalue()


def collapse_report(text_reps, image_reps, labels, E_W: float = 1.0, E_H: float = 1.0) -> CollapseReport:
    """Compute every collapse diagnostic for one split.

    Prototype-based metrics (nc2, nc3) come out as NaN when the geometry is
    degenerate rather than aborting the whole report.
    """
    g = np.asarray(text_reps, dtype=np.float64)
    K = g.shape[0]
    signed, err = delta_mid(image_reps, labels, g, E_W, E_H)
    try:
        nc2 = prototype_collapse_nc2(image_reps, labels, K)
        nc3 = classifier_collapse_nc3(g, image_reps, labels)
    except DegenerateGeometryError:
        nc2 = nc3 = float("nan")
    norms = np.linalg.norm(g, axis=1)
    gn = g / norms[:, None]
    cos = (gn @ gn.T)[~np.eye(K, dtype=bool)]
    return CollapseReport(
        delta_lcd=delta_lcd(g, E_W),
        delta_mid_signed=signed,
        mid_error=err,
        nc1=feature_collapse_nc1(image_reps, labels, K),
        nc2=nc2,
        nc3=nc3,
        text_norm_mean=float(norms.mean()),
        text_norm_std=float(norms.std()),
        text_cos_mean=float(cos.mean()),
        text_cos_min=float(cos.min()),
        text_cos_max=float(cos.max()),
        per_class_norms=norms.tolist(),
    )
