"""Plain gradient descent on the learnable prompts, with per-step diagnostics."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .losses import Batch, LossWeights, forward, param_gradients
from .metrics import collapse_report
from .model import DegenerateEncodingError, ModelParams, encode_image, encode_text

log = logging.getLogger(__name__)

METHODS = ("baseline", "npt")


class NumericalAbort(ArithmeticError):
    """Training hit a non-finite loss or gradient."""

    def __init__(self, step: int, snapshot: dict):
        super().__init__(f"non-finite value at step {step}: {snapshot}")
        self.step = step
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    learning_rate: float = 0.1
    batch_size: int | None = None  # None: full batch
    weights: LossWeights = LossWeights()
    method: str = "npt"
    seed: int = 0
    record_every: int = 25
    E_W: float = 1.0
    E_H: float = 1.0

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def effective_weights(self) -> LossWeights:
        return LossWeights(0.0, 0.0) if self.method == "baseline" else self.weights


BASE_COLUMNS = ("step", "loss_total", "loss_clip", "loss_lc", "loss_mi", "grad_norm",
                "delta_lcd", "mid_error", "nc1", "nc2", "nc3", "base_train_acc")


@dataclass
class Trajectory:
    class_ids: tuple[int, ...]
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> tuple[str, ...]:
        per_class = []
        for k in self.class_ids:
            per_class += [f"cohesion_{k}", f"repulsion_{k}"]
        return BASE_COLUMNS + tuple(per_class)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (r[k] if k == "step" else repr(float(r[k]))) for k in self.columns})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _record(step, fwd, pg, batch) -> dict:
    rep = collapse_report(fwd.text_reps, fwd.image_reps, batch.labels)
    acc = float(np.mean(np.argmax(fwd.image_reps @ fwd.text_reps.T, axis=1) == batch.labels))
    row = {
        "step": step,
        "loss_total": pg.losses.total,
        "loss_clip": pg.losses.clip,
        "loss_lc": pg.losses.lc,
        "loss_mi": pg.losses.mi,
        "grad_norm": pg.norm(),
        "delta_lcd": rep.delta_lcd,
        "mid_error": rep.mid_error,
        "nc1": rep.nc1,
        "nc2": rep.nc2,
        "nc3": rep.nc3,
        "base_train_acc": acc,
    }
    for j, k in enumerate(batch.class_ids):
        row[f"cohesion_{k}"] = float(pg.reps.cohesion_norm[j])
        row[f"repulsion_{k}"] = float(pg.reps.repulsion_norm[j])
    return row


def train(params: ModelParams, train_set: Dataset, config: TrainConfig,
          class_ids=None) -> tuple[ModelParams, Trajectory]:
    """Run gradient descent on a copy of ``params``; the input is left untouched.

    ``class_ids`` defaults to the sorted labels present in ``train_set``.
    Rows are recorded at step 0, every ``record_every`` steps, and after the
    final update.
    """
    config.validate()
    if class_ids is None:
        class_ids = np.unique(train_set.labels)
    full = Batch.from_global(train_set.raw_features, train_set.labels, class_ids)
    weights = config.effective_weights
    p = params.copy()
    traj = Trajectory(tuple(int(k) for k in full.class_ids))
    rng = np.random.default_rng(config.seed)
    N = len(full.labels)

    def step_grads(step, batch):
        try:
            fwd = forward(p, batch)
        except DegenerateEncodingError as e:
            raise NumericalAbort(step, {"encoding": str(e)}) from e
        return fwd, param_gradients(p, batch, weights, config.E_W, config.E_H, fwd=fwd)

    def check(step, pg):
        if not np.isfinite(pg.losses.total) or not np.isfinite(pg.norm()):
            raise NumericalAbort(step, {"loss": pg.losses, "grad_norm": pg.norm()})

    for step in range(config.steps):
        if config.batch_size is None or config.batch_size >= N:
            batch = full
        else:
            idx = np.sort(rng.choice(N, size=config.batch_size, replace=False))
            batch = Batch(full.raw_features[idx], full.labels[idx], full.class_ids)
        fwd, pg = step_grads(step, batch)
        check(step, pg)
        if step % config.record_every == 0:
            if batch is not full:
                fwd, pg_full = step_grads(step, full)
                traj.rows.append(_record(step, fwd, pg_full, full))
            else:
                traj.rows.append(_record(step, fwd, pg, full))
        p.step(pg.context_tokens, pg.vision_prompt, config.learning_rate)

    fwd, pg = step_grads(config.steps, full)
    check(config.steps, pg)
    traj.rows.append(_record(config.steps, fwd, pg, full))
    return p, traj


def predict(params: ModelParams, raw_features, class_ids) -> np.ndarray:
    """Predicted global class ids, choosing only among ``class_ids``.

    The softmax is monotone in the similarities, so argmax over
    similarities gives the same labels for every temperature.
    """
    class_ids = np.asarray(class_ids, dtype=np.int64)
    g, _ = encode_text(params, class_ids)
    z, _ = encode_image(params, raw_features)
    return class_ids[np.argmax(z @ g.T, axis=1)]


def evaluate(params: ModelParams, test_set: Dataset, class_ids, lambda_temp: float | None = None) -> float:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if not np.all(np.isin(test_set.labels, class_ids)):
        raise ValueError("test labels fall outside class_ids")
    pred = predict(params, test_set.raw_features, class_ids)
    return float(np.mean(pred == test_set.labels))


def harmonic_mean(base_acc: float, novel_acc: float) -> float:
    if not (0 <= base_acc <= 1 and 0 <= novel_acc <= 1):
        raise ValueError("accuracies must lie in [0, 1]")
    if base_acc == 0 or novel_acc == 0:
        if base_acc == novel_acc == 0:
            log.info("harmonic mean of two zero accuracies defined as 0")
        return 0.0
    return 2 * base_acc * novel_acc / (base_acc + novel_acc)
