"""Base-to-novel protocol at toy scale, seed sweeps, and their reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (Dataset, GeneratorConfig, anchor_directions, base_novel_split, class_directions,
                   generate_dataset, imbalance_profile)
from .geometry import random_partial_rotation
from .losses import LossWeights
from .metrics import REPORT_FIELDS, collapse_report
from .model import ModelConfig, encode_image, encode_text, init_model
from .plots import projection_svg, scatter_svg
from .train import METHODS, TrainConfig, evaluate, harmonic_mean, train

log = logging.getLogger(__name__)

COLLAPSE_KEYS = ("delta_lcd", "delta_mid_signed", "mid_error", "nc1", "nc2", "nc3")
RUN_COLUMNS = (
    "tau", "method", "w1", "w2", "seed", "status", "error", "train_counts", "realized_tau",
    "base_acc", "novel_acc", "harmonic_mean", "shifted_novel_acc",
    "loss_total", "loss_clip", "loss_lc", "loss_mi",
    *(f"base_{k}" for k in COLLAPSE_KEYS), *(f"novel_{k}" for k in COLLAPSE_KEYS),
)
NUMERIC = tuple(c for c in RUN_COLUMNS if c not in ("method", "status", "error", "train_counts", "seed"))
OUTPUT_FILES = ("runs.csv", "aggregate.json", "fig_lcd.svg", "fig_mid.svg", "fig_reps.svg", "config_echo.json")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = ModelConfig()
    data: GeneratorConfig = GeneratorConfig()
    taus: tuple[float, ...] = (1.0, 0.05, 0.01)
    methods: tuple[str, ...] = ("baseline", "npt")
    seeds: tuple[int, ...] = tuple(range(10))
    train: TrainConfig = TrainConfig()
    n_max: int = 16
    weight_grid: tuple[tuple[float, float], ...] | None = None
    shifted_eval: bool = False
    out_dir: str = "runs"
    workers: int = 1

    def validate(self) -> None:
        if not self.taus or any(not 0 < t <= 1 for t in self.taus):
            raise ValueError(f"taus must be a nonempty list in (0, 1], got {self.taus}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.data.K_total != self.model.K_total:
            raise ValueError("data.K_total and model.K_total differ")
        if self.data.raw_dim != self.model.raw_dim:
            raise ValueError("data.raw_dim and model.raw_dim differ")
        self.model.validate()
        self.data.validate()
        self.train.validate()

    def npt_weights(self) -> list[LossWeights]:
        if self.weight_grid is None:
            return [self.train.weights]
        return [LossWeights(float(a), float(b)) for a, b in self.weight_grid]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("taus", "methods", "seeds"):
            d[k] = list(d[k])
        if d["weight_grid"] is not None:
            d["weight_grid"] = [list(w) for w in d["weight_grid"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kw = {}
        if "model" in d:
            kw["model"] = ModelConfig(**d.pop("model"))
        if "data" in d:
            kw["data"] = GeneratorConfig(**d.pop("data"))
        if "train" in d:
            t = dict(d.pop("train"))
            if "weights" in t:
                t["weights"] = LossWeights(**t["weights"])
            kw["train"] = TrainConfig(**t)
        for k in ("taus", "methods", "seeds"):
            if k in d:
                kw[k] = tuple(d.pop(k))
        if d.get("weight_grid") is not None:
            kw["weight_grid"] = tuple(tuple(w) for w in d.pop("weight_grid"))
        kw.update(d)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CellData:
    """Everything a (tau, seed) cell shares across methods."""

    params: object
    train_set: Dataset
    test_base: Dataset
    test_novel: Dataset
    shifted_novel: Dataset | None
    split: object
    profile: object


def prepare_cell(config: ExperimentConfig, tau: float, seed: int) -> CellData:
    """Initial parameters and datasets for one cell; identical for every method."""
    mcfg = replace(config.model, init_seed=seed)
    params = init_model(mcfg)
    gcfg = config.data
    anchors = anchor_directions(params, gcfg.modality_gap, seed) if gcfg.direction_mode == "anchored" else None
    dirs = class_directions(gcfg, seed, anchors)
    split = base_novel_split(mcfg.K_total)
    profile = imbalance_profile(len(split.base_ids), config.n_max, tau)
    train_set = generate_dataset(gcfg, profile, seed, "train", split.base_ids, dirs)
    test = generate_dataset(gcfg, gcfg.test_count, seed, "test", range(mcfg.K_total), dirs)
    shifted = None
    if config.shifted_eval:
        # same class directions seen through a fixed rotation with doubled noise
        shift_cfg = replace(gcfg, noise_sigma=2 * gcfg.noise_sigma)
        s = generate_dataset(shift_cfg, gcfg.test_count, seed + 7919, "test", split.novel_ids, dirs)
        rot = random_partial_rotation(gcfg.raw_dim, gcfg.raw_dim, seed + 104729)
        shifted = Dataset(s.raw_features @ rot.T, s.labels, "test", {**s.descriptor, "shifted": True})
    return CellData(params, train_set, test.subset(split.base_ids), test.subset(split.novel_ids),
                    shifted, split, profile)


def _split_report(params, ds: Dataset, class_ids, E_W, E_H):
    class_ids = np.asarray(class_ids)
    g, _ = encode_text(params, class_ids)
    z, _ = encode_image(params, ds.raw_features)
    local = np.searchsorted(class_ids, ds.labels)
    return collapse_report(g, z, local, E_W, E_H), (g, z, local)


def run_base_to_novel(config: ExperimentConfig, tau: float, method: str, seed: int,
                      weights: LossWeights | None = None, keep_reps: bool = False,
                      cell: CellData | None = None) -> dict:
    """Train on the imbalanced base classes and evaluate both splits.

    Returns one row keyed by RUN_COLUMNS.  With ``keep_reps`` the row also
    carries the novel-split representations under ``"_novel_reps"``.
    """
    tcfg = replace(config.train, method=method, seed=seed,
                   weights=weights if weights is not None else config.train.weights)
    eff = tcfg.effective_weights
    row = {k: float("nan") for k in RUN_COLUMNS}
    row.update(tau=float(tau), method=method, w1=eff.w1, w2=eff.w2, seed=int(seed), status="ok", error="")
    try:
        cell = cell or prepare_cell(config, tau, seed)
        row["train_counts"] = "/".join(str(c) for c in cell.profile.counts)
        row["realized_tau"] = cell.profile.realized_tau
        trained, traj = train(cell.params, cell.train_set, tcfg, class_ids=cell.split.base_ids)
        last = traj.rows[-1]
        for k in ("loss_total", "loss_clip", "loss_lc", "loss_mi"):
            row[k] = last[k]
        base_acc = evaluate(trained, cell.test_base, cell.split.base_ids)
        novel_acc = evaluate(trained, cell.test_novel, cell.split.novel_ids)
        row.update(base_acc=base_acc, novel_acc=novel_acc, harmonic_mean=harmonic_mean(base_acc, novel_acc))
        if cell.shifted_novel is not None:
            row["shifted_novel_acc"] = evaluate(trained, cell.shifted_novel, cell.split.novel_ids)
        E_W, E_H = tcfg.E_W, tcfg.E_H
        base_rep, _ = _split_report(trained, cell.test_base, cell.split.base_ids, E_W, E_H)
        novel_rep, reps = _split_report(trained, cell.test_novel, cell.split.novel_ids, E_W, E_H)
        for k in COLLAPSE_KEYS:
            row[f"base_{k}"] = getattr(base_rep, k)
            row[f"novel_{k}"] = getattr(novel_rep, k)
        if keep_reps:
            row["_novel_reps"] = reps
    except Exception as e:  # a failed cell is recorded, not dropped
        log.exception("run failed: tau=%s method=%s seed=%s", tau, method, seed)
        row.update(status="failed", error=f"{type(e).__name__}: {e}".replace("\n", " "))
    return row


def _cell_job(args) -> list[dict]:
    config, tau, seed, plan, keep = args
    try:
        cell = prepare_cell(config, tau, seed)
    except Exception:
        cell = None
    return [run_base_to_novel(config, tau, m, seed, w, keep_reps=keep, cell=cell) for m, w in plan]


def _sort_key(r: dict):
    return (r["tau"], r["method"], r["w1"], r["w2"], r["seed"])


@dataclass
class ExperimentReport:
    rows: list[dict]
    config: ExperimentConfig | None = None
    projections: dict = field(default_factory=dict)

    @property
    def ok_rows(self) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok"]

    @property
    def n_failed(self) -> int:
        return sum(r["status"] != "ok" for r in self.rows)

    def select(self, **match) -> list[dict]:
        return [r for r in self.ok_rows if all(r[k] == v for k, v in match.items())]

    def aggregates(self) -> dict:
        """Mean/std over seeds per (tau, method, w1, w2) group, plus NPT win rates."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["tau"], r["method"], r["w1"], r["w2"]), []).append(r)
        out = {"groups": [], "win_rates": []}
        for (tau, method, w1, w2), rs in sorted(groups.items()):
            ok = [r for r in rs if r["status"] == "ok"]
            entry = {"tau": tau, "method": method, "w1": w1, "w2": w2,
                     "n_ok": len(ok), "n_failed": len(rs) - len(ok)}
            for k in NUMERIC:
                if k in ("tau", "w1", "w2"):
                    continue
                vals = np.array([r[k] for r in ok], dtype=float)
                vals = vals[np.isfinite(vals)]
                entry[f"mean_{k}"] = float(vals.mean()) if vals.size else None
                entry[f"std_{k}"] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else None)
            out["groups"].append(entry)
        for tau in sorted({r["tau"] for r in self.rows}):
            base = {r["seed"]: r["harmonic_mean"] for r in self.select(tau=tau, method="baseline")}
            for w1, w2 in sorted({(r["w1"], r["w2"]) for r in self.select(tau=tau, method="npt")}):
                npt = {r["seed"]: r["harmonic_mean"] for r in self.select(tau=tau, method="npt", w1=w1, w2=w2)}
                common = sorted(set(base) & set(npt))
                if common:
                    wins = sum(npt[s] > base[s] for s in common)
                    out["win_rates"].append({"tau": tau, "w1": w1, "w2": w2, "wins": wins,
                                             "n": len(common), "win_rate": wins / len(common)})
        return out

    def group_mean(self, key: str, **match) -> float:
        vals = [r[key] for r in self.select(**match)]
        if not vals:
            raise KeyError(f"no successful rows match {match}")
        return float(np.mean(vals))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RUN_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in sorted(self.rows, key=_sort_key):
            w.writerow({k: (repr(float(r[k])) if k in NUMERIC else r[k]) for k in RUN_COLUMNS})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path, check_aggregate: bool = True) -> "ExperimentReport":
        """Load runs.csv; if an aggregate.json sits next to it, verify it matches."""
        path = Path(path)
        with open(path, newline="") as fh:
            rows = []
            for raw in csv.DictReader(fh):
                r = dict(raw)
                for k in NUMERIC:
                    r[k] = float(r[k])
                r["seed"] = int(r["seed"])
                rows.append(r)
        report = cls(rows)
        agg_path = path.with_name("aggregate.json")
        if check_aggregate and agg_path.exists():
            with open(agg_path) as fh:
                stored = json.load(fh)
            if not _same(stored, json.loads(json.dumps(report.aggregates()))):
                raise ValueError(f"{agg_path} does not match the aggregates recomputed from {path.name}")
        return report

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in OUTPUT_FILES}
        paths["runs.csv"].write_text(self.to_csv())
        paths["aggregate.json"].write_text(json.dumps(self.aggregates(), indent=2, sort_keys=True) + "\n")
        echo = {"config": self.config.to_dict() if self.config else None,
                "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "n_rows": len(self.rows), "n_failed": self.n_failed}
        paths["config_echo.json"].write_text(json.dumps(echo, indent=2) + "\n")
        emit_plots(self, out)
        return paths


def _same(a, b, tol: float = 1e-12) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k], tol) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_same(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        return math.isclose(a, b, rel_tol=tol, abs_tol=tol) or (math.isnan(a) and math.isnan(b))
    return a == b


def run_sweep(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run every (tau, method, weights, seed) cell and optionally write outputs.

    Within a (tau, seed) cell all methods share the dataset and the initial
    parameters.  The first seed of each tau keeps novel-split reps for the
    projection figure.
    """
    config.validate()
    plan = []
    for m in config.methods:
        if m == "npt":
            plan += [("npt", w) for w in config.npt_weights()]
        else:
            plan.append((m, None))
    jobs = [(config, tau, seed, plan, seed == config.seeds[0]) for tau in config.taus for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    rows = [r for batch in results for r in batch]
    projections = {}
    for r in rows:
        reps = r.pop("_novel_reps", None)
        if reps is not None:
            projections[(r["tau"], r["method"], r["w1"], r["w2"])] = reps
    report = ExperimentReport(sorted(rows, key=_sort_key), config, projections)
    if out_dir is not None:
        report.write(out_dir)
    return report


def emit_plots(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the collapse-vs-accuracy scatters and, if reps are available, the projection."""
    rows = report.ok_rows
    if not rows:
        raise ValueError("report has no successful rows to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, key, label in (("fig_lcd.svg", "novel_delta_lcd", "novel delta_LCD"),
                             ("fig_mid.svg", "novel_mid_error", "novel MID error")):
        svg = scatter_svg(rows, key, "harmonic_mean", f"{label} vs harmonic mean", label, "harmonic mean")
        (out / name).write_text(svg)
        written.append(out / name)
    if report.projections:
        # most imbalanced tau; prefer the NPT run so the figure shows the regularized geometry
        key = sorted(report.projections, key=lambda k: (k[0], k[1] != "npt", k[2], k[3]))[0]
        g, z, labels = report.projections[key]
        title = f"novel reps, {key[1]} tau={key[0]:g}"
        (out / "fig_reps.svg").write_text(projection_svg(g, z, labels, title))
        written.append(out / "fig_reps.svg")
    return written
