"""Mini-batch training of the clustering MLP on the composite objective, plus ablation/sweep drivers."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import losses
from . import model as mlp
from .config import PLAINNCE, MistConfig, ablation_config
from .datasets import Dataset
from .evaluation import clustering_accuracy
from .graph import TransformSampler, build_sampler, vat_radii

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "step", "r_vat", "h_y", "h_y_given_x", "l_ps", "l_ng",
                  "i_nce", "i_nce_prime", "total", "acc")


@dataclass
class LossBreakdown:
    r_vat: float
    h_y: float
    h_y_given_x: float
    l_ps: float
    l_ng: float
    i_nce_hat: float
    i_nce_hat_prime: float
    d_term: float
    total: float
    weights: dict = field(default_factory=dict)
    floored: int = 0

    def reconstruct(self) -> float:
        w = self.weights
        total = 0.0
        for key in ("r_vat", "h_y", "h_y_given_x", "d_term"):
            if w.get(key, 0.0) != 0.0:
                total += w[key] * getattr(self, key)
        return total

    def row(self) -> dict:
        return {"r_vat": self.r_vat, "h_y": self.h_y, "h_y_given_x": self.h_y_given_x,
                "l_ps": self.l_ps, "l_ng": self.l_ng, "i_nce": self.i_nce_hat,
                "i_nce_prime": self.i_nce_hat_prime, "total": self.total}


def mist_loss(state: mlp.MlpState, x: np.ndarray, xt: np.ndarray, config: MistConfig,
              radii: np.ndarray, rng: np.random.Generator, update_running_stats: bool = True,
              r_adv: Optional[np.ndarray] = None):
    """Evaluate the objective on one batch and its exact parameter gradients.

    ``x`` is the mini-batch, ``xt`` its sampled transformations (row-aligned).
    Both go through one forward pass whose BatchNorm statistics come from the
    ``x`` rows only, so g(x) and g(t(x)) are the same function; the transformed
    rows never touch the running statistics. Passing
    ``r_adv`` fixes the VAT perturbation instead of drawing it from ``rng``.
    Returns ``(LossBreakdown, grads, r_adv)``.
    """
    w = config.weights()
    m = x.shape[0]
    both, cache = mlp.forward(state, np.vstack([x, xt]), train=True,
                             update_running_stats=update_running_stats, n_ref=m)
    z, zt = both[:m], both[m:]
    ct = losses.contrastive_terms(z, zt, config.critic, grads=w["d_term"] != 0.0)
    h_y = losses.marginal_entropy(z)
    h_yx = losses.conditional_entropy(z)
    plain = config.variant == PLAINNCE
    d_term = -ct.i_nce if plain else ct.l_ps + ct.l_ng

    dboth = np.zeros_like(both)
    dz, dzt = dboth[:m], dboth[m:]
    if w["h_y"]:
        dz += w["h_y"] * losses.marginal_entropy_grad(z)
    if w["h_y_given_x"]:
        dz += w["h_y_given_x"] * losses.conditional_entropy_grad(z)
    if w["d_term"]:
        dz += w["d_term"] * (ct.dplain_dZ if plain else ct.dsym_dZ)
        dzt += w["d_term"] * (ct.dplain_dZt if plain else ct.dsym_dZt)

    grads = None
    if w["h_y"] or w["h_y_given_x"] or w["d_term"]:
        grads, _ = mlp.backward(state, cache, dboth)
    r_vat = math.nan
    if w["r_vat"]:
        r_vat, g, r_adv = losses.vat_loss(state, x, radii, config.xi, rng, z_clean=z, r_adv=r_adv)
        grads = mlp.add_grads(grads, g, w["r_vat"])
    if grads is None:
        grads = {k: np.zeros_like(v) for k, v in state.params.items()}

    parts = LossBreakdown(r_vat, h_y, h_yx, ct.l_ps, ct.l_ng, ct.i_nce, ct.i_nce_prime,
                          d_term, 0.0, w, ct.floored)
    parts.total = parts.reconstruct()
    return parts, grads, r_adv


@dataclass
class TrainReport:
    config: dict
    seed: int
    dataset: str
    epochs: list = field(default_factory=list)   # per-epoch mean LossBreakdown rows
    steps: list = field(default_factory=list)    # per-step rows (epoch, step, metrics)
    acc: list = field(default_factory=list)      # per-epoch ACC (%) when labels exist
    labels: Optional[np.ndarray] = None
    wall_clock: float = 0.0
    floored: int = 0

    @property
    def final_acc(self) -> Optional[float]:
        return self.acc[-1] if self.acc else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = None if self.labels is None else self.labels.tolist()
        return d


def write_metrics_csv(report: TrainReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in report.steps:
            w.writerow([row["epoch"], row["step"]] + [
                "" if row.get(c) is None else format(float(row[c]), ".17g") for c in METRIC_COLUMNS[2:]])


def prepare(dataset: Dataset, config: MistConfig, cache_dir=None) -> tuple[TransformSampler, np.ndarray]:
    """Build the transformation sampler and VAT radii for ``dataset``."""
    sampler = build_sampler(dataset, config.sampler, config.k0, config.beta, cache_dir=cache_dir)
    radii = vat_radii(dataset, config.eps_scale, config.eps_rank)
    return sampler, radii


def train(dataset: Dataset, config: MistConfig, sampler: Optional[TransformSampler] = None,
          radii: Optional[np.ndarray] = None, cache_dir=None,
          on_epoch: Optional[Callable[[int, TrainReport], None]] = None):
    """Run the full training loop; returns ``(MlpState, TrainReport)``.

    Each epoch has floor(n/m)+1 steps. Every step draws m distinct points
    uniformly (independently of earlier steps), one transformation per point,
    and applies one Adam update.
    """
    t0 = time.perf_counter()
    n = dataset.n
    m = config.batch_size
    if m > n:
        raise ValueError(f"batch_size {m} exceeds dataset size {n}")
    n_clusters = config.n_clusters or dataset.n_clusters
    if not n_clusters:
        raise ValueError("number of clusters unknown: set n_clusters in the config")
    if sampler is None or radii is None:
        s, r = prepare(dataset, config, cache_dir)
        sampler = sampler if sampler is not None else s
        radii = radii if radii is not None else r
    dtype = np.float32 if config.dtype == "float32" else np.float64
    x_all = dataset.features.astype(dtype)
    state = mlp.init(dataset.d, n_clusters, config.hidden, seed=config.seed, dtype=dtype,
                     out_scale=config.out_init_scale)
    adam = mlp.AdamState.for_model(state, lr=config.lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 1])))
    report = TrainReport(config.to_dict(), config.seed, dataset.name)
    steps_per_epoch = n // m + 1
    for epoch in range(1, config.epochs + 1):
        rows = []
        for step in range(steps_per_epoch):
            idx = rng.choice(n, size=m, replace=False)
            tidx = sampler.sample(idx, rng)
            parts, grads, _ = mist_loss(state, x_all[idx], x_all[tidx], config, radii[idx], rng)
            if not math.isfinite(parts.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, step {step}")
            mlp.adam_step(state, adam, grads)
            report.floored += parts.floored
            row = {"epoch": epoch, "step": step, **parts.row(), "acc": None}
            rows.append(row)
        state.training = False
        if dataset.labels is not None:
            pred = mlp.predict(state, x_all)
            acc = clustering_accuracy(dataset.labels, pred, max(n_clusters, dataset.n_clusters))
            report.acc.append(acc)
            rows[-1]["acc"] = acc
        state.training = True
        report.steps.extend(rows)
        keys = [k for k in rows[0] if k not in ("epoch", "step", "acc")]
        report.epochs.append({k: float(np.mean([r[k] for r in rows])) for k in keys})
        log.debug("epoch %d total=%.5f acc=%s", epoch, report.epochs[-1]["total"],
                  report.acc[-1] if report.acc else "-")
        if on_epoch is not None:
            on_epoch(epoch, report)
    state.training = False
    report.labels = mlp.predict(state, x_all)
    if report.floored:
        log.warning("critic floor log(1e-12) activated %d times", report.floored)
    report.wall_clock = time.perf_counter() - t0
    return state, report


@dataclass
class SweepCell:
    label: str
    config: MistConfig
    reports: list

    @property
    def accs(self) -> list:
        return [r.final_acc for r in self.reports]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accs))

    @property
    def std(self) -> float:
        return float(np.std(self.accs))

    def summary(self) -> str:
        return f"{self.mean:.1f}({self.std:.1f})"


def train_seeds(dataset: Dataset, config: MistConfig, seeds: Sequence[int], label: str = "",
                cache_dir=None) -> SweepCell:
    sampler, radii = prepare(dataset, config, cache_dir)
    reports = [train(dataset, config.with_(seed=s), sampler, radii)[1] for s in seeds]
    return SweepCell(label, config, reports)


def run_ablation(dataset: Dataset, combo: str, base: MistConfig, seeds: Sequence[int] = None,
                 profile: str = "synthetic", cache_dir=None) -> SweepCell:
    """Train with only the named objective terms active (weights from the ablation profile)."""
    cfg = ablation_config(combo, base, profile)
    return train_seeds(dataset, cfg, seeds or [base.seed], label=cfg.terms, cache_dir=cache_dir)


SWEEP_AXES = {"k0": "k0", "alpha": "alpha", "gamma": "gamma"}


def run_sweep(dataset: Dataset, axis: str, values: Sequence, base: MistConfig,
              seeds: Sequence[int] = None, cache_dir=None) -> list:
    """One training cell per value of ``axis`` with everything else fixed."""
    key = SWEEP_AXES.get(axis.lower())
    if key is None:
        raise ValueError(f"unsupported sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    cells = []
    for v in values:
        v = int(v) if key == "k0" else float(v)
        cfg = base.with_(**{key: v})
        cells.append(train_seeds(dataset, cfg, seeds or [base.seed], label=f"{key}={v:g}",
                                 cache_dir=cache_dir))
    return cells


def write_table_csv(cells: Sequence[SweepCell], path, first_column: str = "setting") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([first_column, "mean_acc", "std_acc", "summary", "seeds", "accs"])
        for c in cells:
            w.writerow([c.label, f"{c.mean:.4f}", f"{c.std:.4f}", c.summary(),
                        " ".join(str(r.seed) for r in c.reports),
                        " ".join(f"{a:.4f}" for a in c.accs)])
