"""Adversarial training over normal windows only.

One step = one discriminator update on a half-real/half-fake batch, then
one generator update on fresh fakes, both through Adam. Per-epoch RNG
streams are derived from the seed so runs are reproducible bit-for-bit.
"""

from __future__ import annotations

import csv
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as dp
from . import model as md
from . import nn
from .errors import ConfigError, DataError, NumericError
from .rng import Rng


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32  # half real, half generated
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    latent_std: float = 0.1
    seed: int = 0
    checkpoint_every: int = 5

    def validate(self) -> None:
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochSummary:
    epoch: int
    mean_loss_d: float
    mean_loss_g: float
    mean_d_accuracy: float
    last_d_accuracy: float


@dataclass
class TrainLog:
    rows: list[tuple[int, int, float, float, float]] = field(default_factory=list)
    epochs: list[EpochSummary] = field(default_factory=list)

    def add(self, iteration: int, epoch: int, loss_d: float, loss_g: float, d_acc: float) -> None:
        self.rows.append((iteration, epoch, loss_d, loss_g, d_acc))


def _check_finite(value: float, what: str, context: str) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite {what} ({value}); {context}")


def train_step(
    g: md.Generator,
    d: md.Discriminator,
    real_batch: np.ndarray,
    rng: Rng,
    opt_g: nn.Adam,
    opt_d: nn.Adam,
    latent_std: float = 0.1,
) -> tuple[float, float, float]:
    """One D update then one G update on real_batch [R, window_length].

    Fakes are regenerated for each half of the step. Returns
    (loss_d, loss_g, d_accuracy) with the accuracy measured pre-update.
    """
    R = real_batch.shape[0]
    z1 = rng.normal(0.0, latent_std, (R, g.latent_dim))
    fake = md.generate_batch(g, z1)
    batch = np.concatenate([real_batch, fake], axis=0)
    targets = np.zeros(2 * R, np.float32)
    targets[:R] = 1.0

    p, _, dcache = md.discriminate_batch(d, batch, want_cache=True)
    loss_d, _ = nn.bce_loss(p, targets)
    d_acc = (float((p[:R] > 0.5).sum()) + float((p[R:] < 0.5).sum())) / (2 * R)
    _check_finite(
        loss_d,
        "discriminator loss",
        f"real batch mean={real_batch.mean():.4g} min={real_batch.min():.4g} "
        f"max={real_batch.max():.4g}, scores [{p.min():.4g}, {p.max():.4g}]",
    )
    # sigmoid folded into the BCE gradient: d(loss)/d(pre) = (p - t) / n
    dpre = ((p - targets) / (2 * R)).astype(np.float32)
    dgrads, _ = md.discriminator_backward(d, dcache, grad_score_pre=dpre)
    opt_d.step(dgrads)

    z2 = rng.normal(0.0, latent_std, (R, g.latent_dim))
    fake2, gcache = md.generate_batch(g, z2, want_cache=True)
    p2, _, dcache2 = md.discriminate_batch(d, fake2, want_cache=True)
    loss_g, _ = nn.bce_loss(p2, np.ones(R, np.float32))
    _check_finite(loss_g, "generator loss", f"fake scores [{p2.min():.4g}, {p2.max():.4g}]")
    dpre2 = ((p2 - 1.0) / R).astype(np.float32)
    _, dx = md.discriminator_backward(d, dcache2, grad_score_pre=dpre2, with_params=False)
    ggrads, _ = md.generator_backward(g, gcache, np.ascontiguousarray(dx[:, :, 0].T))
    opt_g.step(ggrads)
    return loss_d, loss_g, d_acc


def train(
    g: md.Generator,
    d: md.Discriminator,
    split: dp.DatasetSplit,
    cfg: TrainConfig,
    out_dir=None,
    clip_c: float = 3.5,
    start_epoch: int = 0,
) -> tuple[md.Generator, md.Discriminator, TrainLog, list[str]]:
    """Train over the split's all-normal windows for cfg.epochs passes.

    Each epoch shuffles the window order under a per-epoch derived stream,
    so results do not depend on whether earlier epochs ran in this process.
    Checkpoints land in out_dir every checkpoint_every epochs and at the
    end, plus a "latest.glsm" alias. Returns (g, d, log, checkpoint paths).
    """
    cfg.validate()
    if not split.train:
        raise DataError("training set is empty")
    for w in split.train:
        if w.label != dp.LABEL_NORMAL:
            raise DataError(
                f"training window {w.building_id}:{w.start_index} has label {w.label};"
                " only normal windows may be trained on"
            )
    X = np.stack([w.values for w in split.train]).astype(np.float32)
    if X.shape[1] != g.output_len:
        raise DataError(f"window length {X.shape[1]} != generator output length {g.output_len}")

    R = cfg.batch_size // 2
    opt_g = nn.Adam(md.generator_params(g), cfg.alpha, cfg.beta1, cfg.beta2)
    opt_d = nn.Adam(md.discriminator_params(d), cfg.alpha, cfg.beta1, cfg.beta2)
    log = TrainLog()
    ckpts: list[str] = []
    iteration = 0
    base = Rng(cfg.seed)

    def save(epoch: int, l_d: float, l_g: float, name: str) -> str:
        ckpt = md.ModelCheckpoint(
            generator=g,
            discriminator=d,
            latent_dim=g.latent_dim,
            window_length=g.output_len,
            clip_c=clip_c,
            seed=cfg.seed,
            epoch=epoch,
            loss_d=l_d,
            loss_g=l_g,
        )
        path = Path(out_dir) / name
        md.save_checkpoint(path, ckpt)
        return str(path)

    for epoch in range(start_epoch, cfg.epochs):
        erng = base.spawn(epoch + 1)
        order = list(range(X.shape[0]))
        erng.shuffle(order)
        sum_d = sum_g = sum_acc = 0.0
        last_acc = 0.0
        steps = len(order) // R
        if steps == 0:
            raise DataError(f"training set smaller than half-batch ({len(order)} < {R})")
        for s in range(steps):
            idx = order[s * R : (s + 1) * R]
            try:
                l_d, l_g, acc = train_step(g, d, X[idx], erng, opt_g, opt_d, cfg.latent_std)
            except NumericError as e:
                raise NumericError(f"epoch {epoch + 1} step {s + 1}: {e}") from None
            iteration += 1
            log.add(iteration, epoch + 1, l_d, l_g, acc)
            sum_d += l_d
            sum_g += l_g
            sum_acc += acc
            last_acc = acc
        log.epochs.append(
            EpochSummary(epoch + 1, sum_d / steps, sum_g / steps, sum_acc / steps, last_acc)
        )
        for name, t in {**md.generator_params(g), **md.discriminator_params(d)}.items():
            if not np.isfinite(t).all():
                raise NumericError(f"epoch {epoch + 1}: parameter {name} became non-finite")
        if out_dir is not None and ((epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs):
            ckpts.append(save(epoch + 1, sum_d / steps, sum_g / steps, f"ckpt_epoch_{epoch + 1:04d}.glsm"))

    if out_dir is not None:
        if ckpts:
            latest = Path(out_dir) / "latest.glsm"
            shutil.copyfile(ckpts[-1], latest)
        else:
            last = log.epochs[-1] if log.epochs else None
            save(
                cfg.epochs,
                last.mean_loss_d if last else 0.0,
                last.mean_loss_g if last else 0.0,
                "latest.glsm",
            )
    return g, d, log, ckpts


# ---------------------------------------------------------------------------
# Log persistence and stability reporting

LOG_HEADER = ["iteration", "epoch", "L_D", "L_G", "d_accuracy"]


def save_train_log(path, log: TrainLog) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for row in log.rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])


def load_train_log(path) -> TrainLog:
    log = TrainLog()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LOG_HEADER:
            raise DataError(f"{path}: expected train-log header {LOG_HEADER}, got {header}")
        for row in reader:
            log.add(int(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4]))
    by_epoch: dict[int, list[tuple[float, float, float]]] = {}
    for _, epoch, l_d, l_g, acc in log.rows:
        by_epoch.setdefault(epoch, []).append((l_d, l_g, acc))
    for epoch in sorted(by_epoch):
        rows = by_epoch[epoch]
        log.epochs.append(
            EpochSummary(
                epoch,
                sum(r[0] for r in rows) / len(rows),
                sum(r[1] for r in rows) / len(rows),
                sum(r[2] for r in rows) / len(rows),
                rows[-1][2],
            )
        )
    return log


D_ACC_BAND = (0.5, 0.9)


def stability_report(log: TrainLog) -> dict:
    """Diagnostics mirroring the training-health criteria: epochs whose mean
    discriminator accuracy leaves [0.5, 0.9], generator-loss trend, and
    discriminator-loss bounds."""
    lo, hi = D_ACC_BAND
    violations = [e.epoch for e in log.epochs if not lo <= e.mean_d_accuracy <= hi]
    g_losses = [e.mean_loss_g for e in log.epochs]
    trend = 0.0
    if len(g_losses) >= 2:
        t = np.arange(len(g_losses), dtype=np.float64)
        trend = float(np.polyfit(t, np.array(g_losses), 1)[0])
    return {
        "epochs": [
            {
                "epoch": e.epoch,
                "mean_L_D": e.mean_loss_d,
                "mean_L_G": e.mean_loss_g,
                "mean_d_accuracy": e.mean_d_accuracy,
                "last_d_accuracy": e.last_d_accuracy,
                "in_band": lo <= e.mean_d_accuracy <= hi,
            }
            for e in log.epochs
        ],
        "d_accuracy_band": [lo, hi],
        "d_accuracy_band_violations": violations,
        "g_loss_trend": trend,
        "d_loss_bounds": [min(e.mean_loss_d for e in log.epochs), max(e.mean_loss_d for e in log.epochs)]
        if log.epochs
        else [0.0, 0.0],
    }
