"""Anomaly scoring by latent inversion against frozen networks.

Each window gets its own deterministic seed derived from (global seed,
building id, start index), so scores do not depend on scoring order,
chunking, or thread count. Windows are inverted in canonical-order chunks
for throughput; per-window math is independent throughout. The retained
iterate is the best objective seen, never the last.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import data as dp
from . import model as md
from . import nn
from .errors import DataError, NumericError
from .rng import Rng, derive_seed


@dataclass
class InversionConfig:
    lam: float = 0.1  # feature-loss weight in the combined objective
    steps: int = 300
    lr: float = 1e-2
    beta1: float = 0.5
    beta2: float = 0.999
    restarts: int = 1
    latent_std: float = 0.1
    seed: int = 0
    chunk: int = 64

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise DataError(f"lam must be in [0, 1], got {self.lam}")
        if self.steps < 1:
            raise DataError(f"steps must be >= 1, got {self.steps}")
        if self.restarts < 1:
            raise DataError(f"restarts must be >= 1, got {self.restarts}")


@dataclass
class ScoredWindow:
    window: dp.Window
    z_star: np.ndarray | None
    residual: float  # L1 between the window and its best reconstruction
    feature: float  # L1 between discriminator features of window and reconstruction
    score: float  # (1 - lam) * residual + lam * feature
    verdict: int | None = None  # 1 anomalous, 0 normal, None before classify


@dataclass
class Threshold:
    tau: float
    f1: float  # validation F1 at tau
    candidates: int  # candidate thresholds swept


def _draw_z0(seeds: list[int], restart: int, latent_dim: int, std: float) -> np.ndarray:
    rows = [Rng(s).spawn(restart).normal(0.0, std, (latent_dim,)) for s in seeds]
    return np.stack(rows).astype(np.float32)


def _objective_and_grad(g, d, X, feat_x, z, lam):
    """Evaluate the inversion objective per window and its z gradient.

    Returns (residual [B], feature [B], total [B], dz [B, latent]).
    """
    lam32 = np.float32(lam)
    y, gcache = md.generate_batch(g, z, want_cache=True)
    _, feat_y, dcache = md.discriminate_batch(d, y, want_cache=True)
    diff = y - X
    residual = np.abs(diff).sum(axis=1, dtype=np.float64)
    fdiff = feat_y - feat_x
    feature = np.abs(fdiff).sum(axis=(0, 2), dtype=np.float64)
    total = (1.0 - lam) * residual + lam * feature
    dfeat = lam32 * np.sign(fdiff)
    _, dx_seq = md.discriminator_backward(d, dcache, grad_features=dfeat, with_params=False)
    dy = (1 - lam32) * np.sign(diff) + np.ascontiguousarray(dx_seq[:, :, 0].T)
    _, dz = md.generator_backward(g, gcache, dy, with_params=False)
    return residual, feature, total, dz.astype(np.float32)


def _invert_chunk(g, d, X: np.ndarray, seeds: list[int], cfg: InversionConfig, _retry: bool = False):
    """Invert a chunk of windows X [B, window_length] with per-window seeds.

    Per-window Adam trajectories are independent; batching only amortizes
    the matmuls. Returns (z_star [B, latent], residual, feature, score).
    """
    B = X.shape[0]
    _, feat_x = md.discriminate_batch(d, X)
    best_s = np.full(B, np.inf)
    best_r = np.zeros(B)
    best_f = np.zeros(B)
    best_z = np.zeros((B, g.latent_dim), np.float32)

    for restart in range(1, cfg.restarts + 1):
        z = _draw_z0(seeds, restart, g.latent_dim, cfg.latent_std)
        m = np.zeros_like(z)
        v = np.zeros_like(z)
        for step in range(cfg.steps + 1):
            r, f, s, dz = _objective_and_grad(g, d, X, feat_x, z, cfg.lam)
            improved = s < best_s
            best_s[improved] = s[improved]
            best_r[improved] = r[improved]
            best_f[improved] = f[improved]
            best_z[improved] = z[improved]
            if step == cfg.steps:
                break
            t = step + 1
            m += (1 - cfg.beta1) * (dz - m)
            v += (1 - cfg.beta2) * (dz * dz - v)
            mhat = m / (1 - cfg.beta1**t)
            vhat = v / (1 - cfg.beta2**t)
            z = z - np.float32(cfg.lr) * mhat / (np.sqrt(vhat) + np.float32(1e-8))

    bad = ~np.isfinite(best_s)
    if bad.any():
        if _retry:
            raise NumericError(
                f"inversion objective non-finite for {int(bad.sum())} window(s) after restart"
            )
        idx = np.flatnonzero(bad)
        zr, rr, fr, sr = _invert_chunk(
            g, d, X[idx], [Rng(seeds[i]).spawn(997).seed for i in idx], cfg, _retry=True
        )
        best_z[idx], best_r[idx], best_f[idx], best_s[idx] = zr, rr, fr, sr
    return best_z, best_r, best_f, best_s


def invert(g: md.Generator, d: md.Discriminator, window, cfg: InversionConfig) -> ScoredWindow:
    """Score one window (a Window or a bare [window_length] array)."""
    cfg.validate()
    if isinstance(window, dp.Window):
        w = window
        seed = derive_seed(cfg.seed, w.building_id, w.start_index)
    else:
        w = dp.Window("", 0, np.asarray(window, np.float32), dp.LABEL_UNLABELED)
        seed = derive_seed(cfg.seed, w.building_id, w.start_index)
    z, r, f, s = _invert_chunk(g, d, w.values[None, :], [seed], cfg)
    return ScoredWindow(w, z[0], float(r[0]), float(f[0]), float(s[0]))


def worker_count() -> int:
    """MGUARD_THREADS caps scoring parallelism; 0 or unset means sequential."""
    try:
        n = int(os.environ.get("MGUARD_THREADS", "0"))
    except ValueError:
        return 1
    return max(1, n)


def score_batch(
    g: md.Generator, d: md.Discriminator, windows: list[dp.Window], cfg: InversionConfig
) -> list[ScoredWindow]:
    """Invert every window independently; results are returned in input
    order but computed in canonical (building_id, start_index) order so the
    scores are invariant under input permutation and parallelism."""
    cfg.validate()
    if not windows:
        return []
    order = sorted(range(len(windows)), key=lambda i: (windows[i].building_id, windows[i].start_index))
    chunks = [order[i : i + cfg.chunk] for i in range(0, len(order), cfg.chunk)]

    def run(chunk_idx: list[int]):
        X = np.stack([windows[i].values for i in chunk_idx]).astype(np.float32)
        seeds = [derive_seed(cfg.seed, windows[i].building_id, windows[i].start_index) for i in chunk_idx]
        return _invert_chunk(g, d, X, seeds, cfg)

    n_workers = worker_count()
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]

    out: list[ScoredWindow | None] = [None] * len(windows)
    for chunk_idx, (z, r, f, s) in zip(chunks, results):
        for j, i in enumerate(chunk_idx):
            out[i] = ScoredWindow(windows[i], z[j].copy(), float(r[j]), float(f[j]), float(s[j]))
    return out  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Threshold calibration and classification


def calibrate_threshold(validation: list[ScoredWindow]) -> Threshold:
    """Sweep candidate thresholds (midpoints of consecutive distinct scores
    plus -inf/+inf sentinels) and keep the F1-maximizing one, ties toward
    the largest. Needs both classes among the labeled validation windows."""
    labeled = [sw for sw in validation if sw.window.label in (dp.LABEL_NORMAL, dp.LABEL_ANOMALOUS)]
    if len(labeled) < len(validation):
        warnings.warn(f"ignoring {len(validation) - len(labeled)} unlabeled validation window(s)")
    scores = np.array([sw.score for sw in labeled], np.float64)
    labels = np.array([sw.window.label for sw in labeled], np.int64)
    pos = int(labels.sum())
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise DataError(
            "threshold calibration needs at least one anomalous and one normal validation"
            " window; provide anomalous validation windows"
        )
    uniq = np.unique(scores)
    if len(uniq) == 1:
        warnings.warn("all validation scores identical; threshold set above the common score")
        return Threshold(tau=math.nextafter(float(uniq[0]), math.inf), f1=0.0, candidates=0)

    candidates = np.concatenate([[-math.inf], (uniq[:-1] + uniq[1:]) / 2.0, [math.inf]])
    best_tau = -math.inf
    best_f1 = -1.0
    for tau in candidates:
        predicted = scores >= tau
        tp = int((predicted & (labels == 1)).sum())
        fp = int((predicted & (labels == 0)).sum())
        fn = pos - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 >= best_f1:  # >= so ties resolve toward the largest tau
            best_f1 = f1
            best_tau = float(tau)
    return Threshold(tau=best_tau, f1=best_f1, candidates=len(candidates))


def classify(scored: list[ScoredWindow], tau: float) -> list[ScoredWindow]:
    """Set verdicts in place: anomalous iff score >= tau (inclusive)."""
    for sw in scored:
        sw.verdict = 1 if sw.score >= tau else 0
    return scored


# ---------------------------------------------------------------------------
# Persistence

SCORES_HEADER = ["building_id", "start_index", "R", "F", "S", "label", "verdict"]


def save_scores(path, scored: list[ScoredWindow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_HEADER)
        for sw in scored:
            writer.writerow(
                [
                    sw.window.building_id,
                    sw.window.start_index,
                    repr(sw.residual),
                    repr(sw.feature),
                    repr(sw.score),
                    sw.window.label,
                    "" if sw.verdict is None else sw.verdict,
                ]
            )


def load_scores(path) -> list[ScoredWindow]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORES_HEADER:
            raise DataError(f"{path}: expected scores header {SCORES_HEADER}, got {header}")
        for row in reader:
            w = dp.Window(row[0], int(row[1]), np.empty(0, np.float32), int(row[5]))
            out.append(
                ScoredWindow(
                    window=w,
                    z_star=None,
                    residual=float(row[2]),
                    feature=float(row[3]),
                    score=float(row[4]),
                    verdict=None if row[6] == "" else int(row[6]),
                )
            )
    return out


def save_threshold(path, th: Threshold) -> None:
    with open(path, "w") as fh:
        fh.write(f"tau={th.tau!r}\nf1={th.f1!r}\ncandidates={th.candidates}\n")


def load_threshold(path) -> Threshold:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    try:
        return Threshold(
            tau=float(values["tau"]), f1=float(values["f1"]), candidates=int(values["candidates"])
        )
    except (KeyError, ValueError):
        raise DataError(f"{path}: malformed threshold file") from None
