"""Batch CLI: synth, preprocess, train, calibrate, detect, evaluate, plot.

Every subcommand takes --config/--seed/--out, resolves its configuration
(defaults < file < flags), writes the resolved view next to its outputs,
and is deterministic for a fixed seed. Exit codes: 0 ok, 2 config error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dp
from . import detection, evaluation, svgplot, synth, training
from . import model as md
from .config import RunConfig
from .errors import CheckpointError, ConfigError, DataError, MguardError, NumericError
from .rng import Rng


def _bootstrap(args, command: str) -> tuple[RunConfig, Path, int]:
    cfg = RunConfig(args.config)
    if args.seed is not None:
        cfg.override("cli", "seed", args.seed)
    seed = cfg.get_int("cli", "seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out, seed


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    cfg, out, seed = _bootstrap(args, "synth")
    for key in ("buildings", "hours", "anomaly_rate", "noise_std"):
        cfg.override("synth", key, getattr(args, key))
    scfg = synth.SynthConfig(
        n_buildings=cfg.get_int("synth", "buildings"),
        hours=cfg.get_int("synth", "hours"),
        anomaly_rate=cfg.get_float("synth", "anomaly_rate"),
        noise_std=cfg.get_float("synth", "noise_std"),
        start=cfg.get_str("synth", "start"),
        seed=seed,
    )
    csv_path = out / "synth.csv"
    info = synth.generate_corpus(scfg, csv_path)
    cfg.write_resolved(out, "synth")
    print(f"wrote {csv_path}: {info['buildings']} buildings x {info['hours']} h, "
          f"{info['anomalous_hours']} anomalous hours ({info['anomalous_fraction']:.3%})")
    return 0


# ---------------------------------------------------------------------------
# preprocess


def _prepare_series(path, clip_c: float, schema=None) -> list[dp.BuildingSeries]:
    series = dp.ingest_csv(path, schema)
    out = []
    for s in series:
        s = dp.normalize(dp.impute(s))
        s.readings = dp.squash(s.readings, clip_c)
        out.append(s)
    return out


def cmd_preprocess(args) -> int:
    cfg, out, seed = _bootstrap(args, "preprocess")
    for key in ("window_length", "train_stride", "eval_stride", "holdout", "clip_c", "test_fraction"):
        cfg.override("data", key, getattr(args, key))
    window_length = cfg.get_int("data", "window_length")
    train_stride = cfg.get_int("data", "train_stride")
    eval_stride = cfg.get_int("data", "eval_stride")
    holdout = cfg.get_float("data", "holdout")
    test_fraction = cfg.get_float("data", "test_fraction")
    clip_c = cfg.get_float("data", "clip_c")
    if args.test_csv and test_fraction > 0:
        raise ConfigError("--test-csv and a nonzero test_fraction are mutually exclusive")

    series = _prepare_series(args.csv, clip_c)
    rng = Rng(seed)
    if test_fraction > 0:
        ids = sorted(s.building_id for s in series)
        rng.spawn(11).shuffle(ids)
        n_test = int(len(ids) * test_fraction)
        test_ids = set(ids[:n_test])
        test_series = [s for s in series if s.building_id in test_ids]
        series = [s for s in series if s.building_id not in test_ids]
    elif args.test_csv:
        test_series = _prepare_series(args.test_csv, clip_c)
    else:
        test_series = []

    split = dp.split_dataset(series, holdout, rng.spawn(12), window_length, train_stride, eval_stride)
    for s in test_series:
        split.test.extend(dp.make_windows(s, window_length, eval_stride))

    dp.save_windows(out / "train.mgwd", split.train, window_length)
    dp.save_windows(out / "val.mgwd", split.validation, window_length)
    dp.save_windows(out / "test.mgwd", split.test, window_length)
    cfg.write_resolved(out, "preprocess")
    n_anom = sum(1 for w in split.validation if w.label == dp.LABEL_ANOMALOUS)
    print(f"train: {len(split.train)} windows | validation: {len(split.validation)} "
          f"({n_anom} anomalous) | test: {len(split.test)}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg, out, seed = _bootstrap(args, "train")
    for key in ("epochs", "batch_size", "alpha", "checkpoint_every"):
        cfg.override("training", key, getattr(args, key))
    windows, window_length = dp.load_windows(args.train)
    split = dp.DatasetSplit(train=windows)
    tcfg = training.TrainConfig(
        epochs=cfg.get_int("training", "epochs"),
        batch_size=cfg.get_int("training", "batch_size"),
        alpha=cfg.get_float("training", "alpha"),
        beta1=cfg.get_float("training", "beta1"),
        beta2=cfg.get_float("training", "beta2"),
        latent_std=cfg.get_float("training", "latent_std"),
        seed=seed,
        checkpoint_every=cfg.get_int("training", "checkpoint_every"),
    )
    start_epoch = 0
    if args.resume:
        ckpt = md.load_checkpoint(args.resume, expect={"window_length": window_length})
        g, d = ckpt.generator, ckpt.discriminator
        start_epoch = ckpt.epoch
    else:
        g = md.init_generator(
            Rng(seed).spawn(1),
            latent_dim=cfg.get_int("model", "latent_dim"),
            hidden_sizes=cfg.get_int_list("model", "hidden_sizes"),
            output_len=window_length,
        )
        d = md.init_discriminator(
            Rng(seed).spawn(2),
            hidden_size=cfg.get_int("model", "disc_hidden"),
            window_length=window_length,
        )
    g, d, log, ckpts = training.train(
        g, d, split, tcfg, out_dir=out, clip_c=cfg.get_float("data", "clip_c"), start_epoch=start_epoch
    )
    training.save_train_log(out / "train_log.csv", log)
    (out / "stability.json").write_text(json.dumps(training.stability_report(log), indent=2, sort_keys=True))
    cfg.write_resolved(out, "train")
    for e in log.epochs:
        print(f"epoch {e.epoch}: L_D={e.mean_loss_d:.4f} L_G={e.mean_loss_g:.4f} "
              f"d_acc={e.mean_d_accuracy:.3f}")
    print(f"checkpoints: {len(ckpts)}; latest: {out / 'latest.glsm'}")
    return 0


# ---------------------------------------------------------------------------
# calibrate / detect


def _inversion_config(cfg: RunConfig, args, seed: int) -> detection.InversionConfig:
    for key in ("lam", "steps", "lr", "restarts", "chunk"):
        cfg.override("detection", key, getattr(args, key))
    return detection.InversionConfig(
        lam=cfg.get_float("detection", "lam"),
        steps=cfg.get_int("detection", "steps"),
        lr=cfg.get_float("detection", "lr"),
        restarts=cfg.get_int("detection", "restarts"),
        latent_std=cfg.get_float("training", "latent_std"),
        seed=seed,
        chunk=cfg.get_int("detection", "chunk"),
    )


def cmd_calibrate(args) -> int:
    cfg, out, seed = _bootstrap(args, "calibrate")
    icfg = _inversion_config(cfg, args, seed)
    ckpt = md.load_checkpoint(args.checkpoint)
    windows, window_length = dp.load_windows(args.validation)
    if window_length != ckpt.window_length:
        raise DataError(
            f"validation store window_length {window_length} != checkpoint {ckpt.window_length}"
        )
    scored = detection.score_batch(ckpt.generator, ckpt.discriminator, windows, icfg)
    th = detection.calibrate_threshold(scored)
    detection.classify(scored, th.tau)
    detection.save_scores(out / "val_scores.csv", scored)
    detection.save_threshold(out / "threshold.txt", th)
    cfg.write_resolved(out, "calibrate")
    print(f"tau={th.tau!r} validation F1={th.f1:.4f} over {th.candidates} candidates")
    return 0


def cmd_detect(args) -> int:
    cfg, out, seed = _bootstrap(args, "detect")
    icfg = _inversion_config(cfg, args, seed)
    ckpt = md.load_checkpoint(args.checkpoint)
    th = detection.load_threshold(args.threshold)
    windows, window_length = dp.load_windows(args.windows)
    if window_length != ckpt.window_length:
        raise DataError(f"window store window_length {window_length} != checkpoint {ckpt.window_length}")
    scored = detection.score_batch(ckpt.generator, ckpt.discriminator, windows, icfg)
    detection.classify(scored, th.tau)
    detection.save_scores(out / "scores.csv", scored)
    cfg.write_resolved(out, "detect")
    n_anom = sum(1 for sw in scored if sw.verdict == 1)
    print(f"scored {len(scored)} windows; {n_anom} flagged anomalous at tau={th.tau!r}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    cfg, out, _ = _bootstrap(args, "evaluate")
    scored = detection.load_scores(args.scores)
    if any(sw.verdict is None for sw in scored):
        raise DataError(f"{args.scores}: missing verdicts; run detect before evaluate")
    labeled = [sw for sw in scored if sw.window.label in (dp.LABEL_NORMAL, dp.LABEL_ANOMALOUS)]
    cm = evaluation.confusion([sw.verdict for sw in scored], [sw.window.label for sw in scored])
    auc = None
    if labeled and any(sw.window.label == dp.LABEL_ANOMALOUS for sw in labeled) and any(
        sw.window.label == dp.LABEL_NORMAL for sw in labeled
    ):
        auc = evaluation.roc_auc(
            [sw.score for sw in labeled], [sw.window.label for sw in labeled]
        )
    report = evaluation.metrics(cm, auc, config_fingerprint=cfg.fingerprint())
    evaluation.write_report_files(out, report)
    cfg.write_resolved(out, "evaluate")
    print(evaluation.render_report(report), end="")
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    cfg, out, _ = _bootstrap(args, "plot")
    window_length = cfg.get_int("data", "window_length") if args.window_length is None else args.window_length
    series = dp.ingest_csv(args.csv)
    series = [dp.impute(s) for s in series]
    detected: dict[str, list[tuple[int, int]]] = {}
    if args.scores:
        for sw in detection.load_scores(args.scores):
            if sw.verdict == 1:
                detected.setdefault(sw.window.building_id, []).append(
                    (sw.window.start_index, sw.window.start_index + window_length)
                )
    wanted = [args.building] if args.building else [s.building_id for s in series]
    by_id = {s.building_id: s for s in series}
    emitted = []
    for bid in wanted:
        if bid not in by_id:
            raise DataError(f"building {bid!r} not present in {args.csv}")
        s = by_id[bid]
        lo = args.range_from if args.range_from is not None else 0
        hi = args.range_to if args.range_to is not None else len(s.readings)
        if not 0 <= lo < hi <= len(s.readings):
            raise ConfigError(f"--from/--to must satisfy 0 <= from < to <= {len(s.readings)}")
        vals = s.readings[lo:hi]
        truth_mask = (s.labels[lo:hi] == 1) if s.labels is not None else np.zeros(hi - lo, bool)
        truth = svgplot.ranges_from_mask(truth_mask)
        det = [
            (max(a - lo, 0), min(b - lo, hi - lo))
            for a, b in detected.get(bid, [])
            if b > lo and a < hi
        ]
        svg = svgplot.series_overlay_svg(
            vals, det, truth, title=f"building {bid} samples {lo}-{hi}", x_from=lo
        )
        path = out / f"series_{bid}.svg"
        path.write_text(svg)
        emitted.append(str(path))
    if args.train_log:
        log = training.load_train_log(args.train_log)
        iters = [r[0] for r in log.rows]
        path = out / "losses.svg"
        path.write_text(
            svgplot.loss_curves_svg(iters, [r[2] for r in log.rows], [r[3] for r in log.rows])
        )
        emitted.append(str(path))
    cfg.write_resolved(out, "plot")
    print("\n".join(emitted))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mguard",
        description="adversarial load modeling and window-level anomaly detection for hourly meter data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file", default=None)
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus CSV")
    common(p)
    p.add_argument("--buildings", type=int, default=None)
    p.add_argument("--hours", type=int, default=None)
    p.add_argument("--anomaly-rate", dest="anomaly_rate", type=float, default=None)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="CSV -> imputed, normalized, windowed stores")
    common(p)
    p.add_argument("--csv", required=True, help="training-building corpus CSV")
    p.add_argument("--test-csv", dest="test_csv", default=None, help="separate test-building CSV")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=None,
                   help="fraction of buildings held out as the test set")
    p.add_argument("--window-length", dest="window_length", type=int, default=None)
    p.add_argument("--train-stride", dest="train_stride", type=int, default=None)
    p.add_argument("--eval-stride", dest="eval_stride", type=int, default=None)
    p.add_argument("--holdout", type=float, default=None, help="validation fraction of normal windows")
    p.add_argument("--clip", dest="clip_c", type=float, default=None, help="z-score clip before squash")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="adversarial training over normal windows")
    common(p)
    p.add_argument("--train", required=True, help="train.mgwd window store")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="Adam learning rate")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    def detect_common(p):
        p.add_argument("--lam", type=float, default=None, help="feature-loss weight")
        p.add_argument("--steps", type=int, default=None, help="inversion steps per window")
        p.add_argument("--lr", type=float, default=None, help="latent Adam learning rate")
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--chunk", type=int, default=None, help="windows inverted per batch")

    p = sub.add_parser("calibrate", help="score validation windows and pick the F1-optimal threshold")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--validation", required=True, help="val.mgwd window store")
    detect_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="score windows and apply a calibrated threshold")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--windows", required=True, help="window store to score")
    p.add_argument("--threshold", required=True, help="threshold file from calibrate")
    detect_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="window-level metrics from a scores CSV")
    common(p)
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="SVG series overlays and training-loss curves")
    common(p)
    p.add_argument("--csv", required=True, help="corpus CSV for the series")
    p.add_argument("--scores", default=None, help="scores CSV with verdicts")
    p.add_argument("--building", default=None, help="plot one building (default: all)")
    p.add_argument("--from", dest="range_from", type=int, default=None, help="first sample index")
    p.add_argument("--to", dest="range_to", type=int, default=None, help="last sample index (exclusive)")
    p.add_argument("--window-length", dest="window_length", type=int, default=None)
    p.add_argument("--train-log", dest="train_log", default=None, help="train_log.csv for loss curves")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except MguardError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
