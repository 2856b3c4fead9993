"""Command-line entry point: ``gids <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
Every subcommand that writes files also writes ``<subcommand>.config`` with
the fully resolved settings next to its output.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .can import load_log, save_log
from .detector import detect_stream, write_verdicts
from .encoder import EncoderConfig, Mode, build_images, dump_images
from .errors import GidsError
from .gan import DETECTION_THRESHOLD, TrainConfig, TrainedGids, history_csv, train_first_discriminator, train_gan
from .metrics import report_table, write_report_csv, write_roc, write_sweep_csv
from .nn import load_weights, save_weights
from .nn.serialize import MAGIC as WEIGHTS_MAGIC
from .pipeline import evaluate_scores, input_size_sweep, scores
from .synth import ATTACK_ALIASES, AttackSpec, PayloadMode, default_profile, gen_normal_traffic, inject_attack, parse_window

log = logging.getLogger("gids")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# hard defaults, applied after the config file; None means "no default"
DEFAULTS = {
    "seed": 0,
    "duration": 60.0,
    "profile": "default",
    "jitter": 0.1,
    "payload": "counter",
    "period_ms": None,
    "target_id": None,
    "input_size": 64,
    "stride": None,
    "mode": "onehot",
    "epochs": 100,
    "batch_size": 64,
    "lr": 2e-4,
    "g_lr": None,
    "d_steps": 1,
    "label_smoothing": 0.1,
    "noise_dim": 100,
    "d2_threshold": None,
    "sizes": "32,64,128",
    "train_s": 120.0,
    "test_s": 30.0,
    "repeat": 5,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_encoder(p):
    p.add_argument("--input-size", type=int, help="CAN IDs per image (default 64)")
    p.add_argument("--stride", type=int, help="frames between windows (default: input size)")
    p.add_argument("--mode", choices=[m.value for m in Mode])


def _add_train(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--g-lr", type=float, help="generator learning rate (default: --lr)")
    p.add_argument("--d-steps", type=int, help="discriminator steps per generator step")
    p.add_argument("--label-smoothing", type=float)
    p.add_argument("--noise-dim", type=int)


def _add_threshold(p):
    p.add_argument("--threshold", type=float, help="detection threshold (default 0.1)")
    p.add_argument("--d2-threshold", type=float, help="separate threshold for the second stage")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gids", description="GAN-based intrusion detection for CAN bus logs")
    parser.add_argument("--version", action="version", version=f"gids {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate normal traffic")
    _add_common(p)
    p.add_argument("--profile", choices=["default"])
    p.add_argument("--duration", type=float, help="seconds of traffic")
    p.add_argument("--jitter", type=float)
    p.add_argument("--payload", choices=[m.value for m in PayloadMode])
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("inject", help="inject an attack into a log")
    _add_common(p)
    p.add_argument("--attack", required=True, choices=sorted(ATTACK_ALIASES))
    p.add_argument("--period-ms", type=float)
    p.add_argument("--window", required=True, help="START:END in seconds from the first frame")
    p.add_argument("--target-id", help="hex id for a targeted attack")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("encode", help="turn a log into CAN images")
    _add_common(p)
    _add_encoder(p)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("train-d1", help="train the first discriminator on a labelled attack log")
    _add_common(p)
    _add_encoder(p)
    _add_train(p)
    p.add_argument("-i", "--input", required=True, action="append", help="labelled log; repeatable")
    p.add_argument("-o", "--output", required=True, help="weight file")

    p = sub.add_parser("train-gan", help="train the generator and second discriminator on normal traffic")
    _add_common(p)
    _add_encoder(p)
    _add_train(p)
    _add_threshold(p)
    p.add_argument("-i", "--input", required=True, help="normal log")
    p.add_argument("--d1", help="first-discriminator weights to bundle into the model")
    p.add_argument("-o", "--output", required=True, help="model bundle")

    p = sub.add_parser("detect", help="run the cascade over a log")
    _add_common(p)
    _add_threshold(p)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="verdict CSV")

    p = sub.add_parser("eval", help="score labelled attack logs")
    _add_common(p)
    _add_threshold(p)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--input", required=True, action="append", help="labelled log; repeatable")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--roc", action="store_true", help="also write fpr,tpr points per log")

    p = sub.add_parser("sweep", help="accuracy against window size on the synthetic corpus")
    _add_common(p)
    _add_train(p)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--threshold", type=float)
    p.add_argument("--sizes", help="comma separated window sizes")
    p.add_argument("--train-s", type=float, help="seconds of normal training traffic")
    p.add_argument("--test-s", type=float, help="seconds of traffic per attack test segment")
    p.add_argument("-o", "--output", required=True, help="CSV file")

    p = sub.add_parser("bench", help="measure detection throughput")
    _add_common(p)
    _add_threshold(p)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--repeat", type=int)
    return parser


def read_config(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{n}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over built-in defaults."""
    values = vars(args).copy()
    cfg = read_config(args.config) if args.config else {}
    for key, text in cfg.items():
        if key not in values:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if values[key] is None:
            values[key] = text
    if isinstance(values.get("input"), str) and args.command in ("train-d1", "eval"):
        values["input"] = [p.strip() for p in values["input"].split(",") if p.strip()]
    for key, default in DEFAULTS.items():
        if key in values and values[key] is None:
            values[key] = default
    return values


def _num(values, key, kind):
    v = values.get(key)
    if v is None:
        return None
    try:
        return kind(v)
    except ValueError:
        raise UsageError(f"--{key.replace('_', '-')}: bad value {v!r}") from None


def _encoder(values) -> EncoderConfig:
    try:
        return EncoderConfig(_num(values, "input_size", int), _num(values, "stride", int), Mode(values["mode"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _train_cfg(values) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=_num(values, "epochs", int),
            batch_size=_num(values, "batch_size", int),
            seed=_num(values, "seed", int),
            lr=_num(values, "lr", float),
            g_lr=_num(values, "g_lr", float),
            d_steps_per_g_step=_num(values, "d_steps", int),
            label_smoothing=_num(values, "label_smoothing", float),
            noise_dim=_num(values, "noise_dim", int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _thresholds(values):
    t1 = _num(values, "threshold", float)
    t2 = _num(values, "d2_threshold", float)
    for t in (t1, t2):
        if t is not None and not 0.0 < t < 1.0:
            raise UsageError("thresholds must lie in (0, 1)")
    return t1, t2


def write_config(values: dict, path) -> None:
    skip = {"config", "verbose"}
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(values):
            if key in skip:
                continue
            v = values[key]
            if isinstance(v, list):
                v = ",".join(map(str, v))
            fh.write(f"{key}={'' if v is None else v}\n")


def _prepare(output) -> str:
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    return output


def _record(values, output, is_dir=False) -> None:
    out_dir = Path(output) if is_dir else Path(output).parent
    write_config(values, out_dir / f"{values['command']}.config")


def load_model(path, threshold: float | None = None) -> TrainedGids:
    """Load a model bundle, or a bare D2 weight file with the default encoder."""
    data = Path(path).read_bytes()
    if data.startswith(WEIGHTS_MAGIC):
        d2 = load_weights(data)
        width = d2.input_shape[0]
        rows = width // 48 if width % 48 == 0 else width // 11
        mode = Mode.ONE_HOT if width % 48 == 0 else Mode.RAW_BINARY
        model = TrainedGids(d2, encoder_cfg=EncoderConfig(rows, mode=mode))
    else:
        model = TrainedGids.load(data)
    if threshold is not None:
        model.detection_threshold = threshold
    return model


def cmd_synth(v):
    try:
        profile = default_profile(_num(v, "seed", int), _num(v, "jitter", float))
        profile.payload_mode = PayloadMode(v["payload"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    duration = _num(v, "duration", float)
    if duration <= 0:
        raise UsageError("--duration must be positive")
    save_log(gen_normal_traffic(profile, duration), _prepare(v["output"]))
    _record(v, v["output"])


def cmd_inject(v):
    try:
        kind, target = ATTACK_ALIASES[v["attack"]]
        if v.get("target_id"):
            target = int(v["target_id"], 16)
        start, end = parse_window(v["window"])
        spec = AttackSpec(kind, start, end, _num(v, "period_ms", float), target, _num(v, "seed", int))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_log(inject_attack(load_log(v["input"]), spec), _prepare(v["output"]))
    _record(v, v["output"])


def cmd_encode(v):
    cfg = _encoder(v)
    images = build_images(load_log(v["input"]), cfg)
    with open(_prepare(v["output"]), "w", encoding="utf-8") as fh:
        dump_images(images, fh)
    _record(v, v["output"])
    print(f"{len(images)} images ({sum(im.abnormal for im in images)} abnormal)")


def _labelled_images(paths, cfg):
    normal, attack = [], []
    for path in paths:
        for im in build_images(load_log(path), cfg):
            (attack if im.abnormal else normal).append(im.pixels)
    return normal, attack


def cmd_train_d1(v):
    cfg, tcfg = _encoder(v), _train_cfg(v)
    normal, attack = _labelled_images(v["input"], cfg)
    d1 = train_first_discriminator(normal, attack, tcfg)
    Path(_prepare(v["output"])).write_bytes(save_weights(d1))
    _record(v, v["output"])
    print(f"trained on {len(normal)} normal and {len(attack)} attack images")


def cmd_train_gan(v):
    cfg, tcfg = _encoder(v), _train_cfg(v)
    t1, _ = _thresholds(v)
    t1 = DETECTION_THRESHOLD if t1 is None else t1
    images = build_images(load_log(v["input"]), cfg)
    normal = [im.pixels for im in images if not im.abnormal]
    result = train_gan(normal, tcfg, t1)
    d1 = load_weights(Path(v["d1"]).read_bytes()) if v.get("d1") else None
    model = TrainedGids(result.d2, result.g, d1, cfg, t1)
    model.save_file(_prepare(v["output"]))
    out_dir = Path(v["output"]).parent
    (out_dir / "history.csv").write_text(history_csv(result.history), encoding="utf-8")
    _record(v, v["output"])
    print(f"best epoch {result.best_epoch} of {tcfg.epochs}")


def cmd_detect(v):
    t1, t2 = _thresholds(v)
    model = load_model(v["model"])
    res = detect_stream(load_log(v["input"]), model, t1, t2)
    with open(_prepare(v["output"]), "w", encoding="utf-8", newline="") as fh:
        write_verdicts(res.verdicts, fh, res.first_frame_ts)
    _record(v, v["output"])
    n_anom = sum(x.anomaly for x in res.verdicts)
    print(f"{len(res.verdicts)} windows, {n_anom} anomalies")


def _cascade_report(model, pixels, abnormal, t1, t2, name):
    from .detector import classify_batch
    from .metrics import confusion, roc_auc

    verdicts = classify_batch(pixels, model, t1, t2)
    s2 = scores(model.d2, pixels)
    auc = roc_auc(1.0 - s2, abnormal) if 0 < abnormal.sum() < len(abnormal) else None
    return confusion(verdicts, abnormal, auc, name)


def cmd_eval(v):
    t1, t2 = _thresholds(v)
    model = load_model(v["model"])
    t = model.detection_threshold if t1 is None else t1
    out = Path(v["output"])
    out.mkdir(parents=True, exist_ok=True)
    d2_reports, cascade_reports = [], []
    d1_rows = {}
    for path in v["input"]:
        name = Path(path).stem
        images = build_images(load_log(path), model.encoder_cfg)
        if not images:
            raise GidsError(f"{path}: no complete window")
        pixels = np.stack([im.pixels for im in images])
        abnormal = np.array([im.abnormal for im in images])
        s2 = scores(model.d2, pixels)
        d2_reports.append(evaluate_scores(s2, abnormal, t if t2 is None else t2, name))
        if model.d1 is not None:
            cascade_reports.append(_cascade_report(model, pixels, abnormal, t1, t2, name))
            d1_rows[name] = evaluate_scores(scores(model.d1, pixels), abnormal, t, name)
        if v.get("roc") and 0 < abnormal.sum() < len(abnormal):
            with open(out / f"roc_{name}.csv", "w", encoding="utf-8", newline="") as fh:
                write_roc(1.0 - s2, abnormal, fh)
    text = report_table(d2_reports, "Second discriminator")
    with open(out / "report_d2.csv", "w", encoding="utf-8", newline="") as fh:
        write_report_csv(d2_reports, fh)
    if cascade_reports:
        text += "\n" + report_table(cascade_reports, "Cascade (first then second discriminator)")
        text += "\n" + report_table(list(d1_rows.values()), "First discriminator")
        with open(out / "report_cascade.csv", "w", encoding="utf-8", newline="") as fh:
            write_report_csv(cascade_reports, fh)
    (out / "report.txt").write_text(text, encoding="utf-8")
    _record(v, out, is_dir=True)
    print(text, end="")


def cmd_sweep(v):
    tcfg = _train_cfg(v)
    try:
        sizes = [int(s) for s in str(v["sizes"]).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes: bad list {v['sizes']!r}") from None
    if not sizes or min(sizes) < 1:
        raise UsageError("--sizes needs positive integers")
    t = _num(v, "threshold", float) or DETECTION_THRESHOLD
    rows = input_size_sweep(sizes, tcfg, seed=tcfg.seed, train_s=_num(v, "train_s", float),
                            test_s=_num(v, "test_s", float), threshold=t,
                            cfg_base=EncoderConfig(mode=Mode(v["mode"])))
    with open(_prepare(v["output"]), "w", encoding="utf-8", newline="") as fh:
        write_sweep_csv(rows, fh)
    _record(v, v["output"])
    for r in rows:
        print(f"input size {r.input_size:>4}: accuracy {100 * r.accuracy:.1f}%")


def cmd_bench(v):
    t1, t2 = _thresholds(v)
    model = load_model(v["model"])
    frames = load_log(v["input"])
    repeat = max(1, _num(v, "repeat", int))
    detect_stream(frames, model, t1, t2)  # warm-up
    best = min((detect_stream(frames, model, t1, t2).stats for _ in range(repeat)), key=lambda s: s.elapsed_s)
    print(f"{best.frames} frames, {best.windows} windows in {best.elapsed_s:.4f} s: {best.frames_per_s:,.0f} frames/s")


COMMANDS = {
    "synth": cmd_synth,
    "inject": cmd_inject,
    "encode": cmd_encode,
    "train-d1": cmd_train_d1,
    "train-gan": cmd_train_gan,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        values = resolve(args)
        COMMANDS[args.command](values)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (GidsError, OSError) as exc:
        print(f"gids: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
