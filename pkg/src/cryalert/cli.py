"""Command-line interface.

Subcommands: train, eval, predict, watch, spectrogram, synth.
Exit codes: 0 on success, 1 for runtime/data problems (one-line
diagnostic on stderr), 2 for usage errors.  Where a command has a
default seed, the CRYALERT_SEED environment variable overrides it and
an explicit --seed flag beats both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import time
from pathlib import Path

from .errors import ConfigError, CryalertError
from .infer_alert import (
    DEFAULT_ALERT_CLASSES,
    CommandSink,
    HttpSink,
    StdoutSink,
    decide_alert,
    emit_alert,
    load_model,
    predict,
    save_model,
)
from .optim_train import TrainConfig, evaluate, split_arrays, train
from .spectro import StftConfig, export_spectrogram, stft_magnitude
from .synth import CLASSES, generate_corpus
from .tensor_nn import build_network
from .wav_io import load_dataset, load_wav

log = logging.getLogger("cryalert")


def _resolve_seed(flag_value, default: int) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("CRYALERT_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"CRYALERT_SEED must be an integer, got {env!r}")
    return default


def _ratio_triple(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("want three comma-separated ratios, e.g. 0.8,0.1,0.1")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio in {text!r}")
    if any(v < 0 for v in vals) or abs(sum(vals) - 1.0) > 1e-9:
        raise argparse.ArgumentTypeError("ratios must be non-negative and sum to 1")
    return vals


class DirectoryWatcher:
    """Polling watcher that classifies new WAV files and emits alerts.

    A file is picked up once its size is stable across two consecutive
    polls (so half-written files are left alone) and is never processed
    twice.  A positive cooldown suppresses alert-positive emissions for
    that many seconds after the last one.
    """

    def __init__(self, directory, classify, sinks, alert_classes, threshold,
                 cooldown: float = 0.0, clock=time.time):
        self.directory = Path(directory)
        self.classify = classify
        self.sinks = sinks
        self.alert_classes = list(alert_classes)
        self.threshold = threshold
        self.cooldown = cooldown
        self.clock = clock
        self.stop = False
        self._last_sizes: dict = {}
        self._processed: set = set()
        self._last_alert: float | None = None

    def poll_once(self):
        """One scan; returns the events emitted during it."""
        sizes = {}
        for path in sorted(self.directory.glob("*.wav")):
            try:
                sizes[path] = path.stat().st_size
            except OSError:
                continue
        emitted = []
        for path, size in sizes.items():
            if path in self._processed or self._last_sizes.get(path) != size:
                continue
            self._processed.add(path)
            try:
                probs = self.classify(path)
            except (CryalertError, OSError) as exc:
                log.warning("skipping %s: %s", path, exc)
                continue
            now = self.clock()
            event = decide_alert(probs, self.alert_classes, self.threshold,
                                 source=str(path), now=now)
            if event.alert and self.cooldown > 0 and self._last_alert is not None \
                    and now - self._last_alert < self.cooldown:
                log.info("cooldown: suppressing alert for %s", path)
                continue
            if event.alert:
                self._last_alert = now
            emit_alert(event, self.sinks)
            emitted.append(event)
        self._last_sizes = sizes
        return emitted

    def run(self, poll_seconds: float) -> None:
        previous = signal.signal(signal.SIGINT, lambda *_: setattr(self, "stop", True))
        try:
            while not self.stop:
                self.poll_once()
                if self.stop:
                    break
                time.sleep(poll_seconds)
        except KeyboardInterrupt:
            pass
        finally:
            signal.signal(signal.SIGINT, previous)


def cmd_train(args) -> int:
    seed = _resolve_seed(args.seed, 42)
    dataset = load_dataset(args.data, split_ratios=args.split, seed=seed)
    net = build_network(len(dataset.class_names), seed=seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                      seed=seed, patience=args.patience)
    stft_cfg = StftConfig()
    report = train(net, dataset, cfg, stft_cfg)
    save_model(net, stft_cfg, dataset.class_names, args.out)
    report_path = Path(str(args.out) + ".report.json")
    report_path.write_text(report.to_json())
    print(report.to_text())
    print(f"model: {args.out}")
    print(f"report: {report_path}")
    return 0


def cmd_eval(args) -> int:
    loaded = load_model(args.model)
    seed = _resolve_seed(args.seed, 42)
    dataset = load_dataset(args.data, split_ratios=args.split_ratios, seed=seed)
    if loaded.class_names != dataset.class_names:
        raise ConfigError(
            f"model classes {loaded.class_names} do not match dataset classes "
            f"{dataset.class_names}"
        )
    images, labels = split_arrays(dataset, args.split, loaded.stft_config,
                                   loaded.network.dtype)
    loss, accuracy, matrix = evaluate(loaded.network, images, labels, dataset.class_names)
    print(f"{args.split} loss: {loss:.4f}")
    print(f"{args.split} accuracy: {accuracy:.4f}")
    if args.confusion:
        print(matrix.to_text())
    return 0


def cmd_predict(args) -> int:
    loaded = load_model(args.model)
    clip = load_wav(args.input)
    probs = predict(loaded.network, loaded.stft_config, clip, loaded.class_names)
    if args.json:
        print(json.dumps(probs))
    else:
        for name, p in sorted(probs.items(), key=lambda kv: -kv[1]):
            print(f"{name}: {p:.4f}")
    return 0


def cmd_watch(args) -> int:
    loaded = load_model(args.model)
    directory = Path(args.dir)
    if not directory.is_dir():
        raise ConfigError(f"watch directory {directory} does not exist")
    alert_classes = [c for c in args.alert_classes.split(",") if c]
    unknown = [c for c in alert_classes if c not in loaded.class_names]
    if unknown:
        raise ConfigError(
            f"alert classes {unknown} not among model classes {loaded.class_names}"
        )
    sinks = [StdoutSink()]
    if args.alert_url:
        sinks.append(HttpSink(args.alert_url))
    if args.alert_cmd:
        sinks.append(CommandSink(args.alert_cmd))

    def classify(path):
        return predict(loaded.network, loaded.stft_config, load_wav(path),
                       loaded.class_names)

    watcher = DirectoryWatcher(directory, classify, sinks, alert_classes,
                               args.threshold, cooldown=args.cooldown)
    log.info("watching %s (threshold %.2f, alert classes %s)",
             directory, args.threshold, ",".join(alert_classes))
    watcher.run(args.poll_ms / 1000.0)
    return 0


def cmd_spectrogram(args) -> int:
    clip = load_wav(args.input)
    out = Path(args.out)
    fmt = out.suffix.lstrip(".").lower()
    spec = stft_magnitude(clip)
    export_spectrogram(spec, out, fmt)
    print(f"{spec.num_frames} x {spec.num_bins}")
    return 0


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed, 7)
    written = generate_corpus(args.out, per_class=args.per_class, seed=seed)
    print(f"wrote {len(written)} clips across {len(CLASSES)} classes under {args.out}")
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _threshold(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cryalert",
                                     description="audio distress classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a directory-per-class corpus")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batch", type=_positive_int, default=64)
    p.add_argument("--lr", type=_positive_float, default=1e-4)
    p.add_argument("--seed", type=int, default=None, help="default 42")
    p.add_argument("--split", type=_ratio_triple, default=(0.8, 0.1, 0.1),
                   help="train,val,test ratios (default 0.8,0.1,0.1)")
    p.add_argument("--patience", type=_positive_int, default=None,
                   help="stop after N epochs without val-loss improvement")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--confusion", action="store_true", help="print the confusion matrix")
    p.add_argument("--seed", type=int, default=None,
                   help="dataset shuffle seed (default 42, must match training)")
    p.add_argument("--split-ratios", type=_ratio_triple, default=(0.8, 0.1, 0.1),
                   dest="split_ratios")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one WAV file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true", help="print a JSON object instead")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("watch", help="watch a directory and alert on distress clips")
    p.add_argument("--model", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--threshold", type=_threshold, default=0.5)
    p.add_argument("--alert-classes", default=",".join(DEFAULT_ALERT_CLASSES),
                   help="comma-separated class names that may alert")
    p.add_argument("--alert-url", default=None, help="also POST alerts to this URL")
    p.add_argument("--alert-cmd", default=None, help="also pipe alerts to this command")
    p.add_argument("--cooldown", type=_non_negative_float, default=0.0,
                   help="seconds to suppress repeat alerts")
    p.add_argument("--poll-ms", type=_positive_int, default=500)
    p.set_defaults(func=cmd_watch)

    p = sub.add_parser("spectrogram", help="export a spectrogram as .pgm or .csv")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output path; format from extension")
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=None, help="default 7")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "spectrogram":
            fmt = Path(args.out).suffix.lstrip(".").lower()
            if fmt not in ("pgm", "csv"):
                parser.error(f"cannot infer format from {args.out!r}: use .pgm or .csv")
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    except (CryalertError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
