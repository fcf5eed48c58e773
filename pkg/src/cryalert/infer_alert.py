"""Model persistence, prediction and alert emission.

Model files are a small binary container: magic, format version, a
JSON header (architecture, STFT config, class names, normalization
stats) and the raw little-endian float32 parameter blobs in layer
order, closed by a CRC-32 of the parameter region.  Loading verifies
magic, version and CRC before touching the payload.

Alerts are single-line JSON events with a fixed key order so
downstream consumers can rely on the schema.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import struct
import subprocess
import sys
import urllib.request
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptModelError,
    ModelVersionError,
    NotAModelError,
    TooShortError,
)
from .spectro import StftConfig, stft_magnitude
from .tensor_nn import Network, build_network, softmax
from .wav_io import (
    DEFAULT_CLIP_SAMPLES,
    DEFAULT_SAMPLE_RATE,
    AudioClip,
    resample,
    standardize_length,
)

log = logging.getLogger("cryalert")

MODEL_MAGIC = b"CRYA"
MODEL_VERSION = 1
DEFAULT_ALERT_CLASSES = ("crying", "screaming")


def _rfc3339(ts: float) -> str:
    return (
        datetime.fromtimestamp(ts, tz=timezone.utc)
        .replace(microsecond=0)
        .isoformat()
        .replace("+00:00", "Z")
    )


def save_model(net: Network, stft_cfg: StftConfig, class_names, path,
               timestamp: float | None = None) -> None:
    """Serialize network + preprocessing config to a model file.

    timestamp (unix seconds) defaults to now; the SOURCE_DATE_EPOCH
    environment variable overrides the default so builds can be made
    reproducible.
    """
    if len(class_names) != net.class_count:
        raise ConfigError(
            f"{len(class_names)} class names for {net.class_count} outputs"
        )
    if timestamp is None:
        env = os.environ.get("SOURCE_DATE_EPOCH")
        timestamp = float(env) if env else datetime.now(tz=timezone.utc).timestamp()

    params = net.parameters()
    mean, variance = net.norm_stats
    header = {
        "architecture": net.arch,
        "stft": {
            "frame_length": stft_cfg.frame_length,
            "frame_step": stft_cfg.frame_step,
            "fft_length": stft_cfg.fft_length,
            "window": stft_cfg.window,
        },
        "class_names": list(class_names),
        "norm_mean": mean,
        "norm_variance": variance,
        "seed": net.seed,
        "created": _rfc3339(timestamp),
        "param_shapes": [list(p.shape) for p in params],
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in params)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


@dataclass
class LoadedModel:
    network: Network
    stft_config: StftConfig
    class_names: list[str]
    created: str
    seed: int


def load_model(path) -> LoadedModel:
    """Read and verify a model file written by save_model."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise NotAModelError(f"{path}: not a model file (bad magic)")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise ModelVersionError(
            f"{path}: format version {version}, this build reads {MODEL_VERSION}"
        )
    header_end = 12 + header_len
    if len(data) < header_end + 4:
        raise CorruptModelError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelError(f"{path}: unreadable header: {exc}") from exc

    shapes = [tuple(s) for s in header["param_shapes"]]
    blob_len = sum(int(np.prod(s)) for s in shapes) * 4
    if len(data) != header_end + blob_len + 4:
        raise CorruptModelError(
            f"{path}: expected {header_end + blob_len + 4} bytes, file has {len(data)}"
        )
    blob = data[header_end:header_end + blob_len]
    (crc,) = struct.unpack_from("<I", data, header_end + blob_len)
    if zlib.crc32(blob) != crc:
        raise CorruptModelError(f"{path}: parameter checksum mismatch")

    arch = header["architecture"]
    net = build_network(
        arch["class_count"],
        input_shape=tuple(arch["input_shape"]),
        resize=tuple(arch["resize"]),
        conv_filters=tuple(arch["conv_filters"]),
        kernel_size=arch["kernel_size"],
        dense_units=arch["dense_units"],
        dropout_rates=tuple(arch["dropout_rates"]),
        seed=header["seed"],
        dtype=np.float32,
    )
    net.set_norm_stats(header["norm_mean"], header["norm_variance"])
    offset = 0
    for p, shape in zip(net.parameters(), shapes):
        if p.shape != shape:
            raise CorruptModelError(
                f"{path}: stored shape {shape} does not fit architecture {p.shape}"
            )
        count = int(np.prod(shape))
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset * 4)
        p[...] = values.reshape(shape)
        offset += count

    stft = header["stft"]
    stft_cfg = StftConfig(
        frame_length=stft["frame_length"],
        frame_step=stft["frame_step"],
        fft_length=stft["fft_length"],
        window=stft["window"],
    )
    return LoadedModel(net, stft_cfg, list(header["class_names"]),
                       header["created"], header["seed"])


def predict(net: Network, stft_cfg: StftConfig, clip: AudioClip, class_names,
            sample_rate: int = DEFAULT_SAMPLE_RATE,
            clip_samples: int = DEFAULT_CLIP_SAMPLES) -> dict[str, float]:
    """Class probabilities for one clip.

    The clip is resampled to the canonical rate and padded/truncated to
    the canonical length, mirroring dataset preparation.  Clips shorter
    than one analysis frame are rejected rather than padded: sub-frame
    audio has no usable content.
    """
    if len(clip) < stft_cfg.frame_length:
        raise TooShortError(
            f"clip has {len(clip)} samples, need at least {stft_cfg.frame_length}"
        )
    clip = standardize_length(resample(clip, sample_rate), clip_samples)
    image = stft_magnitude(clip, stft_cfg, dtype=net.dtype).values[..., None]
    logits, _ = net.forward(image, train=False)
    probs = softmax(logits.astype(np.float64))
    return {name: float(p) for name, p in zip(class_names, probs)}


@dataclass
class AlertEvent:
    timestamp: str
    source: str
    predicted_label: str
    probabilities: dict[str, float]
    alert: bool
    threshold: float

    def to_json(self) -> str:
        payload = {
            "timestamp": self.timestamp,
            "source": self.source,
            "predicted_label": self.predicted_label,
            "probabilities": self.probabilities,
            "alert": self.alert,
            "threshold": self.threshold,
        }
        return json.dumps(payload, separators=(",", ":"))


def decide_alert(probabilities: dict[str, float], alert_classes, threshold: float,
                 source: str = "", now: float | None = None) -> AlertEvent:
    """Build the alert event for one prediction.

    alert is true iff the argmax class is in alert_classes and its
    probability clears the threshold; probability ties go to the
    earliest class in the mapping's order.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    unknown = [c for c in alert_classes if c not in probabilities]
    if unknown:
        raise ConfigError(
            f"alert classes {unknown} not among model classes {list(probabilities)}"
        )
    names = list(probabilities)
    values = [probabilities[n] for n in names]
    best = int(np.argmax(values))
    predicted = names[best]
    fired = predicted in set(alert_classes) and values[best] >= threshold
    when = _rfc3339(now if now is not None else datetime.now(tz=timezone.utc).timestamp())
    return AlertEvent(when, source, predicted, dict(probabilities), fired, threshold)


class StdoutSink:
    """Writes one line per event to a stream (stdout by default)."""

    def __init__(self, stream=None):
        self.stream = stream if stream is not None else sys.stdout

    def send(self, line: str) -> None:
        self.stream.write(line + "\n")
        self.stream.flush()


class HttpSink:
    """POSTs the JSON line to a URL, with one retry on failure."""

    def __init__(self, url: str, timeout: float = 2.0):
        self.url = url
        self.timeout = timeout

    def send(self, line: str) -> None:
        request = urllib.request.Request(
            self.url,
            data=line.encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            urllib.request.urlopen(request, timeout=self.timeout).close()
        except Exception:
            urllib.request.urlopen(request, timeout=self.timeout).close()


class CommandSink:
    """Pipes the JSON line to a subprocess's stdin."""

    def __init__(self, command: str, timeout: float = 10.0):
        self.argv = shlex.split(command)
        if not self.argv:
            raise ConfigError("alert command is empty")
        self.timeout = timeout

    def send(self, line: str) -> None:
        subprocess.run(
            self.argv,
            input=(line + "\n").encode("utf-8"),
            timeout=self.timeout,
            check=True,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )


def emit_alert(event: AlertEvent, sinks) -> None:
    """Send one event to every sink; a sink failure is logged, never raised."""
    if not sinks:
        raise ConfigError("no alert sinks configured")
    line = event.to_json()
    failures = 0
    for sink in sinks:
        try:
            sink.send(line)
        except Exception as exc:
            failures += 1
            log.warning("alert sink %s failed: %s", type(sink).__name__, exc)
    if failures == len(sinks):
        log.warning("all %d alert sinks failed for %s", failures, event.source)
