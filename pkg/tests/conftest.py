"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the production code paths: the DFT
oracle is an O(n^2) matrix product, WAV bytes are assembled field by
field, and the streaming-statistics oracle accumulates running sums.
"""

import struct
import time
from pathlib import Path

import numpy as np
import pytest

from cryalert.cli import main
from cryalert.synth import generate_corpus


# ---------------------------------------------------------------------------
# oracles

def dft_direct(x: np.ndarray) -> np.ndarray:
    """O(n^2) DFT via the explicit twiddle matrix; works on (..., n)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ w.T


def rel_error(actual, expected) -> float:
    """Sup-norm relative error: max|a - e| / max|e|."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    scale = np.max(np.abs(expected))
    if scale == 0:
        return float(np.max(np.abs(actual)))
    return float(np.max(np.abs(actual - expected)) / scale)


def make_wav_bytes(samples, rate=16000, channels=1, format_code=1, bits=16,
                   extra_chunk=None):
    """Assemble RIFF/WAVE bytes by hand, one field at a time.

    samples: flat iterable of int16 values (interleaved when
    channels > 1).  format_code/bits can be bent to build bad files.
    """
    data = b"".join(struct.pack("<h", int(s)) for s in samples)
    block_align = channels * bits // 8
    byte_rate = rate * block_align
    fmt = struct.pack("<HHIIHH", format_code, channels, rate, byte_rate,
                      block_align, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if extra_chunk is not None:
        body = extra_chunk
        chunks += b"junk" + struct.pack("<I", len(body)) + body + (b"\x00" if len(body) % 2 else b"")
    chunks += b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def streaming_mean_var(images, chunk=1000):
    """Running-sums mean/variance oracle (population variance)."""
    count = 0
    total = 0.0
    total_sq = 0.0
    for im in images:
        flat = np.asarray(im, dtype=np.float64).ravel()
        for start in range(0, flat.size, chunk):
            part = flat[start:start + chunk]
            count += part.size
            total += float(part.sum())
            total_sq += float((part * part).sum())
    mean = total / count
    return mean, total_sq / count - mean * mean


def conv2d_loops(x, kernel, bias):
    """Six-nested-loop valid cross-correlation oracle."""
    h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    out = np.zeros((h - kh + 1, w - kw + 1, cout))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            for o in range(cout):
                acc = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        for c in range(cin):
                            acc += x[i + di, j + dj, c] * kernel[di, dj, c, o]
                out[i, j, o] = acc + bias[o]
    return out


def maxpool_loops(x):
    """Window-scan max-pool oracle."""
    h, w, c = x.shape
    out = np.zeros((h // 2, w // 2, c))
    for i in range(h // 2):
        for j in range(w // 2):
            for ch in range(c):
                out[i, j, ch] = x[2 * i:2 * i + 2, 2 * j:2 * j + 2, ch].max()
    return out


# ---------------------------------------------------------------------------
# session fixtures

@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory) -> Path:
    """Full synthetic corpus: 200 clips per class, seed 7."""
    root = tmp_path_factory.mktemp("corpus") / "synth"
    generate_corpus(root, per_class=200, seed=7)
    return root


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    """Reduced corpus for cheap training runs: 12 clips per class."""
    root = tmp_path_factory.mktemp("corpus_small") / "synth"
    generate_corpus(root, per_class=12, seed=7)
    return root


@pytest.fixture(scope="session")
def trained(synth_corpus, tmp_path_factory):
    """One full default training run through the CLI, shared by tests.

    Returns (exit code, model path, report dict, elapsed seconds).
    """
    import json

    out = tmp_path_factory.mktemp("model") / "synth.cry"
    start = time.monotonic()
    rc = main(["train", "--data", str(synth_corpus), "--out", str(out)])
    elapsed = time.monotonic() - start
    report_path = Path(str(out) + ".report.json")
    report = json.loads(report_path.read_text()) if report_path.exists() else None
    return rc, out, report, elapsed
