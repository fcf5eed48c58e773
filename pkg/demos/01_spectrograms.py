"""Waveforms to spectrogram images.

Synthesizes one clip per class, walks it through the STFT front end and
exports the spectrograms as PGM images and CSV grids into a temp
directory.
"""

import tempfile
from pathlib import Path

import numpy as np

from cryalert import StftConfig, export_spectrogram, stft_magnitude, synth_clip
from cryalert.rng import STREAM_SYNTH, philox_stream
from cryalert.synth import CLASSES

out_dir = Path(tempfile.mkdtemp(prefix="cryalert_spectro_"))
cfg = StftConfig()
rng = philox_stream(7, STREAM_SYNTH)

print(f"STFT: frame {cfg.frame_length}, step {cfg.frame_step}, "
      f"fft {cfg.fft_length}, {cfg.window} window")
print(f"writing to {out_dir}\n")

for kind in CLASSES:
    clip = synth_clip(kind, rng)
    spec = stft_magnitude(clip, cfg)
    peak_bin = int(np.argmax(spec.values.sum(axis=0)))
    peak_hz = peak_bin * clip.sample_rate / cfg.fft_length

    export_spectrogram(spec, out_dir / f"{kind}.pgm", "pgm")
    export_spectrogram(spec, out_dir / f"{kind}.csv", "csv")

    print(f"{kind:>6}: {spec.num_frames} frames x {spec.num_bins} bins, "
          f"energy peak at bin {peak_bin} (~{peak_hz:.0f} Hz)")

print("\nopen the .pgm files in any image viewer; time runs down the rows")
