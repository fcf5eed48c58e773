import io
import json
import logging
import shutil
import threading

import numpy as np
import pytest

from cryalert.cli import DirectoryWatcher, main
from cryalert.errors import FormatError
from cryalert.infer_alert import StdoutSink
from cryalert.synth import CLASSES

from conftest import make_wav_bytes


class TestSynthCommand:
    def test_writes_corpus(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "c"), "--per-class", "2"])
        assert rc == 0
        assert "wrote 8 clips" in capsys.readouterr().out
        for kind in CLASSES:
            assert len(list((tmp_path / "c" / kind).glob("*.wav"))) == 2

    def test_env_seed_used(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CRYALERT_SEED", "21")
        main(["synth", "--out", str(tmp_path / "env"), "--per-class", "1"])
        monkeypatch.delenv("CRYALERT_SEED")
        main(["synth", "--out", str(tmp_path / "flag"), "--per-class", "1", "--seed", "21"])
        main(["synth", "--out", str(tmp_path / "default"), "--per-class", "1"])
        env_bytes = (tmp_path / "env" / "tone" / "tone_0000.wav").read_bytes()
        flag_bytes = (tmp_path / "flag" / "tone" / "tone_0000.wav").read_bytes()
        default_bytes = (tmp_path / "default" / "tone" / "tone_0000.wav").read_bytes()
        assert env_bytes == flag_bytes
        assert env_bytes != default_bytes

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CRYALERT_SEED", "21")
        main(["synth", "--out", str(tmp_path / "a"), "--per-class", "1", "--seed", "5"])
        monkeypatch.delenv("CRYALERT_SEED")
        main(["synth", "--out", str(tmp_path / "b"), "--per-class", "1", "--seed", "5"])
        assert (tmp_path / "a" / "am" / "am_0000.wav").read_bytes() == \
               (tmp_path / "b" / "am" / "am_0000.wav").read_bytes()

    def test_bad_env_seed(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CRYALERT_SEED", "many")
        rc = main(["synth", "--out", str(tmp_path / "x"), "--per-class", "1"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestTrainCommand:
    def test_full_run(self, trained):
        rc, model_path, report, _elapsed = trained
        assert rc == 0
        assert model_path.exists()
        assert report is not None
        assert report["epochs"] == 10
        assert len(report["val_loss"]) == 10

    def test_usage_errors(self):
        assert main([]) == 2
        assert main(["train"]) == 2  # missing required flags
        assert main(["train", "--data", "x", "--out", "y", "--lr", "-1"]) == 2
        assert main(["train", "--data", "x", "--out", "y", "--epochs", "0"]) == 2
        assert main(["train", "--data", "x", "--out", "y", "--split", "1,1"]) == 2

    def test_missing_data_dir(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "m.cry")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestEvalCommand:
    def test_scores_split(self, trained, synth_corpus, capsys):
        _, model_path, _, _ = trained
        rc = main(["eval", "--model", str(model_path), "--data", str(synth_corpus),
                   "--split", "test"])
        out = capsys.readouterr().out
        assert rc == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("test loss: ")
        assert lines[1].startswith("test accuracy: ")
        # four-decimal rendering
        assert len(lines[1].split(".")[-1]) == 4

    def test_confusion_flag(self, trained, synth_corpus, capsys):
        _, model_path, _, _ = trained
        rc = main(["eval", "--model", str(model_path), "--data", str(synth_corpus),
                   "--split", "val", "--confusion"])
        out = capsys.readouterr().out
        assert rc == 0
        for kind in CLASSES:
            assert kind in out

    def test_class_mismatch(self, trained, tmp_path, capsys):
        _, model_path, _, _ = trained
        rc = main(["synth", "--out", str(tmp_path / "c"), "--per-class", "1"])
        assert rc == 0
        capsys.readouterr()
        shutil.move(tmp_path / "c" / "tone", tmp_path / "c" / "zway")
        rc = main(["eval", "--model", str(model_path), "--data", str(tmp_path / "c")])
        err = capsys.readouterr().err
        assert rc == 1
        assert "tone" in err and "zway" in err

    def test_missing_model(self, synth_corpus, tmp_path, capsys):
        rc = main(["eval", "--model", str(tmp_path / "no.cry"),
                   "--data", str(synth_corpus)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestPredictCommand:
    def test_table_sorted_descending(self, trained, small_corpus, capsys):
        _, model_path, _, _ = trained
        wav = next((small_corpus / "tone").glob("*.wav"))
        rc = main(["predict", "--model", str(model_path), "--input", str(wav)])
        out = capsys.readouterr().out
        assert rc == 0
        probs = [float(line.split(": ")[1]) for line in out.strip().splitlines()]
        assert len(probs) == 4
        assert probs == sorted(probs, reverse=True)

    def test_json_output(self, trained, small_corpus, capsys):
        _, model_path, _, _ = trained
        wav = next((small_corpus / "am").glob("*.wav"))
        rc = main(["predict", "--model", str(model_path), "--input", str(wav),
                   "--json"])
        out = capsys.readouterr().out
        assert rc == 0
        parsed = json.loads(out)
        assert sorted(parsed) == sorted(CLASSES)
        assert abs(sum(parsed.values()) - 1.0) < 1e-9

    def test_short_input(self, trained, tmp_path, capsys):
        _, model_path, _, _ = trained
        wav = tmp_path / "tiny.wav"
        wav.write_bytes(make_wav_bytes([0] * 100))
        rc = main(["predict", "--model", str(model_path), "--input", str(wav)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_input(self, trained, tmp_path, capsys):
        _, model_path, _, _ = trained
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"not audio at all")
        rc = main(["predict", "--model", str(model_path), "--input", str(bad)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestSpectrogramCommand:
    def test_pgm_export(self, small_corpus, tmp_path, capsys):
        wav = next((small_corpus / "chirp").glob("*.wav"))
        out = tmp_path / "spec.pgm"
        rc = main(["spectrogram", "--input", str(wav), "--out", str(out)])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "124 x 129"
        assert out.read_bytes().startswith(b"P5\n129 124\n255\n")

    def test_csv_export(self, small_corpus, tmp_path):
        wav = next((small_corpus / "noise").glob("*.wav"))
        out = tmp_path / "spec.csv"
        rc = main(["spectrogram", "--input", str(wav), "--out", str(out)])
        assert rc == 0
        grid = np.loadtxt(out, delimiter=",")
        assert grid.shape == (124, 129)

    def test_unknown_extension(self, small_corpus, tmp_path, capsys):
        wav = next((small_corpus / "tone").glob("*.wav"))
        rc = main(["spectrogram", "--input", str(wav),
                   "--out", str(tmp_path / "spec.png")])
        capsys.readouterr()
        assert rc == 2


class TestWatchUsage:
    def test_threshold_validated(self, tmp_path, capsys):
        rc = main(["watch", "--model", "m", "--dir", str(tmp_path),
                   "--threshold", "1.5"])
        capsys.readouterr()
        assert rc == 2

    def test_missing_dir(self, trained, tmp_path, capsys):
        _, model_path, _, _ = trained
        rc = main(["watch", "--model", str(model_path),
                   "--dir", str(tmp_path / "nope")])
        assert rc == 1
        assert "does not exist" in capsys.readouterr().err

    def test_unknown_alert_class(self, trained, tmp_path, capsys):
        _, model_path, _, _ = trained
        rc = main(["watch", "--model", str(model_path), "--dir", str(tmp_path),
                   "--alert-classes", "ghost"])
        assert rc == 1
        assert "ghost" in capsys.readouterr().err


def tone_probs(_path):
    return {"am": 0.02, "chirp": 0.02, "noise": 0.01, "tone": 0.95}


def make_watcher(directory, classify=tone_probs, threshold=0.5, cooldown=0.0,
                 clock=None, alert_classes=("tone",)):
    buf = io.StringIO()
    kwargs = {"cooldown": cooldown}
    if clock is not None:
        kwargs["clock"] = clock
    watcher = DirectoryWatcher(directory, classify, [StdoutSink(buf)],
                               alert_classes, threshold, **kwargs)
    return watcher, buf


def drop_wav(directory, name, samples=None):
    path = directory / name
    path.write_bytes(make_wav_bytes(samples if samples is not None else [0] * 400))
    return path


class TestDirectoryWatcher:
    def test_needs_two_stable_polls(self, tmp_path):
        watcher, buf = make_watcher(tmp_path)
        drop_wav(tmp_path, "one.wav")
        assert watcher.poll_once() == []
        events = watcher.poll_once()
        assert len(events) == 1
        assert events[0].alert is True
        assert events[0].predicted_label == "tone"
        line = buf.getvalue().strip()
        assert json.loads(line)["source"].endswith("one.wav")

    def test_never_processes_twice(self, tmp_path):
        watcher, _ = make_watcher(tmp_path)
        drop_wav(tmp_path, "one.wav")
        watcher.poll_once()
        assert len(watcher.poll_once()) == 1
        assert watcher.poll_once() == []
        assert watcher.poll_once() == []

    def test_growing_file_deferred(self, tmp_path):
        watcher, _ = make_watcher(tmp_path)
        path = drop_wav(tmp_path, "grow.wav", [0] * 100)
        assert watcher.poll_once() == []
        path.write_bytes(make_wav_bytes([0] * 400))  # changed size
        assert watcher.poll_once() == []
        assert len(watcher.poll_once()) == 1

    def test_malformed_file_skipped_and_logged(self, tmp_path, caplog):
        def classify(path):
            raise FormatError(f"{path}: no RIFF header")

        watcher, buf = make_watcher(tmp_path, classify=classify)
        (tmp_path / "bad.wav").write_bytes(b"garbage")
        watcher.poll_once()
        with caplog.at_level(logging.WARNING, logger="cryalert"):
            assert watcher.poll_once() == []
        assert any("skipping" in r.message for r in caplog.records)
        assert buf.getvalue() == ""
        # a failed file is not retried either
        assert watcher.poll_once() == []

    def test_non_alert_events_still_emitted(self, tmp_path):
        watcher, buf = make_watcher(
            tmp_path, classify=lambda p: {"tone": 0.2, "noise": 0.8},
            alert_classes=("tone",))
        drop_wav(tmp_path, "calm.wav")
        watcher.poll_once()
        events = watcher.poll_once()
        assert len(events) == 1
        assert events[0].alert is False
        assert json.loads(buf.getvalue())["alert"] is False

    def test_cooldown_suppresses_repeat_alerts(self, tmp_path):
        fake = [1000.0]
        watcher, buf = make_watcher(tmp_path, cooldown=30.0,
                                    clock=lambda: fake[0])
        drop_wav(tmp_path, "a.wav")
        drop_wav(tmp_path, "b.wav")
        watcher.poll_once()
        events = watcher.poll_once()
        # both files are ready but only the first alert escapes
        assert len(events) == 1
        assert len(buf.getvalue().strip().splitlines()) == 1

        fake[0] += 31.0
        drop_wav(tmp_path, "c.wav")
        watcher.poll_once()
        assert len(watcher.poll_once()) == 1

    def test_zero_cooldown_never_suppresses(self, tmp_path):
        watcher, buf = make_watcher(tmp_path, cooldown=0.0)
        drop_wav(tmp_path, "a.wav")
        drop_wav(tmp_path, "b.wav")
        watcher.poll_once()
        assert len(watcher.poll_once()) == 2
        assert len(buf.getvalue().strip().splitlines()) == 2

    def test_run_exits_on_stop_flag(self, tmp_path):
        watcher, _ = make_watcher(tmp_path)
        timer = threading.Timer(0.3, lambda: setattr(watcher, "stop", True))
        timer.start()
        watcher.run(0.01)  # returns once the flag is seen
        timer.cancel()
        assert watcher.stop


class TestMainPlumbing:
    def test_unknown_command(self, capsys):
        rc = main(["frobnicate"])
        capsys.readouterr()
        assert rc == 2

    def test_help_exits_zero(self, capsys):
        rc = main(["--help"])
        capsys.readouterr()
        assert rc == 0
