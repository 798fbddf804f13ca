import subprocess
import sys

import pytest

from arabocr import cli
from arabocr.trainer import NumericError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def config_echo(err):
    return {parts[1]: parts[2] for parts in (l.split("\t") for l in err.splitlines()) if parts[0] == "config"}


@pytest.fixture
def vocab(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("بلد\nسلم\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def memorized(tmp_path_factory):
    """A 4-image corpus and a small model trained until it memorizes it."""
    root = tmp_path_factory.mktemp("memo")
    (root / "vocab.txt").write_text("بلد\nسلم\n", encoding="utf-8")
    assert cli.main(["synth", "--vocab", str(root / "vocab.txt"), "--n", "4", "--seed", "1", "--out", str(root / "corpus")]) == 0
    code = cli.main(
        ["train", "--corpus", str(root / "corpus"), "--out", str(root / "m.ckpt"), "--epochs", "60",
         "--batch-size", "4", "--channel-divisor", "8", "--hidden", "48", "--layers", "1", "--log", str(root / "log.tsv")]
    )  # fmt: skip
    assert code == 0
    return root


def test_shape_table(capsys):
    code, out, err = run(capsys, "shape", "بيت")
    assert code == 0
    rows = [l.split("\t") for l in out.splitlines()]
    assert rows[0] == ["index", "letter", "form", "paw"]
    assert rows[1:] == [["0", "ب", "initial", "0"], ["1", "ي", "medial", "0"], ["2", "ت", "final", "0"]]
    assert config_echo(err) == {"text": "بيت"}


def test_shape_errors(capsys):
    code, out, err = run(capsys, "shape", "")
    assert code == 2
    code, out, err = run(capsys, "shape", "بيتx")
    assert code == 2 and "'x'" in err and "index 3" in err and out == ""


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["shape", "بيت", "--frobnicate"])
    assert exc.value.code == 2


def test_synth_counts_and_resumes(tmp_path, vocab, capsys):
    out_dir = tmp_path / "corpus"
    code, out, err = run(capsys, "synth", "--vocab", vocab, "--n", 10, "--seed", 3, "--mode", "video", "--out", out_dir)
    assert code == 0
    assert out.splitlines() == [f"manifest\t{out_dir / 'manifest.tsv'}", "count\t10"]
    images = sorted((out_dir / "images").glob("*.pgm"))
    assert len(images) == 10
    records = [l for l in (out_dir / "manifest.tsv").read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    assert len(records) == 10
    stamps = [p.stat().st_mtime_ns for p in images]
    assert run(capsys, "synth", "--vocab", vocab, "--n", 10, "--seed", 3, "--mode", "video", "--out", out_dir)[0] == 0
    assert [p.stat().st_mtime_ns for p in images] == stamps
    echoed = config_echo(err)
    assert echoed["seed"] == "3" and echoed["rotation_deg"] == "7.0"


def test_synth_missing_vocab(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--vocab", tmp_path / "none.txt", "--n", 1, "--out", tmp_path / "c")
    assert code == 2 and "none.txt" in err


def test_synth_render_config_file(tmp_path, vocab, capsys):
    cfg = tmp_path / "render.cfg"
    cfg.write_text("rotation_deg=2\n", encoding="utf-8")
    code, _, err = run(capsys, "synth", "--vocab", vocab, "--n", 1, "--out", tmp_path / "c", "--config", cfg)
    assert code == 0 and config_echo(err)["rotation_deg"] == "2.0"
    cfg.write_text("bogus=1\n", encoding="utf-8")
    assert run(capsys, "synth", "--vocab", vocab, "--n", 1, "--out", tmp_path / "d", "--config", cfg)[0] == 2


def test_recognize_memorized_corpus(memorized, capsys):
    code, out, _ = run(capsys, "recognize", "--checkpoint", memorized / "m.ckpt", "--manifest", memorized / "corpus")
    assert code == 0
    labels = {l.split("\t")[0]: l.split("\t")[1] for l in
              (memorized / "corpus" / "manifest.tsv").read_text(encoding="utf-8").splitlines() if not l.startswith("#")}  # fmt: skip
    predicted = dict(l.split("\t") for l in out.splitlines())
    assert predicted == labels
    image = memorized / "corpus" / "images" / "000000.pgm"
    code, out, _ = run(capsys, "recognize", "--checkpoint", memorized / "m.ckpt", "--beam-width", 4, image)
    assert code == 0 and out == f"{image}\t{labels['images/000000.pgm']}\n"


def test_eval_identity_and_missing_predictions(memorized, tmp_path, capsys):
    corpus = memorized / "corpus"
    lines = [l.split("\t") for l in (corpus / "manifest.tsv").read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    preds = tmp_path / "preds.tsv"
    preds.write_text("".join(f"{p}\t{label}\n" for p, label, *_ in lines), encoding="utf-8")
    code, out, _ = run(capsys, "eval", "--manifest", corpus, "--predictions", preds)
    assert code == 0
    report = dict(l.split("\t") for l in out.splitlines())
    assert report["crr"] == report["wrr"] == report["lrr"] == "1.0"
    assert report["n_images"] == "4"
    preds.write_text(f"{lines[0][0]}\t{lines[0][1]}\n", encoding="utf-8")
    assert run(capsys, "eval", "--manifest", corpus, "--predictions", preds)[0] == 3


def test_train_log_format(memorized):
    lines = (memorized / "log.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 60
    assert all(len(l.split("\t")) == 4 for l in lines)


def test_train_alphabet_mismatch_exits_3(memorized, tmp_path, capsys):
    alpha = tmp_path / "alphabet.txt"
    alpha.write_text("ب\nل\nد\n", encoding="utf-8")
    code, _, err = run(
        capsys, "train", "--corpus", memorized / "corpus", "--out", tmp_path / "x.ckpt", "--alphabet", alpha, "--epochs", 1
    )
    assert code == 3
    assert "'س'" in err and "'م'" in err


def test_finetune_alphabet_mismatch_exits_3(memorized, tmp_path, capsys):
    (tmp_path / "v.txt").write_text("نور\n", encoding="utf-8")
    assert run(capsys, "synth", "--vocab", tmp_path / "v.txt", "--n", 2, "--out", tmp_path / "c")[0] == 0
    code, _, err = run(
        capsys, "finetune", "--checkpoint", memorized / "m.ckpt", "--corpus", tmp_path / "c", "--out", tmp_path / "f.ckpt"
    )
    assert code == 3 and "'ن'" in err


def test_config_precedence(memorized, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs=2\nbatch_size=4\nchannel_divisor=16\nhidden=4\nlayers=1\n", encoding="utf-8")
    base = ["train", "--corpus", memorized / "corpus", "--config", cfg]
    code, out, err = run(capsys, *base, "--out", tmp_path / "a.ckpt")
    assert code == 0 and config_echo(err)["epochs"] == "2" and "epochs\t2" in out
    code, out, err = run(capsys, *base, "--out", tmp_path / "b.ckpt", "--epochs", 1)
    assert code == 0 and config_echo(err)["epochs"] == "1" and "epochs\t1" in out
    assert config_echo(err)["layers"] == "1" and config_echo(err)["clip"] == "False"


def test_train_is_deterministic(memorized, tmp_path, capsys):
    args = ["train", "--corpus", memorized / "corpus", "--epochs", 2, "--batch-size", 2,
            "--channel-divisor", 16, "--hidden", 4, "--layers", 1, "--seed", 5]  # fmt: skip
    assert run(capsys, *args, "--out", tmp_path / "a.ckpt", "--log", tmp_path / "a.log")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.ckpt", "--log", tmp_path / "b.log")[0] == 0
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_numeric_failure_exit_code(memorized, tmp_path, capsys, monkeypatch):
    def explode(*args, **kwargs):
        raise NumericError("epoch 1: mean loss is nan")

    monkeypatch.setattr(cli, "train", explode)
    code, _, err = run(capsys, "train", "--corpus", memorized / "corpus", "--out", tmp_path / "x.ckpt", "--epochs", 1)
    assert code == 4 and "nan" in err


def test_bad_checkpoint_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"ATRC\x01")
    assert run(capsys, "recognize", "--checkpoint", bad, tmp_path / "img.pgm")[0] == 3
    assert run(capsys, "recognize", "--checkpoint", tmp_path / "missing.ckpt", tmp_path / "img.pgm")[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "arabocr", "shape", "لا"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1] == "0\tلا\tisolated\t0"
