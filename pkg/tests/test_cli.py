import numpy as np
import pytest

from gids.can import load_log
from gids.cli import main, read_config
from gids.gan import TrainedGids


@pytest.fixture
def normal_log(tmp_path):
    path = tmp_path / "normal.log"
    assert main(["synth", "--duration", "4", "--seed", "7", "-o", str(path)]) == 0
    return path


def test_synth_is_reproducible(tmp_path, normal_log):
    again = tmp_path / "again.log"
    assert main(["synth", "--duration", "4", "--seed", "7", "-o", str(again)]) == 0
    assert again.read_bytes() == normal_log.read_bytes()
    cfg = read_config(tmp_path / "synth.config")
    assert cfg["seed"] == "7" and cfg["duration"] == "4.0" and cfg["profile"] == "default"


def test_inject_dos(tmp_path, normal_log):
    out = tmp_path / "dos.log"
    before = normal_log.read_bytes()
    assert main(["inject", "--attack", "dos", "--period-ms", "0.3", "--window", "1:2",
                 "-i", str(normal_log), "-o", str(out)]) == 0
    assert normal_log.read_bytes() == before
    log = load_log(out)
    injected = [f for f in log if f.injected]
    assert len(injected) == 3333 and {f.can_id for f in injected} == {0}


def test_usage_errors(tmp_path, normal_log, capsys):
    assert main([]) == 1
    assert main(["synth"]) == 1
    assert main(["nope"]) == 1
    assert main(["inject", "--attack", "dos", "--window", "5", "-i", str(normal_log),
                 "-o", str(tmp_path / "x.log")]) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors(tmp_path, normal_log):
    assert main(["inject", "--attack", "dos", "--window", "50:60", "-i", str(normal_log),
                 "-o", str(tmp_path / "x.log")]) == 2
    bad = tmp_path / "bad.log"
    bad.write_text("0.1,zzz,0,R\n")
    assert main(["encode", "-i", str(bad), "-o", str(tmp_path / "x.img")]) == 2
    assert main(["encode", "-i", str(tmp_path / "missing.log"), "-o", str(tmp_path / "x.img")]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# synthetic run\nduration = 2\nseed=3\njitter=0.0\n")
    a, b = tmp_path / "a" / "a.log", tmp_path / "b" / "b.log"
    assert main(["synth", "--config", str(conf), "-o", str(a)]) == 0
    assert main(["synth", "--config", str(conf), "--seed", "4", "-o", str(b)]) == 0
    ca, cb = read_config(a.parent / "synth.config"), read_config(b.parent / "synth.config")
    assert (ca["seed"], cb["seed"], ca["duration"], ca["jitter"]) == ("3", "4", "2", "0.0")
    assert a.read_bytes() != b.read_bytes()
    conf.write_text("colour=blue\n")
    assert main(["synth", "--config", str(conf), "-o", str(a)]) == 1


def test_full_pipeline(tmp_path, normal_log):
    dos = tmp_path / "dos.log"
    assert main(["inject", "--attack", "dos", "--window", "1:2", "-i", str(normal_log), "-o", str(dos)]) == 0
    assert main(["encode", "--input-size", "16", "-i", str(dos), "-o", str(tmp_path / "dos.img")]) == 0
    d1 = tmp_path / "d1.gidsw"
    assert main(["train-d1", "--input-size", "16", "--epochs", "2", "-i", str(dos), "-o", str(d1)]) == 0
    model = tmp_path / "m" / "model.gids"
    assert main(["train-gan", "--input-size", "16", "--epochs", "1", "--noise-dim", "8",
                 "-i", str(normal_log), "--d1", str(d1), "-o", str(model)]) == 0
    m = TrainedGids.load_file(model)
    assert m.d1 is not None and m.encoder_cfg.input_size == 16
    assert (model.parent / "history.csv").read_text().startswith("epoch,d_loss")
    v1, v2 = tmp_path / "v1.csv", tmp_path / "v2.csv"
    assert main(["detect", "-m", str(model), "-i", str(dos), "-o", str(v1)]) == 0
    assert main(["detect", "-m", str(model), "-i", str(dos), "-o", str(v2)]) == 0
    assert v1.read_bytes() == v2.read_bytes()
    assert v1.read_text().splitlines()[0] == "image_index,first_frame_ts,d1_score,d2_score,stage,decision"
    ev = tmp_path / "eval"
    assert main(["eval", "-m", str(model), "-i", str(dos), "-o", str(ev), "--roc"]) == 0
    assert (ev / "report_d2.csv").exists() and (ev / "report_cascade.csv").exists()
    assert (ev / "roc_dos.csv").read_text().startswith("fpr,tpr")
    assert main(["bench", "-m", str(model), "-i", str(dos), "--repeat", "1"]) == 0


def test_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--sizes", "16,32", "--epochs", "1", "--noise-dim", "8",
                 "--train-s", "4", "--test-s", "3", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "input_size,accuracy,auc" and [l.split(",")[0] for l in lines[1:]] == ["16", "32"]
    assert all(0 <= float(l.split(",")[1]) <= 1 for l in lines[1:])
    assert main(["sweep", "--sizes", "0", "-o", str(out)]) == 1

