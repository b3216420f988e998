import json
import subprocess
import sys
from pathlib import Path

import pytest
import torch

from fdgnn.cli import main
from fdgnn.config import ConfigError, parse_config
from fdgnn.events import Event, StreamHeader, write_stream
from fdgnn.model import FDGNN
from fdgnn.intensity import intensity
from fdgnn.params import ModelConfig, ModelParams, load_model, save_model

TOY_INI = Path(__file__).resolve().parents[1] / "configs" / "toy.ini"
SMALL_INI = """
[model]
embed_dim = 3
attr_embed_dim = 3
raw_dim = 2
[train]
lr = 0.05
epochs = 4
batch_events = 10
seed = 1
[simulate]
horizon = 40
node_universe = 8
g0_nodes = 4
g0_edges = 2
rates = 0.05, 0.02, 0.05, 0.05, 0.4, 0.3
attr_mode = noise
seed = 2
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, out, kv


@pytest.fixture
def files(tmp_path, toy_header, toy_events):
    stream = tmp_path / "toy.jsonl"
    write_stream(stream, toy_header, toy_events)
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_INI)
    return tmp_path, stream, ini


def test_validate_legal_stream(capsys, files):
    _, stream, _ = files
    code, out, _ = run(capsys, "validate", stream)
    assert code == 0 and out == ""


def test_validate_illegal_stream(capsys, tmp_path):
    p = tmp_path / "bad.jsonl"
    write_stream(p, StreamHeader(1, 1, 3), [Event(0, 1.0, 0, 0, (0.0,)), Event(1, 2.0, 0, 0, (0.0,))])
    code, out, _ = run(capsys, "validate", p)
    assert code == 1 and "readd-active" in out


def test_parse_and_io_errors_exit_2(capsys, tmp_path):
    bad = tmp_path / "garbage.jsonl"
    bad.write_text("not json\n")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.jsonl")]) == 2


def test_intensity_forbidden_zero_on_active_node(capsys, files):
    tmp, stream, ini = files
    model = tmp / "m.bin"
    assert run(capsys, "train", "--stream", stream, "--config", ini, "--out", model, "--init-only")[0] == 0
    code, _, kv = run(capsys, "intensity", "--model", model, "--stream", stream, "--at", 2.5, "--kind", 0, "--node", 0)
    assert code == 0 and kv == {"kind": "0", "lambda": "0", "branch": "forbidden-zero"}
    code, _, kv = run(capsys, "intensity", "--model", model, "--stream", stream, "--at", 2.5, "--kind", 3, "--edge", "1,0")
    assert code == 0 and kv["branch"] == "scored" and float(kv["lambda"]) > 0


def test_embed_outputs_vector(capsys, files):
    tmp, stream, ini = files
    model = tmp / "m.bin"
    run(capsys, "train", "--stream", stream, "--config", ini, "--out", model, "--init-only")
    code, _, kv = run(capsys, "embed", "--model", model, "--stream", stream, "--at", 3.0, "--edge", "1,2")
    assert code == 0 and kv["status"] == "active"
    vec = [float(x) for x in kv["embedding"].split(",")]
    assert len(vec) == 3 and all(0 < x < 1 for x in vec)
    assert main(["embed", "--model", str(model), "--stream", str(stream), "--at", "3"]) == 2


def test_update_writes_model(capsys, files):
    tmp, stream, ini = files
    model = tmp / "m.bin"
    run(capsys, "train", "--stream", stream, "--config", ini, "--out", model, "--init-only")
    line = json.dumps({"seq": 7, "t": 7.0, "k": 4, "node": 2, "attr": [0.3, 0.3]})
    code, _, kv = run(capsys, "update", "--model", model, "--stream", stream, "--event-line", line, "--out", tmp / "u.bin", "--lr", 0.01)
    assert code == 0 and set(kv["touched"].split(",")) <= set(load_model(tmp / "u.bin")[0])
    bad = json.dumps({"seq": 7, "t": 7.0, "k": 0, "node": 2, "attr": [0.3, 0.3]})
    assert main(["update", "--model", str(model), "--stream", str(stream), "--event-line", bad, "--out", str(tmp / "v.bin")]) == 1


def test_simulate_validate_train_evaluate_round_trip(capsys, files):
    tmp, _, ini = files
    stream = tmp / "sim.jsonl"
    code, _, kv = run(capsys, "simulate", "--config", ini, "--out", stream, "--seed", 3)
    assert code == 0 and int(kv["events"]) > 20 and Path(kv["sidecar"]).exists()
    assert run(capsys, "validate", stream)[0] == 0
    code, _, kv = run(capsys, "train", "--stream", stream, "--config", ini, "--out", tmp / "t.bin")
    assert code == 0 and kv["epochs"] == "4"
    hist = (tmp / "t.bin.history").read_text().splitlines()
    assert len(hist) == 4 and hist[0].startswith("epoch=0 loss=")
    run(capsys, "train", "--stream", stream, "--config", ini, "--out", tmp / "i.bin", "--init-only")
    _, _, trained = run(capsys, "evaluate", "--model", tmp / "t.bin", "--stream", stream)
    _, _, init = run(capsys, "evaluate", "--model", tmp / "i.bin", "--stream", stream)
    assert float(trained["mean_nll"]) < float(init["mean_nll"])
    assert set(trained) == {"events", "mean_nll", "type_accuracy", "mean_survival", "mean_event_term"}


def test_seed_flag_overrides_config(capsys, files):
    tmp, stream, ini = files
    for name, seed in (("a", 5), ("b", 5), ("c", 6)):
        run(capsys, "train", "--stream", stream, "--config", ini, "--out", tmp / f"{name}.bin", "--seed", seed)
    a, b, c = ((tmp / f"{n}.bin").read_bytes() for n in "abc")
    assert a == b and a != c


def test_default_toy_config_round_trip(capsys, tmp_path):
    stream = tmp_path / "toy.jsonl"
    assert run(capsys, "simulate", "--config", TOY_INI, "--out", stream)[0] == 0
    assert run(capsys, "validate", stream)[0] == 0
    assert run(capsys, "train", "--stream", stream, "--config", TOY_INI, "--out", tmp_path / "m.bin")[0] == 0
    code, _, kv = run(capsys, "evaluate", "--model", tmp_path / "m.bin", "--stream", stream)
    assert code == 0 and float(kv["mean_nll"]) == float(kv["mean_nll"])


def test_model_file_round_trip_is_bit_exact(tmp_path, toy_header, toy_events):
    cfg = ModelConfig(2, 1, embed_dim=4, attr_embed_dim=3, raw_dim=2, bptt_window=7, edge_attr_factor=True)
    params = ModelParams.initialize(cfg, seed=12, scale=1.0)
    save_model(tmp_path / "m.bin", params, cfg)
    loaded, cfg2 = load_model(tmp_path / "m.bin")
    assert cfg2 == cfg and loaded.equal(params)
    assert (tmp_path / "m.bin").read_bytes().startswith(b"FDGNN1")
    outs = []
    for p in (params, loaded):
        m = FDGNN(toy_header, p, cfg)
        with torch.no_grad():
            m.replay(toy_events)
            outs.append([intensity(m, k, x).lam for k, x in [(0, 5), (1, 0), (2, (0, 2)), (3, (0, 2)), (4, 2), (5, (1, 2))]])
    assert outs[0] == outs[1]


def test_corrupt_model_file(tmp_path):
    (tmp_path / "m.bin").write_bytes(b"FDGNN1\n\x01")
    with pytest.raises(ValueError):
        load_model(tmp_path / "m.bin")
    (tmp_path / "x.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_model(tmp_path / "x.bin")


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config("[train]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\nlr = fast\n")
    run_cfg = parse_config("[model]\nembed_dim = 4\n[train]\nkinds = 4, 5\n", seed=9)
    assert run_cfg.train.seed == 9 and run_cfg.train.kinds == (4, 5)
    assert run_cfg.model_config(2, 1).embed_dim == 4


def test_module_entry_point(tmp_path):
    bad = tmp_path / "bad.jsonl"
    write_stream(bad, StreamHeader(1, 1, 3), [Event(0, 1.0, 1, 0, (0.0,))])
    proc = subprocess.run([sys.executable, "-m", "fdgnn", "validate", str(bad)], capture_output=True, text=True)
    assert proc.returncode == 1
    assert all("=" in line or line.startswith("violation ") for line in proc.stdout.splitlines())
