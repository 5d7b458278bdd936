import json
import math
import os
import struct

import numpy as np
import pytest
import yaml

from symnet.cli import main
from symnet.errors import ConfigError, DivergenceError, FormatError, IngestionError
from symnet.harness import approx, checkpoint as C, data as D
from symnet.harness.config import from_dict, load_config
from symnet.harness.report import dumps, perplexity, read_report
from symnet.harness.runner import build_model, run_experiment, run_repeated
from symnet.harness.sweep import sweep_nway
from symnet.nn import Conv2d, Linear, Model, Sequential, make_weight
from symnet.symmetry import SymmetryKind

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def blob_images(n, classes, rng, shape=(3, 32, 32), noise=40):
    """uint8 images whose per-channel means depend on the class."""
    y = rng.integers(0, classes, n)
    centers = rng.integers(40, 216, (classes, shape[0]))
    x = centers[y][:, :, None, None] + rng.normal(0, noise, (n,) + shape)
    return np.clip(x, 0, 255).astype(np.uint8), y


def write_csv(path, x, y):
    with open(path, "w") as f:
        for xi, yi in zip(x.reshape(len(x), -1), y):
            f.write(",".join([str(int(yi))] + [f"{v:.6g}" for v in xi]) + "\n")


def tiny_cfg(tmp_path, n=300, classes=3, **over):
    rng = np.random.default_rng(5)
    x, y = blob_images(n, classes, rng, (1, 8, 8))
    path = tmp_path / "tiny.csv"
    if not path.exists():
        write_csv(path, x, y)
    raw = {
        "name": "tiny", "seed": 3,
        "arch": {"name": "small_cnn", "width": 4, "classes": classes},
        "symmetry": {"kind": "triangular", "location": "square"},
        "optimizer": {"lr": 0.05, "epochs": 2, "batch_size": 32},
        "data": {"path": "tiny.csv", "format": "csv", "shape": [1, 8, 8], "val_size": 60},
    }
    for k, v in over.items():
        raw[k] = {**raw[k], **v} if isinstance(v, dict) else v
    return from_dict(raw, str(tmp_path))


# config

def base_raw():
    return {"arch": {"name": "wrn"}, "data": {"path": "x", "format": "cifar-binary"}}


@pytest.mark.parametrize("patch,loc", [
    ({"bogus": 1}, "bogus"),
    ({"arch": {"name": "wrn", "depth": 15}}, "arch.depth"),
    ({"arch": {"name": "mlp"}}, "arch.name"),
    ({"arch": {"name": "wrn", "widht": 2}}, "arch.widht"),
    ({"symmetry": {"kind": "diagonal"}}, "symmetry.kind"),
    ({"symmetry": {"kind": "triangular", "location": "hidden_gates"}}, "symmetry.location"),
    ({"symmetry": {"kind": "soft", "rho": -1.0}}, "symmetry.rho"),
    ({"symmetry": {"kind": "chunking"}}, "symmetry.n_way"),
    ({"optimizer": {"lr": -0.1}}, "optimizer.lr"),
    ({"optimizer": {"epochs": "ten"}}, "optimizer.epochs"),
    ({"optimizer": {"schedule": [[5, 0.1], [3, 0.1]]}}, "optimizer.schedule"),
    ({"data": {"path": "x"}}, "data.format"),
    ({"data": {"path": "x", "format": "png"}}, "data.format"),
    ({"seed": -1}, "seed"),
])
def test_config_rejects_with_location(patch, loc):
    raw = {**base_raw(), **patch}
    with pytest.raises(ConfigError) as e:
        from_dict(raw)
    assert e.value.location == loc
    assert loc in str(e.value)


def test_config_defaults_filled():
    cfg = from_dict(base_raw())
    assert cfg.arch["depth"] == 16 and cfg.optimizer["batch_size"] == 64 and cfg.symmetry["kind"] == "none"
    assert from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_config_share_only_for_wrn():
    raw = {"arch": {"name": "small_cnn"}, "symmetry": {"share_within_stage": True},
           "data": {"path": "x", "format": "csv"}}
    with pytest.raises(ConfigError, match="share_within_stage"):
        from_dict(raw)


def test_config_yaml_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("arch:\n  name: wrn\n  depth: [16\n")
    with pytest.raises(ConfigError) as e:
        load_config(str(p))
    assert e.value.location.startswith("line")


def test_config_missing_file_names_path(tmp_path):
    p = str(tmp_path / "none.yaml")
    with pytest.raises(ConfigError, match="none.yaml"):
        load_config(p)


def test_shipped_configs_validate():
    names = [f for f in os.listdir(CONFIGS) if f.endswith(".yaml")]
    assert names
    for f in names:
        load_config(os.path.join(CONFIGS, f))


# data

def test_cifar_two_record_fixture(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (2, 3, 32, 32), dtype=np.uint8)
    p = tmp_path / "b.bin"
    D.write_cifar_binary(p, img, [3, 7])
    assert p.stat().st_size == 2 * 3073
    ds = D.load_dataset(str(p), "cifar-binary")
    assert len(ds) == 2 and ds.x.shape == (2, 3, 32, 32)
    assert list(ds.y) == [3, 7]
    assert np.array_equal(ds.x, img)
    pairs = list(ds)
    assert pairs[1][0].shape == (3, 32, 32) and pairs[1][1] == 7


def test_cifar_directory_of_batches(tmp_path):
    rng = np.random.default_rng(1)
    for i in (1, 2):
        D.write_cifar_binary(tmp_path / f"data_batch_{i}.bin", rng.integers(0, 256, (3, 3072)), [i] * 3)
    ds = D.load_dataset(str(tmp_path), "cifar-binary")
    assert len(ds) == 6 and list(ds.y) == [1, 1, 1, 2, 2, 2]


def test_cifar_truncated_record_offset():
    buf = bytes(3073 + 100)
    with pytest.raises(FormatError) as e:
        D.parse_cifar_binary(buf)
    assert e.value.offset == 3073


def test_cifar_bad_label_offset():
    rec = bytearray(3 * 3073)
    rec[2 * 3073] = 12
    with pytest.raises(FormatError) as e:
        D.parse_cifar_binary(bytes(rec))
    assert e.value.offset == 2 * 3073


def test_idx_fixture_4_images_2x2(tmp_path):
    x = np.arange(16, dtype=np.uint8).reshape(4, 2, 2)
    D.write_idx(tmp_path / "t-images.idx", x)
    D.write_idx(tmp_path / "t-labels.idx", np.array([0, 1, 2, 3], dtype=np.uint8))
    raw = (tmp_path / "t-images.idx").read_bytes()
    assert raw[:4] == bytes([0, 0, 0x08, 3]) and struct.unpack(">3I", raw[4:16]) == (4, 2, 2)
    ds = D.load_dataset(str(tmp_path / "t-images.idx"), "idx")
    assert ds.x.shape == (4, 2, 2) and np.array_equal(ds.x, x) and list(ds.y) == [0, 1, 2, 3]
    assert D.to_images(ds).x.shape == (4, 1, 2, 2)


@pytest.mark.parametrize("buf,offset", [
    (b"\x01\x00\x08\x01", 0),
    (b"\x00\x00\x07\x01", 2),
    (b"\x00\x00\x08\x02\x00\x00", 6),
    (b"\x00\x00\x08\x01\x00\x00\x00\x05abc", 11),
])
def test_idx_header_errors_carry_offset(buf, offset):
    with pytest.raises(FormatError) as e:
        D.parse_idx(buf)
    assert e.value.offset == offset


def test_idx_float_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=(3, 5))
    D.write_idx(tmp_path / "f.idx", x)
    assert np.array_equal(D.parse_idx((tmp_path / "f.idx").read_bytes()), x)


def test_csv_row_count(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# header comment\n0,1.5,2\n1,0,0\n\n2,3,4\n")
    ds = D.load_dataset(str(p), "csv")
    assert len(ds) == 3 and ds.x.shape == (3, 2) and list(ds.y) == [0, 1, 2]


def test_csv_bad_row_offset():
    buf = b"0,1,2\n1,x,2\n"
    with pytest.raises(FormatError) as e:
        D.parse_csv(buf)
    assert e.value.offset == 6


def test_csv_ragged_row():
    with pytest.raises(FormatError, match="expected 3"):
        D.parse_csv(b"0,1,2\n1,2\n")


def test_missing_dataset_is_ingestion_error(tmp_path):
    with pytest.raises(IngestionError, match="nowhere"):
        D.load_dataset(str(tmp_path / "nowhere.bin"), "cifar-binary")


def test_batchify_columns():
    t = np.arange(10)
    b = D.batchify(t, 2)
    assert b.shape == (5, 2) and list(b[:, 1]) == [5, 6, 7, 8, 9]


def test_augment_keeps_shape_and_values():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3, 8, 8))
    out = D.augment_batch(x, rng)
    assert out.shape == x.shape
    assert np.isin(out[out != 0], x).all()


# checkpoint

def linear_model(kind, n=64, seed=0):
    rng = np.random.default_rng(seed)
    kind = SymmetryKind(kind) if isinstance(kind, str) else kind
    w = make_weight("sym", (n, n), kind, "channelwise", rng.normal(size=(n, n)), rng)
    return Model(Sequential([Linear(w, bias=False, name="sym")]), task="regress")


def test_triangular_64_payload_is_2080_values(tmp_path):
    m = linear_model("triangular")
    ck = C.model_records(m, "test")
    assert ck.stored_values() == 2080
    size = C.save_checkpoint(m, tmp_path / "t.symw", "test", "f64")
    rec = ck.records[0]
    header = 4 + 7 + 2 + len(rec.name) + 6 + 4 * len(rec.shape) + 8
    assert size == header + 2080 * 8


def test_average_vs_dense_differ_by_n_n_minus_1_over_2():
    n = 24
    conv_shape = (n, n, 3, 3)
    rng = np.random.default_rng(0)
    dense = make_weight("c", conv_shape, SymmetryKind("none"), "channelwise", rng.normal(size=conv_shape), rng)
    avg = make_weight("c", conv_shape, SymmetryKind("average"), "channelwise", rng.normal(size=conv_shape), rng)
    md = Model(Sequential([Conv2d(dense, pad=1)]), task="regress")
    ma = Model(Sequential([Conv2d(avg, pad=1)]), task="regress")
    diff = C.model_records(md, "test").stored_values() - C.model_records(ma, "test").stored_values()
    assert diff == 9 * n * (n - 1) // 2


@pytest.mark.parametrize("kind", ["none", "triangular", "average", "eigen", "ldl", "soft"])
def test_checkpoint_round_trip_bitwise(tmp_path, kind):
    m = linear_model(kind, n=12, seed=1)
    if kind == "soft":
        m.project_soft_weights()  # a test-phase soft weight is its projection
    x = np.random.default_rng(2).normal(size=(5, 12))
    y0, _ = m.forward(x, np.zeros((5, 12)), train=False)
    for phase in ("train", "test"):
        p1, p2 = tmp_path / f"{phase}1.symw", tmp_path / f"{phase}2.symw"
        C.save_checkpoint(m, p1, phase)
        m2 = linear_model(kind, n=12, seed=9)
        C.load_checkpoint(p1, m2)
        C.save_checkpoint(m2, p2, phase)
        assert p1.read_bytes() == p2.read_bytes()
        y1, _ = m2.forward(x, np.zeros((5, 12)), train=False)
        assert np.array_equal(y0, y1)


def test_checkpoint_nway_stores_fundamental_domain(tmp_path):
    m = linear_model(SymmetryKind("chunking", n_way=4), n=16)
    src = m.weight_sources()[0]
    rec = C.model_records(m, "test").records[0]
    assert rec.layout == "fundamental-domain" and rec.data.size == src.groups_by_name["V"].value.size


def test_wrn_checkpoint_round_trip_forward(tmp_path):
    cfg = from_dict({"arch": {"name": "wrn", "width": 0.25}, "symmetry": {"kind": "average", "location": "conv1"},
                     "data": {"path": "x", "format": "cifar-binary"}})
    m = build_model(cfg)
    x = np.random.default_rng(0).normal(size=(2, 3, 32, 32))
    y0, _ = m.forward(x, np.array([1, 2]), train=False)
    C.save_checkpoint(m, tmp_path / "w.symw", "test")
    m2 = build_model(cfg.replace(seed=5))
    C.load_checkpoint(tmp_path / "w.symw", m2)
    y1, _ = m2.forward(x, np.array([1, 2]), train=False)
    assert np.array_equal(y0, y1)
    C.save_checkpoint(m2, tmp_path / "w2.symw", "test")
    assert (tmp_path / "w.symw").read_bytes() == (tmp_path / "w2.symw").read_bytes()


@pytest.mark.parametrize("mutate,offset", [
    (lambda b: b"SYMX" + b[4:], 0),
    (lambda b: b[:4] + struct.pack("<H", 9) + b[6:], 4),
    (lambda b: b[:-3], None),
    (lambda b: b + b"\0", None),
])
def test_checkpoint_corruption(mutate, offset):
    buf = C.encode(C.model_records(linear_model("triangular", n=4), "test"))
    with pytest.raises(FormatError) as e:
        C.decode(mutate(buf))
    if offset is not None:
        assert e.value.offset == offset


def test_restore_missing_tensor():
    ck = C.model_records(linear_model("triangular", n=4), "test")
    ck.records[0].name = "other"
    with pytest.raises(FormatError, match="no tensor named"):
        C.restore(linear_model("triangular", n=4), ck)


def test_f32_checkpoint_halves_payload():
    ck = C.model_records(linear_model("triangular", n=16), "test")
    assert len(C.encode(ck, "f64")) - len(C.encode(ck, "f32")) == 136 * 4


# report

def test_report_dump_is_deterministic_and_lossless():
    rep = {"b": 0.1 + 0.2, "a": [1, 2.5e-17], "c": {"z": 1, "y": math.pi}}
    s = dumps(rep)
    assert s == dumps(dict(reversed(list(rep.items()))))
    assert json.loads(s) == rep


def test_report_rejects_nan():
    with pytest.raises(ValueError):
        dumps({"x": float("nan")})


def test_perplexity_recomputed_from_token_nll():
    rng = np.random.default_rng(0)
    nll = rng.uniform(0.5, 8.0, 1000)
    assert abs(perplexity(nll.sum(), nll.size) - math.exp(nll.mean())) <= 1e-12 * math.exp(nll.mean())
    assert perplexity(0.0, 10) == 1.0


# runner

def test_run_experiment_writes_outputs(tmp_path):
    cfg = tiny_cfg(tmp_path)
    out = tmp_path / "out"
    rep = run_experiment(cfg, str(out))
    assert sorted(os.listdir(out)) == ["model.test.symw", "model.train.symw", "report.json", "timing.json"]
    assert read_report(out / "report.json") == json.loads(dumps(rep))
    assert len(rep["epochs"]) == 2 and rep["param_count_test"] <= rep["param_count_train"]
    assert set(rep["epochs"][0]) >= {"train_loss", "val_loss", "train_acc", "val_acc", "asymmetry"}
    model = build_model(cfg, in_shape=(1, 8, 8))
    C.load_checkpoint(out / "model.test.symw", model)


def test_run_twice_byte_identical_reports(tmp_path):
    cfg = tiny_cfg(tmp_path)
    run_experiment(cfg, str(tmp_path / "a"))
    run_experiment(cfg, str(tmp_path / "b"))
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "model.test.symw").read_bytes() == (tmp_path / "b" / "model.test.symw").read_bytes()


def test_small_cnn_512_subset_beats_chance(tmp_path):
    rng = np.random.default_rng(11)
    x, y = blob_images(800, 10, rng, noise=60)
    D.write_cifar_binary(tmp_path / "data_batch_1.bin", x, y)
    cfg = from_dict({"seed": 0, "arch": {"name": "small_cnn", "width": 8},
                     "symmetry": {"kind": "triangular", "location": "square"},
                     "optimizer": {"lr": 0.05, "epochs": 3, "batch_size": 64},
                     "data": {"path": ".", "format": "cifar-binary", "subset_size": 512, "val_size": 200}},
                    str(tmp_path))
    rep = run_experiment(cfg)
    assert rep["train_size"] == 512
    assert rep["epochs"][-1]["train_acc"] > 0.1


def test_soft_asymmetry_trends_down(tmp_path):
    cfg = tiny_cfg(tmp_path, symmetry={"kind": "soft", "p": 1, "rho": 1e-3}, optimizer={"epochs": 4})
    rep = run_experiment(cfg)
    init, final = rep["initial_asymmetry"], rep["epochs"][-1]["asymmetry"]
    assert init and set(init) == set(final)
    for k in init:
        assert final[k] < init[k]
    assert "val_loss_projected" in rep["final"]


def test_divergence_reports_epoch(tmp_path):
    cfg = tiny_cfg(tmp_path, optimizer={"lr": 1e12, "momentum": 0.0})
    with pytest.raises(DivergenceError) as e:
        run_experiment(cfg)
    assert e.value.epoch == 1


def test_labels_beyond_classes_rejected(tmp_path):
    cfg = tiny_cfg(tmp_path, arch={"classes": 2})
    with pytest.raises(IngestionError, match="arch.classes"):
        run_experiment(cfg)


def test_run_repeated_median(tmp_path):
    cfg = tiny_cfg(tmp_path, optimizer={"epochs": 1})
    summary, runs = run_repeated(cfg, 3, str(tmp_path / "rep"))
    assert summary["seeds"] == [3, 4, 5]
    assert summary["median"] == float(np.median(summary["values"]))
    assert (tmp_path / "rep" / "summary.json").exists()


def test_lstm_lm_run_reports_perplexity(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "tok.csv"
    p.write_text("\n".join(",".join(str(t) for t in rng.integers(0, 20, 40)) for _ in range(10)) + "\n")
    cfg = from_dict({"dtype": "float64", "arch": {"name": "lstm_lm", "hidden": 8, "layers": 1, "vocab": 20,
                                                  "dropout": 0.0, "bptt": 5},
                     "symmetry": {"kind": "average", "location": "hidden_gates"},
                     "optimizer": {"lr": 0.5, "momentum": 0.0, "epochs": 2, "batch_size": 4, "clip": 1.0},
                     "data": {"path": "tok.csv", "format": "csv", "val_size": 60}}, str(tmp_path))
    rep = run_experiment(cfg)
    e = rep["epochs"][-1]
    assert abs(e["val_ppl"] - math.exp(e["val_nll_sum"] / e["val_tokens"])) <= 1e-12 * e["val_ppl"]
    assert rep["param_count_test"] < rep["param_count_train"]


def test_sweep_one_row_per_n(tmp_path):
    cfg = tiny_cfg(tmp_path, optimizer={"epochs": 1}, arch={"width": 8})
    ways = {"chunking": (2, 8), "nway_triangulizing": (2, 8)}
    rows = sweep_nway(cfg, ways)
    assert [(r["kind"], r["n_way"]) for r in rows] == [("none", None), ("chunking", 2), ("chunking", 8),
                                                       ("nway_triangulizing", 2), ("nway_triangulizing", 8)]
    assert all("metric" in r for r in rows)


# approximation demo

def test_approx_constant_both_fit():
    out = approx.approx_demo("constant", width=16, maxiter=500)
    assert out["symmetric"]["sup_error"] < 1e-2 and out["unconstrained"]["sup_error"] < 1e-2


def test_approx_linear_symmetric_fits():
    out = approx.approx_demo("linear", width=32, maxiter=1500)
    assert out["symmetric"]["sup_error"] < 1e-2


def test_approx_gradient_fd():
    rng = np.random.default_rng(0)
    x = approx.grid(2, 4)
    y = approx.TARGETS["polynomial"](x)
    for sym in (True, False):
        net = approx.Net(2, 5, sym, rng)
        _, g = net.loss_grad(net.theta, x, y)
        e = 1e-6
        for i in rng.choice(net.theta.size, 10, replace=False):
            t = net.theta.copy()
            t[i] += e
            fp = net.loss_grad(t, x, y)[0]
            t[i] -= 2 * e
            fm = net.loss_grad(t, x, y)[0]
            assert abs((fp - fm) / (2 * e) - g[i]) <= 1e-6 * max(1.0, abs(g[i]))


def test_approx_rejects_unknown_target():
    with pytest.raises(ValueError, match="unknown target"):
        approx.approx_demo("cubic")


# cli

def test_cli_count_prints_wrn16_pair(capsys):
    assert main(["count", os.path.join(CONFIGS, "wrn16-1-none.yaml")]) == 0
    out = capsys.readouterr().out
    assert "train 219482" in out and "test 219482" in out
    assert main(["count", os.path.join(CONFIGS, "wrn16-1-triangular.yaml")]) == 0
    out = capsys.readouterr().out
    train = int(out.split("train ")[1].split()[0])
    assert abs(train / 172000 - 1) <= 0.02


def test_cli_train_missing_file(capsys, tmp_path):
    p = str(tmp_path / "missing.yaml")
    assert main(["train", p]) != 0
    assert p in capsys.readouterr().err


def test_cli_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["count", "--frobnicate"])
    assert e.value.code != 0
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code != 0


def test_cli_invalid_config_exits_nonzero(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"arch": {"name": "wrn", "depth": 17}, "data": {"path": "x", "format": "csv"}}))
    assert main(["count", str(p)]) == 1
    assert "arch.depth" in capsys.readouterr().err


def test_cli_train_and_sweep(capsys, tmp_path):
    cfg = tiny_cfg(tmp_path, optimizer={"epochs": 1}, arch={"width": 8})
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cfg.to_dict()))
    assert main(["train", str(p), "--out", str(tmp_path / "o")]) == 0
    assert "val_acc" in json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert main(["sweep-nway", str(p), "--ways", "chunking:2,4", "--no-baseline"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and lines[1].split()[:2] == ["chunking", "2"]


def test_cli_check_small(capsys):
    assert main(["check", "--trials", "3"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_bench_json(capsys):
    assert main(["bench", "--sizes", "8", "16", "--m", "4", "--reps", "30", "--backend", "python", "--json"]) == 0
    rows = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert rows[-1].keys() == {"dense_monotone", "attempts"}
    assert {r["op"] for r in rows[:-1]} >= {"symv", "symm", "conv3x3_channelwise"}


def test_cli_approx_demo_json(capsys):
    assert main(["approx-demo", "--target", "constant", "--width", "8", "--maxiter", "200", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["target"] == "constant" and "ratio" in out
