"""Experiment execution: data preparation, training loop, evaluation, outputs."""
import logging
import os
import time

import numpy as np

from ..errors import ConfigError, DivergenceError, IngestionError
from ..nn import SGD, build_lstm_lm, build_small_cnn, build_wrn
from . import data as D
from .checkpoint import save_checkpoint
from .report import perplexity, write_atomic, write_report, dumps

log = logging.getLogger("symnet")

# subset/validation split uses its own fixed stream so every seed sees the same images
SPLIT_SEED = 20240


def build_model(cfg, in_shape=None, spec=None):
    a = cfg.arch
    spec = cfg.spec() if spec is None else spec
    if a["name"] == "small_cnn":
        kw = {} if in_shape is None else {"in_shape": in_shape}
        return build_small_cnn(spec, width=a["width"], classes=a["classes"], seed=cfg.seed,
                               batchnorm=a["batchnorm"], **kw)
    if a["name"] == "wrn":
        return build_wrn(a["depth"], a["width"], a["blocktype"], spec, classes=a["classes"], seed=cfg.seed)
    return build_lstm_lm(a["hidden"], a["layers"], spec, vocab=a["vocab"], dropout=a["dropout"], seed=cfg.seed)


def lr_at(cfg, epoch):
    lr = cfg.optimizer["lr"]
    for start, factor in cfg.optimizer["schedule"]:
        if epoch >= start:
            lr *= factor
    return lr


# data

def prepare_images(cfg):
    d = cfg.data
    full = D.load_dataset(cfg.resolve(d["path"]), d["format"], cfg.resolve(d["labels_path"]))
    split = np.random.default_rng(SPLIT_SEED)
    if d["val_path"]:
        val = D.load_dataset(cfg.resolve(d["val_path"]), d["format"], cfg.resolve(d["val_labels_path"]))
        val = val.subset(np.arange(min(d["val_size"], len(val))))
        train = full.subset(split.permutation(len(full)))
    else:
        perm = split.permutation(len(full))
        nv = d["val_size"]
        if nv >= len(full):
            raise IngestionError(f"val_size {nv} leaves no training data ({len(full)} samples)")
        val, train = full.subset(perm[:nv]), full.subset(perm[nv:])
    if d["subset_size"]:
        train = train.subset(np.arange(min(d["subset_size"], len(train))))
    train, val = D.to_images(train, d["shape"]), D.to_images(val, d["shape"])
    if d["normalize"]:
        train, val = D.standardize(train, val)
    dt = np.dtype(cfg.dtype)
    classes = cfg.arch.get("classes", 10)
    for name, ds in (("train", train), ("val", val)):
        if len(ds) and ds.y.max() >= classes:
            raise IngestionError(f"{name} label {ds.y.max()} >= arch.classes = {classes}")
    return D.Dataset(train.x.astype(dt), train.y), D.Dataset(val.x.astype(dt), val.y)


def prepare_tokens(cfg):
    d = cfg.data
    path = cfg.resolve(d["path"])
    if not os.path.exists(path):
        raise IngestionError(f"dataset not found: {path}")
    tokens = D.load_tokens(path)
    if d["val_path"]:
        val = D.load_tokens(cfg.resolve(d["val_path"]))
    else:
        nv = d["val_size"]
        tokens, val = tokens[:-nv], tokens[-nv:]
    if d["subset_size"]:
        tokens = tokens[:d["subset_size"]]
    vocab = cfg.arch["vocab"]
    for t in (tokens, val):
        if len(t) and t.max() >= vocab:
            raise IngestionError(f"token id {t.max()} >= arch.vocab = {vocab}")
    B = cfg.optimizer["batch_size"]
    return D.batchify(tokens, B), D.batchify(val, min(B, max(1, len(val) // 2)))


# evaluation

def evaluate_images(model, ds, batch=256):
    loss_sum, correct = 0.0, 0
    for i in range(0, len(ds), batch):
        x, y = ds.x[i:i + batch], ds.y[i:i + batch]
        out, loss = model.forward(x, y, train=False)
        loss_sum += loss * len(y)
        correct += int((out.argmax(axis=1) == y).sum())
    return loss_sum / len(ds), correct / len(ds)


def evaluate_tokens(model, stream, bptt):
    model.train_mode_reset()
    nll_sum, count = 0.0, 0
    for i in range(0, len(stream) - 1, bptt):
        x = stream[i:i + bptt]
        y = stream[i + 1:i + 1 + bptt]
        x = x[:len(y)]
        _, loss = model.forward(x, y, train=False)
        nll_sum += loss * y.size
        count += y.size
    model.train_mode_reset()
    return nll_sum, count


def _asym(model):
    return {k: float(v) for k, v in sorted(model.asymmetry_norms(1).items())}


def _check(loss, epoch, step):
    if not np.isfinite(loss):
        raise DivergenceError(epoch, step, f"loss = {loss}")


# training

def train_images(cfg, model, train, val, epochs_log):
    o = cfg.optimizer
    rng = np.random.default_rng(cfg.seed + 1)
    opt = SGD(model.param_groups(), o["lr"], o["momentum"], o["weight_decay"], o["clip"])
    B = o["batch_size"]
    for epoch in range(1, o["epochs"] + 1):
        opt.lr = lr_at(cfg, epoch)
        perm = rng.permutation(len(train))
        loss_sum, correct, seen = 0.0, 0, 0
        for step, i in enumerate(range(0, len(perm), B)):
            idx = perm[i:i + B]
            x, y = train.x[idx], train.y[idx]
            if cfg.data["augment"]:
                x = D.augment_batch(x, rng)
            out, loss = model.forward(x, y)
            _check(loss, epoch, step)
            model.backward()
            opt.step()
            loss_sum += model.task_loss * len(idx)
            correct += int((out.argmax(axis=1) == y).sum())
            seen += len(idx)
        val_loss, val_acc = evaluate_images(model, val)
        _check(val_loss, epoch, None)
        rec = {"epoch": epoch, "lr": opt.lr, "train_loss": loss_sum / seen, "train_acc": correct / seen,
               "val_loss": val_loss, "val_acc": val_acc, "asymmetry": _asym(model)}
        epochs_log.append(rec)
        log.info("epoch %d lr %.4g train loss %.4f acc %.4f | val loss %.4f acc %.4f", epoch, opt.lr,
                 rec["train_loss"], rec["train_acc"], val_loss, val_acc)


def train_tokens(cfg, model, train, val, epochs_log):
    o = cfg.optimizer
    bptt = cfg.arch["bptt"]
    opt = SGD(model.param_groups(), o["lr"], o["momentum"], o["weight_decay"], o["clip"])
    for epoch in range(1, o["epochs"] + 1):
        opt.lr = lr_at(cfg, epoch)
        model.train_mode_reset()
        nll_sum, count = 0.0, 0
        for step, i in enumerate(range(0, len(train) - 1, bptt)):
            x = train[i:i + bptt]
            y = train[i + 1:i + 1 + bptt]
            x = x[:len(y)]
            _, loss = model.forward(x, y)
            _check(loss, epoch, step)
            model.backward()
            opt.step()
            nll_sum += model.task_loss * y.size
            count += y.size
        v_sum, v_count = evaluate_tokens(model, val, bptt)
        _check(v_sum, epoch, None)
        rec = {"epoch": epoch, "lr": opt.lr, "train_nll_sum": nll_sum, "train_tokens": count,
               "train_ppl": perplexity(nll_sum, count), "val_nll_sum": v_sum, "val_tokens": v_count,
               "val_ppl": perplexity(v_sum, v_count), "asymmetry": _asym(model)}
        epochs_log.append(rec)
        log.info("epoch %d lr %.4g train ppl %.2f | val ppl %.2f", epoch, opt.lr, rec["train_ppl"], rec["val_ppl"])


def run_experiment(cfg, out_dir=None):
    """Train and evaluate one config; returns the Report dict.

    With ``out_dir`` the report, timing sidecar and both checkpoints are
    written there.
    """
    t0 = time.perf_counter()
    lm = cfg.arch["name"] == "lstm_lm"
    if lm:
        train, val = prepare_tokens(cfg)
        model = build_model(cfg)
    else:
        train, val = prepare_images(cfg)
        in_shape = train.x.shape[1:]
        if cfg.arch["name"] == "wrn" and tuple(in_shape) != (3, 32, 32):
            raise ConfigError(f"wrn expects 3x32x32 inputs, data gives {tuple(in_shape)}", "data.shape")
        model = build_model(cfg, in_shape=tuple(in_shape))
    t_data = time.perf_counter()
    report = {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "model": model.name,
        "param_count_train": model.count_params("train"),
        "param_count_test": model.count_params("test"),
        "initial_asymmetry": _asym(model),
        "train_size": int(train.shape[0] * train.shape[1]) if lm else len(train),
        "val_size": int(val.shape[0] * val.shape[1]) if lm else len(val),
        "epochs": [],
    }
    if lm:
        train_tokens(cfg, model, train, val, report["epochs"])
    else:
        train_images(cfg, model, train, val, report["epochs"])
    t_train = time.perf_counter()
    final = dict(report["epochs"][-1])
    final.pop("asymmetry")
    report["final"] = final
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(out_dir, "model.train.symw"), "train")
    if model.soft_sources() and not lm:
        model.project_soft_weights()
        loss, acc = evaluate_images(model, val)
        report["final"]["val_loss_projected"] = loss
        report["final"]["val_acc_projected"] = acc
    if out_dir is not None:
        save_checkpoint(model, os.path.join(out_dir, "model.test.symw"), "test")
        write_report(os.path.join(out_dir, "report.json"), report)
        timing = {"data_s": t_data - t0, "train_s": t_train - t_data, "total_s": time.perf_counter() - t0}
        write_atomic(os.path.join(out_dir, "timing.json"), dumps(timing))
    return report


def final_metric(report):
    f = report["final"]
    return f["val_ppl"] if "val_ppl" in f else 100.0 * (1.0 - f["val_acc"])


def run_repeated(cfg, repeat, out_dir=None, how="median"):
    """Run seeds seed..seed+repeat-1; summarize validation error (or perplexity)."""
    runs = []
    for i in range(repeat):
        c = cfg.replace(seed=cfg.seed + i)
        sub = None if out_dir is None else os.path.join(out_dir, f"run{i}")
        runs.append(run_experiment(c, sub))
    vals = [final_metric(r) for r in runs]
    summary = {
        "name": cfg.name,
        "metric": "val_ppl" if "val_ppl" in runs[0]["final"] else "val_error_pct",
        "values": vals,
        "seeds": [cfg.seed + i for i in range(repeat)],
        "param_count_train": runs[0]["param_count_train"],
        "param_count_test": runs[0]["param_count_test"],
    }
    summary[how] = float(np.median(vals)) if how == "median" else float(np.mean(vals))
    if out_dir is not None:
        write_report(os.path.join(out_dir, "summary.json"), summary)
    return summary, runs
