"""Experiment configuration: YAML in, a fully validated ExperimentConfig out.

Schema (every key optional unless marked; unknown keys are errors)::

    name: str                          run label (default: file stem)
    seed: int                          default 0
    dtype: float32 | float64           compute dtype for inputs, default float32
    arch:
      name: small_cnn | wrn | lstm_lm  (required)
      # small_cnn: width (16), classes (10), batchnorm (true)
      # wrn:       depth (16), width (1), blocktype (bottleneck), classes (10)
      # lstm_lm:   hidden (650), layers (2), vocab (10000), dropout (0.5), bptt (35)
    symmetry:
      kind: none | soft | triangular | average | eigen | ldl |
            nway_blocking | nway_triangulizing | chunking       (default none)
      axis: channelwise | spatial | both                        (default channelwise)
      location: conv1 | every_second | square | hidden_gates | input_gates | all_gates
      share_within_stage: bool
      p: 1 | 2            rho: float >= 0      (soft)
      rank: int           (eigen)
      n_way: int          (nway kinds)
      gates: [i, f, g, o] (lstm_lm)
    optimizer:
      lr (0.1), momentum (0.9), weight_decay (5e-4), epochs (15), batch_size (64),
      schedule: [[epoch, factor], ...]   step decay, lr *= factor from that epoch on
      clip: float | null                 global gradient-norm clip
    data:
      path: str  (required)              file or directory
      format: cifar-binary | idx | csv   (required)
      labels_path, val_path, val_labels_path: str
      val_size (1000), subset_size (null = all)
      shape: [C, H, W]                   reshape for flat csv/idx features
      augment: bool (false)              random crop (pad 4) + horizontal flip
      normalize: bool (true)             per-channel standardization
"""
import os

import yaml

from ..errors import ConfigError
from ..nn.arch import CNN_LOCATIONS, LSTM_LOCATIONS, WRN_LOCATIONS, SymmetrySpec, wrn_blocks_per_stage
from ..nn.lstm import GATES
from ..symmetry import AXES, KIND_NAMES, SymmetryKind

ARCH_NAMES = ("small_cnn", "wrn", "lstm_lm")
FORMATS = ("cifar-binary", "idx", "csv")

ARCH_KEYS = {
    "small_cnn": {"width": (int, 16), "classes": (int, 10), "batchnorm": (bool, True)},
    "wrn": {"depth": (int, 16), "width": (float, 1.0), "blocktype": (str, "bottleneck"), "classes": (int, 10)},
    "lstm_lm": {"hidden": (int, 650), "layers": (int, 2), "vocab": (int, 10000), "dropout": (float, 0.5),
                "bptt": (int, 35)},
}
SYM_KEYS = {
    "kind": (str, "none"), "axis": (str, "channelwise"), "location": (str, None),
    "share_within_stage": (bool, False), "p": (int, 1), "rho": (float, 0.0), "rank": (int, None),
    "n_way": (int, None), "gates": (list, list(GATES)),
}
OPT_KEYS = {
    "lr": (float, 0.1), "momentum": (float, 0.9), "weight_decay": (float, 5e-4), "epochs": (int, 15),
    "batch_size": (int, 64), "schedule": (list, []), "clip": (float, None),
}
DATA_KEYS = {
    "path": (str, None), "format": (str, None), "labels_path": (str, None), "val_path": (str, None),
    "val_labels_path": (str, None), "val_size": (int, 1000), "subset_size": (int, None),
    "shape": (list, None), "augment": (bool, False), "normalize": (bool, True),
}
TOP_KEYS = ("name", "seed", "dtype", "arch", "symmetry", "optimizer", "data")


class ExperimentConfig:
    """Validated configuration; sections are plain dicts with defaults filled."""

    def __init__(self, name, seed, dtype, arch, symmetry, optimizer, data, base_dir="."):
        self.name = name
        self.seed = seed
        self.dtype = dtype
        self.arch = arch
        self.symmetry = symmetry
        self.optimizer = optimizer
        self.data = data
        self.base_dir = base_dir

    def spec(self):
        s = self.symmetry
        kind = SymmetryKind(s["kind"], p=s["p"], rho=s["rho"], rank=s["rank"], n_way=s["n_way"])
        return SymmetrySpec(kind, s["axis"], s["location"], s["share_within_stage"], tuple(s["gates"]))

    def to_dict(self):
        return {"name": self.name, "seed": self.seed, "dtype": self.dtype, "arch": dict(self.arch),
                "symmetry": dict(self.symmetry), "optimizer": dict(self.optimizer), "data": dict(self.data)}

    def replace(self, **sections):
        """Copy with some sections updated key-wise, revalidated."""
        d = self.to_dict()
        for k, v in sections.items():
            if isinstance(v, dict):
                d[k] = {**d[k], **v}
            else:
                d[k] = v
        return from_dict(d, self.base_dir)

    def resolve(self, path):
        if path is None or os.path.isabs(path):
            return path
        return os.path.normpath(os.path.join(self.base_dir, path))


def _typed(value, typ, loc):
    if value is None:
        return None
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", loc)
    elif typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", loc)
    elif typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", loc)
        value = float(value)
    elif typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", loc)
    elif typ is list:
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", loc)
    return value


def _section(raw, schema, loc, required=()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping, got {type(raw).__name__}", loc)
    for k in raw:
        if k not in schema:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(schema))})", f"{loc}.{k}")
    out = {}
    for k, (typ, default) in schema.items():
        if k in raw:
            out[k] = _typed(raw[k], typ, f"{loc}.{k}")
        else:
            if k in required:
                raise ConfigError("missing required key", f"{loc}.{k}")
            out[k] = list(default) if isinstance(default, list) else default
    return out


def _positive(section, key, loc, allow_zero=False, allow_none=False):
    v = section[key]
    if v is None and allow_none:
        return
    if v is None or v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"must be {'>= 0' if allow_zero else '> 0'}, got {v!r}", f"{loc}.{key}")


def from_dict(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    for k in raw:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(TOP_KEYS)})", k)
    name = _typed(raw.get("name", "experiment"), str, "name")
    seed = _typed(raw.get("seed", 0), int, "seed")
    if seed < 0:
        raise ConfigError(f"must be >= 0, got {seed}", "seed")
    dtype = _typed(raw.get("dtype", "float32"), str, "dtype")
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"expected float32 or float64, got {dtype!r}", "dtype")

    arch_raw = raw.get("arch")
    if not isinstance(arch_raw, dict) or "name" not in arch_raw:
        raise ConfigError("missing required key", "arch.name")
    arch_name = _typed(arch_raw["name"], str, "arch.name")
    if arch_name not in ARCH_NAMES:
        raise ConfigError(f"unknown architecture {arch_name!r}; expected one of {ARCH_NAMES}", "arch.name")
    arch = _section({k: v for k, v in arch_raw.items() if k != "name"}, ARCH_KEYS[arch_name], "arch")
    arch["name"] = arch_name
    for key in ("width", "classes", "hidden", "layers", "vocab", "bptt"):
        if key in arch:
            _positive(arch, key, "arch")
    if arch_name == "wrn":
        wrn_blocks_per_stage(arch["depth"])
        if arch["blocktype"] not in ("bottleneck", "basic"):
            raise ConfigError(f"expected bottleneck or basic, got {arch['blocktype']!r}", "arch.blocktype")
    if arch_name == "lstm_lm" and not 0 <= arch["dropout"] < 1:
        raise ConfigError(f"must be in [0, 1), got {arch['dropout']}", "arch.dropout")

    sym = _section(raw.get("symmetry"), SYM_KEYS, "symmetry")
    if sym["kind"] not in KIND_NAMES:
        raise ConfigError(f"unknown kind {sym['kind']!r}; expected one of {KIND_NAMES}", "symmetry.kind")
    if sym["axis"] not in AXES:
        raise ConfigError(f"unknown axis {sym['axis']!r}; expected one of {AXES}", "symmetry.axis")
    for g in sym["gates"]:
        if g not in GATES:
            raise ConfigError(f"unknown gate {g!r}; expected a subset of {GATES}", "symmetry.gates")
    allowed = {"small_cnn": CNN_LOCATIONS, "wrn": WRN_LOCATIONS, "lstm_lm": LSTM_LOCATIONS}[arch_name]
    if sym["location"] is not None and sym["location"] not in allowed:
        raise ConfigError(f"{sym['location']!r} does not resolve to any {arch_name} layer; expected one of {allowed}",
                          "symmetry.location")
    if sym["share_within_stage"] and arch_name != "wrn":
        raise ConfigError("sharing within a stage is only defined for wrn", "symmetry.share_within_stage")
    # SymmetryKind validates p/rho/rank/n_way with located errors
    SymmetryKind(sym["kind"], p=sym["p"], rho=sym["rho"], rank=sym["rank"], n_way=sym["n_way"])

    opt = _section(raw.get("optimizer"), OPT_KEYS, "optimizer")
    _positive(opt, "lr", "optimizer")
    _positive(opt, "epochs", "optimizer")
    _positive(opt, "batch_size", "optimizer")
    _positive(opt, "weight_decay", "optimizer", allow_zero=True)
    _positive(opt, "clip", "optimizer", allow_none=True)
    if not 0 <= opt["momentum"] < 1:
        raise ConfigError(f"must be in [0, 1), got {opt['momentum']}", "optimizer.momentum")
    sched = []
    for i, step in enumerate(opt["schedule"]):
        loc = f"optimizer.schedule[{i}]"
        if (not isinstance(step, list) or len(step) != 2 or isinstance(step[0], bool)
                or not isinstance(step[0], int) or not isinstance(step[1], (int, float))):
            raise ConfigError(f"expected [epoch, factor], got {step!r}", loc)
        if step[0] < 1 or step[1] <= 0:
            raise ConfigError(f"epoch must be >= 1 and factor > 0, got {step!r}", loc)
        sched.append([step[0], float(step[1])])
    if [s[0] for s in sched] != sorted({s[0] for s in sched}):
        raise ConfigError("epochs must be strictly increasing", "optimizer.schedule")
    opt["schedule"] = sched

    data = _section(raw.get("data"), DATA_KEYS, "data", required=("path", "format"))
    if data["format"] not in FORMATS:
        raise ConfigError(f"unknown format {data['format']!r}; expected one of {FORMATS}", "data.format")
    _positive(data, "subset_size", "data", allow_none=True)
    _positive(data, "val_size", "data", allow_zero=True)
    if data["shape"] is not None:
        if len(data["shape"]) != 3 or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0
                                              for v in data["shape"]):
            raise ConfigError(f"expected [C, H, W] positive integers, got {data['shape']!r}", "data.shape")
    if arch_name == "lstm_lm" and data["format"] != "csv":
        raise ConfigError("lstm_lm reads token-id rows from csv", "data.format")
    return ExperimentConfig(name, seed, dtype, arch, sym, opt, data, base_dir)


def load_config(path):
    """Parse and validate a YAML config file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else None
        raise ConfigError(f"not valid YAML: {getattr(e, 'problem', e)}", where) from e
    if raw is None:
        raise ConfigError("empty config file")
    if isinstance(raw, dict) and "name" not in raw:
        raw = {**raw, "name": os.path.splitext(os.path.basename(path))[0]}
    return from_dict(raw, os.path.dirname(os.path.abspath(path)))
