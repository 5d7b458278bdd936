"""SYMW checkpoint files.

Layout (all integers little-endian)::

    b"SYMW" | u16 version | u8 phase (0 train, 1 test) | u32 record count
    record:
      u16 name length | name (utf-8)
      u8 dtype (0 f32, 1 f64) | u8 layout (0 dense, 1 packed-upper, 2 fundamental-domain)
      u8 axis (0 channelwise, 1 spatial, 2 both) | u8 domain kind (0 -, 1 blocking,
      2 triangulizing, 3 chunking) | u8 n_way
      u8 ndim | ndim x u32 shape | u64 value count | payload

A train checkpoint stores every parameter group densely (exact resume).  A
test checkpoint stores each weight as a deployed model would: symmetric
weights keep only the upper triangle of every symmetric slice, N-way weights
only their fundamental domain, everything else dense.
"""
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, FormatError
from ..nn.layers import BatchNorm2d
from ..nn.params import SymmetricWeight

MAGIC = b"SYMW"
VERSION = 1
PHASES = ("train", "test")
DTYPES = {0: "<f4", 1: "<f8"}
LAYOUTS = ("dense", "packed-upper", "fundamental-domain")
AXIS_CODES = {"channelwise": 0, "spatial": 1, "both": 2}
DOMAIN_KINDS = {"nway_blocking": 1, "nway_triangulizing": 2, "chunking": 3}


@dataclass
class Record:
    name: str
    data: np.ndarray          # flat payload, as stored
    shape: tuple              # logical shape of the tensor
    layout: str = "dense"
    axis: str = "channelwise"
    kind: str | None = None
    n_way: int = 0


@dataclass
class Checkpoint:
    phase: str
    records: list

    def by_name(self):
        return {r.name: r for r in self.records}

    def stored_values(self):
        return sum(r.data.size for r in self.records)


# packed layouts of constructed weights

def _upper(n):
    return np.triu_indices(n)


def pack_weight(w, axis):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 2:
        iu = _upper(w.shape[0])
        return w[iu]
    n, _, k, _ = w.shape
    if axis == "channelwise":
        iu = _upper(n)
        return w.transpose(2, 3, 0, 1)[..., iu[0], iu[1]].ravel()
    if axis == "spatial":
        iu = _upper(k)
        return w[..., iu[0], iu[1]].ravel()
    ic, isp = _upper(n), _upper(k)
    s = w.transpose(2, 3, 0, 1)[isp[0], isp[1]]          # (Pk, n, n)
    return s[:, ic[0], ic[1]].ravel()


def unpack_weight(flat, shape, axis):
    shape = tuple(shape)
    if len(shape) == 2:
        n = shape[0]
        out = np.zeros((n, n))
        iu = _upper(n)
        out[iu] = flat
        out[iu[1], iu[0]] = flat
        return out
    n, _, k, _ = shape
    if axis == "channelwise":
        iu = _upper(n)
        s = np.zeros((k, k, n, n))
        vals = flat.reshape(k, k, -1)
        s[..., iu[0], iu[1]] = vals
        s[..., iu[1], iu[0]] = vals
        return s.transpose(2, 3, 0, 1).copy()
    if axis == "spatial":
        iu = _upper(k)
        out = np.zeros(shape)
        vals = flat.reshape(n, n, -1)
        out[..., iu[0], iu[1]] = vals
        out[..., iu[1], iu[0]] = vals
        return out
    ic, isp = _upper(n), _upper(k)
    vals = flat.reshape(len(isp[0]), -1)
    tied = np.zeros((len(isp[0]), n, n))
    tied[:, ic[0], ic[1]] = vals
    tied[:, ic[1], ic[0]] = vals
    s = np.zeros((k, k, n, n))
    s[isp[0], isp[1]] = tied
    s[isp[1], isp[0]] = tied
    return s.transpose(2, 3, 0, 1).copy()


def packed_count(shape, axis):
    if len(shape) == 2:
        n = shape[0]
        return n * (n + 1) // 2
    n, m, k, _ = shape
    if axis == "channelwise":
        return k * k * n * (n + 1) // 2
    if axis == "spatial":
        return n * m * k * (k + 1) // 2
    return (k * (k + 1) // 2) * (n * (n + 1) // 2)


# model <-> records

def _buffers(model):
    out = []
    for layer in model.layers():
        if isinstance(layer, BatchNorm2d):
            out.append((f"{layer.name}.running_mean", layer, "running_mean"))
            out.append((f"{layer.name}.running_var", layer, "running_var"))
    return out


def _extra_groups(model):
    in_sources = {id(g) for s in model.weight_sources() for g in s.groups}
    return [g for g in model.param_groups() if id(g) not in in_sources]


def model_records(model, phase="test"):
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}, got {phase!r}")
    recs = []
    if phase == "train":
        for src in model.weight_sources():
            if getattr(src, "frozen", None) is not None:
                raise ContractError(f"{src.name} holds a frozen test-phase weight; only a test checkpoint can store it")
        for g in model.param_groups():
            recs.append(Record(g.name, g.value.ravel(), g.value.shape))
    else:
        for src in model.weight_sources():
            if not isinstance(src, SymmetricWeight):
                v = src.value()
                recs.append(Record(src.name, v.ravel(), v.shape))
            elif src.kind.name in DOMAIN_KINDS:
                V = src.groups_by_name["V"].value
                recs.append(Record(src.name, V.ravel(), src.shape, "fundamental-domain", src.axis,
                                   src.kind.name, src.kind.n_way))
            else:
                w = src.value()
                recs.append(Record(src.name, pack_weight(w, src.axis), src.shape, "packed-upper", src.axis))
        for g in _extra_groups(model):
            recs.append(Record(g.name, g.value.ravel(), g.value.shape))
    for name, layer, attr in _buffers(model):
        v = getattr(layer, attr)
        recs.append(Record(name, v.ravel(), v.shape))
    names = [r.name for r in recs]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ContractError(f"duplicate tensor names in model: {dup}")
    return Checkpoint(phase, recs)


def restore(model, ckpt):
    """Load a checkpoint's tensors into a model built with the same architecture."""
    recs = ckpt.by_name()
    used = set()

    def take(name):
        if name not in recs:
            raise FormatError(f"checkpoint has no tensor named {name!r}")
        used.add(name)
        r = recs[name]
        return r, np.asarray(r.data, dtype=np.float64)

    if ckpt.phase == "train":
        for g in model.param_groups():
            r, v = take(g.name)
            if v.size != g.value.size:
                raise FormatError(f"{g.name}: stored {v.size} values, model expects {g.value.size}")
            g.value = v.reshape(g.value.shape).copy()
        for src in model.weight_sources():
            if getattr(src, "frozen", None) is not None:
                src.frozen = None
    else:
        for src in model.weight_sources():
            r, v = take(src.name)
            if not isinstance(src, SymmetricWeight):
                src.group.value = v.reshape(src.shape).copy()
            elif r.layout == "fundamental-domain":
                g = src.groups_by_name["V"]
                g.value = v.reshape(g.value.shape).copy()
                src.frozen = None
            else:
                if r.layout != "packed-upper" or r.axis != src.axis:
                    raise FormatError(f"{src.name}: stored as {r.layout}/{r.axis}, model wants packed-upper/{src.axis}")
                src.set_constructed(unpack_weight(v, src.shape, src.axis))
        for g in _extra_groups(model):
            r, v = take(g.name)
            g.value = v.reshape(g.value.shape).copy()
    for name, layer, attr in _buffers(model):
        r, v = take(name)
        setattr(layer, attr, v.reshape(getattr(layer, attr).shape).copy())
    extra = set(recs) - used
    if extra:
        raise FormatError(f"checkpoint tensors not in model: {sorted(extra)}")
    return model


# bytes

def encode(ckpt, dtype="f64"):
    if dtype not in ("f32", "f64"):
        raise ValueError(f"dtype must be f32 or f64, got {dtype!r}")
    code = 0 if dtype == "f32" else 1
    out = [MAGIC, struct.pack("<HBI", VERSION, PHASES.index(ckpt.phase), len(ckpt.records))]
    for r in ckpt.records:
        name = r.name.encode("utf-8")
        out.append(struct.pack("<H", len(name)) + name)
        out.append(struct.pack("<BBBBBB", code, LAYOUTS.index(r.layout), AXIS_CODES[r.axis],
                               DOMAIN_KINDS.get(r.kind, 0), r.n_way or 0, len(r.shape)))
        out.append(struct.pack(f"<{len(r.shape)}I", *r.shape))
        payload = np.ascontiguousarray(r.data, dtype=DTYPES[code])
        out.append(struct.pack("<Q", payload.size) + payload.tobytes())
    return b"".join(out)


def decode(buf):
    def need(pos, n, what):
        if pos + n > len(buf):
            raise FormatError(f"truncated checkpoint while reading {what}", pos)

    need(0, 11, "header")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    version, phase, count = struct.unpack_from("<HBI", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    if phase >= len(PHASES):
        raise FormatError(f"bad phase code {phase}", 6)
    pos = 11
    recs = []
    axes = {v: k for k, v in AXIS_CODES.items()}
    kinds = {v: k for k, v in DOMAIN_KINDS.items()}
    for _ in range(count):
        need(pos, 2, "name length")
        (ln,) = struct.unpack_from("<H", buf, pos)
        need(pos + 2, ln, "name")
        name = buf[pos + 2:pos + 2 + ln].decode("utf-8")
        pos += 2 + ln
        need(pos, 6, "record header")
        code, layout, axis, kind, n_way, ndim = struct.unpack_from("<BBBBBB", buf, pos)
        if code not in DTYPES:
            raise FormatError(f"{name}: bad dtype code {code}", pos)
        if layout >= len(LAYOUTS) or axis not in axes or (kind and kind not in kinds):
            raise FormatError(f"{name}: bad layout/axis/kind code", pos + 1)
        pos += 6
        need(pos, 4 * ndim + 8, "shape")
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        (n,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        dt = np.dtype(DTYPES[code])
        need(pos, n * dt.itemsize, "payload")
        data = np.frombuffer(buf, dtype=dt, count=n, offset=pos).copy()
        pos += n * dt.itemsize
        recs.append(Record(name, data, tuple(shape), LAYOUTS[layout], axes[axis], kinds.get(kind), n_way))
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after last record", pos)
    return Checkpoint(PHASES[phase], recs)


def save_checkpoint(model, path, phase="test", dtype="f64"):
    data = encode(model_records(model, phase), dtype)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def load_checkpoint(path, model=None):
    """Decode a checkpoint; with ``model``, also restore its weights in place."""
    with open(path, "rb") as f:
        ckpt = decode(f.read())
    if model is not None:
        restore(model, ckpt)
    return ckpt
