"""Dataset readers: CIFAR-10 binary batches, IDX files and label-first CSV.

Every reader validates the byte layout up front and reports the first
malformed byte offset in a FormatError.
"""
import glob
import os

import numpy as np

from ..errors import FormatError, IngestionError

CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)

# IDX type byte -> big-endian numpy dtype
IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


class Dataset:
    """Parallel arrays of samples and labels; iterates as (x, y) pairs."""

    def __init__(self, x, y):
        if len(x) != len(y):
            raise ValueError(f"{len(x)} samples but {len(y)} labels")
        self.x = x
        self.y = y

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i):
        return self.x[i], self.y[i]

    def __iter__(self):
        return zip(self.x, self.y)

    def subset(self, idx):
        return Dataset(self.x[idx], self.y[idx])


def _read(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IngestionError(f"cannot read dataset {path}: {e.strerror}") from e


def parse_cifar_binary(buf):
    if len(buf) == 0:
        raise FormatError("empty CIFAR-10 batch", 0)
    if len(buf) % CIFAR_RECORD:
        full = len(buf) // CIFAR_RECORD
        raise FormatError(f"truncated record: {len(buf)} bytes is not a multiple of {CIFAR_RECORD}",
                          full * CIFAR_RECORD)
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} out of range 0..9", int(bad[0]) * CIFAR_RECORD)
    return Dataset(rec[:, 1:].reshape((-1,) + CIFAR_SHAPE), labels)


def _cifar_files(path):
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "data_batch_*.bin")))
        if not files:
            raise IngestionError(f"no data_batch_*.bin files in {path}")
        return files
    return [path]


def load_cifar_binary(path):
    parts = []
    for f in _cifar_files(path):
        try:
            parts.append(parse_cifar_binary(_read(f)))
        except FormatError as e:
            raise FormatError(f"{f}: {e.args[0]}") from e
    return Dataset(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


def parse_idx(buf):
    """Array from an IDX buffer: 0x00 0x00 <type> <ndim>, ndim big-endian u32 dims, payload."""
    if len(buf) < 4:
        raise FormatError("IDX header shorter than 4 bytes", 0)
    if buf[0] != 0 or buf[1] != 0:
        raise FormatError(f"bad IDX magic {buf[:2].hex()}", 0)
    if buf[2] not in IDX_TYPES:
        raise FormatError(f"unknown IDX type code 0x{buf[2]:02x}", 2)
    ndim = buf[3]
    if ndim == 0:
        raise FormatError("IDX with zero dimensions", 3)
    head = 4 + 4 * ndim
    if len(buf) < head:
        raise FormatError(f"IDX header needs {head} bytes, file has {len(buf)}", len(buf))
    dims = tuple(int(d) for d in np.frombuffer(buf, dtype=">u4", count=ndim, offset=4))
    dt = np.dtype(IDX_TYPES[buf[2]])
    need = head + int(np.prod(dims)) * dt.itemsize
    if len(buf) != need:
        raise FormatError(f"IDX payload for dims {dims} needs {need} bytes total, file has {len(buf)}",
                          min(len(buf), need))
    return np.frombuffer(buf, dtype=dt, offset=head).reshape(dims).astype(dt.newbyteorder("="))


def load_idx(path, labels_path=None):
    if labels_path is None:
        base = os.path.basename(path)
        if "images" not in base:
            raise IngestionError(f"{path}: give labels_path for an IDX image file")
        labels_path = os.path.join(os.path.dirname(path), base.replace("images", "labels"))
    x = parse_idx(_read(path))
    y = parse_idx(_read(labels_path))
    if y.ndim != 1 or len(y) != len(x):
        raise FormatError(f"{labels_path}: {y.shape} labels for {len(x)} images", 4)
    return Dataset(x, y.astype(np.int64))


def parse_csv(buf, label_first=True):
    """``label,f1,f2,...`` rows (or plain integer rows with label_first=False)."""
    rows, labels = [], []
    width = None
    offset = 0
    for raw in buf.split(b"\n"):
        line = raw.strip()
        start = offset
        offset += len(raw) + 1
        if not line or line.startswith(b"#"):
            continue
        fields = line.split(b",")
        try:
            vals = [float(v) for v in fields]
        except ValueError:
            raise FormatError(f"non-numeric field in row {line[:40]!r}", start) from None
        if label_first:
            if width is None:
                width = len(vals)
            if len(vals) != width:
                raise FormatError(f"row has {len(vals)} fields, expected {width}", start)
            if len(vals) < 2:
                raise FormatError("row needs a label and at least one feature", start)
            lab = vals[0]
            if lab != int(lab) or lab < 0:
                raise FormatError(f"label {lab!r} is not a non-negative integer", start)
            labels.append(int(lab))
            rows.append(vals[1:])
        else:
            if any(v != int(v) or v < 0 for v in vals):
                raise FormatError("token ids must be non-negative integers", start)
            rows.append([int(v) for v in vals])
    if not rows:
        raise FormatError("no data rows", 0)
    if not label_first:
        return rows
    return Dataset(np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64))


def load_csv(path):
    return parse_csv(_read(path))


def load_tokens(path):
    """Concatenated token stream from csv rows of integer ids."""
    return np.asarray([t for row in parse_csv(_read(path), label_first=False) for t in row], dtype=np.int64)


def load_dataset(path, format, labels_path=None):
    if not os.path.exists(path):
        raise IngestionError(f"dataset not found: {path}")
    if format == "cifar-binary":
        return load_cifar_binary(path)
    if format == "idx":
        return load_idx(path, labels_path)
    if format == "csv":
        return load_csv(path)
    raise ValueError(f"unknown dataset format {format!r}")


# preprocessing

def to_images(ds, shape=None):
    """Float images in (N, C, H, W); uint8 data is scaled to [0, 1]."""
    x = ds.x
    scale = 255.0 if x.dtype == np.uint8 else 1.0
    x = x.astype(np.float64) / scale
    if shape is not None:
        x = x.reshape((len(x),) + tuple(shape))
    elif x.ndim == 3:
        x = x[:, None]
    elif x.ndim == 2:
        x = x[:, :, None, None]
    return Dataset(x, ds.y)


def standardize(train, *others):
    """Per-channel mean/std from ``train`` applied to every set."""
    axes = (0, 2, 3)
    mean = train.x.mean(axis=axes, keepdims=True)
    std = train.x.std(axis=axes, keepdims=True)
    std[std == 0] = 1.0
    return [Dataset((d.x - mean) / std, d.y) for d in (train, *others)]


def augment_batch(x, rng, pad=4):
    """Random crop after zero padding plus random horizontal flip."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dy = rng.integers(0, 2 * pad + 1, B)
    dx = rng.integers(0, 2 * pad + 1, B)
    flip = rng.random(B) < 0.5
    out = np.empty_like(x)
    for i in range(B):
        crop = xp[i, :, dy[i]:dy[i] + H, dx[i]:dx[i] + W]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def batchify(tokens, batch):
    """(T, batch) columns of a token stream, dropping the ragged tail."""
    n = len(tokens) // batch
    if n < 2:
        raise IngestionError(f"token stream of length {len(tokens)} too short for batch {batch}")
    return tokens[:n * batch].reshape(batch, n).T.copy()


# writers (fixtures and format conversion)

def write_cifar_binary(path, images, labels):
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    if images.shape[1] != CIFAR_RECORD - 1:
        raise ValueError(f"CIFAR records need 3072 pixel bytes, got {images.shape[1]}")
    rec = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], images], axis=1)
    with open(path, "wb") as f:
        f.write(rec.tobytes())


def write_idx(path, array):
    array = np.asarray(array)
    codes = [k for k, v in IDX_TYPES.items() if np.dtype(v) == array.dtype.newbyteorder(">")]
    if not codes:
        raise ValueError(f"no IDX type code for dtype {array.dtype}")
    code = codes[0]
    head = bytes([0, 0, code, array.ndim]) + np.asarray(array.shape, dtype=">u4").tobytes()
    with open(path, "wb") as f:
        f.write(head + array.astype(array.dtype.newbyteorder(">")).tobytes())
