"""Architecture builders: pre-activation WRN, a small CIFAR CNN, an LSTM LM.

WRN accounting (pinned in tests/golden/counts.json): pre-activation blocks,
BN affine terms counted, convolutions without bias, a biased linear
classifier, stage widths 16k/32k/64k (bottleneck outputs 4x the mid width),
and (depth - 4) / 6 blocks per stage.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..symmetry import SymmetryKind
from .layers import (
    BatchNorm2d, Conv2d, Dropout, Embedding, GlobalAvgPool, Layer, Linear,
    MaxPool2d, ReLU, Residual, Sequential,
)
from .lstm import GATES, LSTMLayer
from .model import Model
from .params import DenseWeight, make_weight

WRN_LOCATIONS = ("conv1", "every_second")
CNN_LOCATIONS = ("square",)
LSTM_LOCATIONS = ("hidden_gates", "input_gates", "all_gates")


@dataclass(frozen=True)
class SymmetrySpec:
    kind: SymmetryKind = field(default_factory=SymmetryKind)
    axis: str = "channelwise"
    location: str | None = None
    share_within_stage: bool = False
    gates: tuple = GATES

    @property
    def active(self):
        return self.kind.name != "none"


NO_SYMMETRY = SymmetrySpec()


def _check_location(spec, allowed, default):
    loc = spec.location or default
    if spec.active and loc not in allowed:
        raise ConfigError(f"symmetry location {loc!r} does not resolve to any layer; expected one of {allowed}",
                          "symmetry.location")
    return loc


def _he(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _conv(name, c_in, c_out, k, rng, stride=1, spec=None, has_bn=True):
    shape = (c_out, c_in, k, k)
    init = _he(rng, shape)
    kind = spec.kind if spec is not None and spec.active else None
    axis = spec.axis if spec is not None else "channelwise"
    return Conv2d(make_weight(name, shape, kind, axis, init, rng, has_bn), stride=stride, pad=k // 2, name=name)


def _bn_relu(name, c):
    return Sequential([BatchNorm2d(c, name=name), ReLU()])


def _classifier(name, c_in, classes, rng):
    bound = 1.0 / np.sqrt(c_in)
    return Linear(DenseWeight(name, rng.uniform(-bound, bound, size=(classes, c_in))), bias=True, name=name)


def wrn_blocks_per_stage(depth):
    if depth < 10 or (depth - 4) % 6:
        raise ConfigError(f"WRN depth must be 6n+4 with n >= 1, got {depth}", "arch.depth")
    return (depth - 4) // 6


def build_wrn(depth, width, blocktype="bottleneck", spec=NO_SYMMETRY, classes=10, seed=0):
    """CIFAR-shaped pre-activation wide ResNet.

    ``spec`` symmetrizes conv1 of every block (the middle 3x3 for bottleneck
    blocks, the second 3x3 for basic blocks).  ``share_within_stage`` ties
    that convolution across all blocks of a stage.
    """
    if blocktype not in ("bottleneck", "basic"):
        raise ConfigError(f"unknown WRN block type {blocktype!r}", "arch.blocktype")
    if width <= 0 or any(abs(b * width - round(b * width)) > 1e-9 for b in (16, 32, 64)):
        raise ConfigError(f"WRN width must be positive with 16*width integral, got {width}", "arch.width")
    n = wrn_blocks_per_stage(depth)
    _check_location(spec, WRN_LOCATIONS, "conv1")
    rng = np.random.default_rng(seed)
    layers = [_conv("stem", 3, 16, 3, rng)]
    c_in = 16
    for s, base in enumerate((16, 32, 64)):
        mid = int(round(base * width))
        out = 4 * mid if blocktype == "bottleneck" else mid
        shared = None
        for b in range(n):
            stride = 2 if (s > 0 and b == 0) else 1
            tag = f"stage{s + 1}.block{b}"
            sym_spec = spec if spec.active else None
            if blocktype == "bottleneck":
                conv0 = _conv(f"{tag}.conv0", c_in, mid, 1, rng)
                conv1 = _conv(f"{tag}.conv1", mid, mid, 3, rng, stride, sym_spec)
                conv2 = _conv(f"{tag}.conv2", mid, out, 1, rng)
                if spec.share_within_stage:
                    if shared is None:
                        shared = conv1.weight
                    conv1.weight = shared
                body = Sequential([conv0, _bn_relu(f"{tag}.bn1", mid), conv1, _bn_relu(f"{tag}.bn2", mid), conv2])
            else:
                conv0 = _conv(f"{tag}.conv0", c_in, out, 3, rng, stride)
                conv1 = _conv(f"{tag}.conv1", out, out, 3, rng, 1, sym_spec)
                if spec.share_within_stage:
                    if shared is None:
                        shared = conv1.weight
                    conv1.weight = shared
                body = Sequential([conv0, _bn_relu(f"{tag}.bn1", out), conv1])
            shortcut = None
            if c_in != out or stride != 1:
                shortcut = _conv(f"{tag}.shortcut", c_in, out, 1, rng, stride)
            layers.append(Residual(body, shortcut, pre=_bn_relu(f"{tag}.bn0", c_in)))
            c_in = out
    layers += [_bn_relu("final.bn", c_in), GlobalAvgPool(), _classifier("fc", c_in, classes, rng)]
    name = f"WRN-{depth}-{width}-{blocktype}"
    return Model(Sequential(layers), task="classify", has_bn=True, name=name, input_shape=(3, 32, 32))


def build_small_cnn(spec=NO_SYMMETRY, width=16, classes=10, seed=0, batchnorm=True, in_shape=(3, 32, 32)):
    """Six 3x3 convolutions in three stages; the second of each pair is square and
    carries the symmetry."""
    _check_location(spec, CNN_LOCATIONS, "square")
    rng = np.random.default_rng(seed)
    sym_spec = spec if spec.active else None
    layers = []
    c_in = in_shape[0]
    for s, c in enumerate((width, 2 * width, 4 * width)):
        for j in range(2):
            conv = _conv(f"conv{2 * s + j}", c_in if j == 0 else c, c, 3, rng,
                         spec=sym_spec if j == 1 else None, has_bn=batchnorm)
            layers.append(conv)
            if batchnorm:
                layers.append(BatchNorm2d(c, name=f"bn{2 * s + j}"))
            layers.append(ReLU())
        if s < 2:
            layers.append(MaxPool2d(2))
        c_in = c
    layers += [GlobalAvgPool(), _classifier("fc", c_in, classes, rng)]
    return Model(Sequential(layers), task="classify", has_bn=batchnorm, name="small_cnn",
                 input_shape=tuple(in_shape))


class LanguageModel(Layer):
    """Embedding -> dropout -> LSTM stack (dropout between) -> decoder.

    Hidden state is carried across consecutive batches (truncated BPTT) and
    cleared by ``reset_state``.
    """

    kind = "sequential"

    def __init__(self, vocab, hidden, layers, spec, dropout, rng):
        self.encoder = Embedding(vocab, hidden, rng)
        self.drops = [Dropout(dropout, rng) for _ in range(layers + 1)]
        kind = spec.kind if spec.active else None
        loc = spec.location or "hidden_gates"
        hidden_gates = spec.gates if loc in ("hidden_gates", "all_gates") else ()
        input_gates = spec.gates if loc in ("input_gates", "all_gates") else ()
        self.rnns = [
            LSTMLayer(hidden, hidden, rng, name=f"lstm{i}", kind=kind,
                      hidden_gates=hidden_gates, input_gates=input_gates, has_bn=False)
            for i in range(layers)
        ]
        bound = 0.1
        self.decoder = Linear(DenseWeight("decoder", rng.uniform(-bound, bound, size=(vocab, hidden))),
                              bias=True, name="decoder")
        self.state = None

    def children(self):
        return [self.encoder, *self.rnns, self.decoder, *self.drops]

    def reset_state(self):
        self.state = None

    def forward(self, tokens, train=True):
        x = self.drops[0].forward(self.encoder.forward(tokens, train), train)
        states = self.state or [None] * len(self.rnns)
        new = []
        for i, rnn in enumerate(self.rnns):
            x = rnn.forward(x, train, states[i])
            new.append(rnn.final_state)
            x = self.drops[i + 1].forward(x, train)
        self.state = new
        return self.decoder.forward(x, train)

    def backward(self, g):
        g = self.decoder.backward(g)
        for i in reversed(range(len(self.rnns))):
            g = self.drops[i + 1].backward(g)
            g = self.rnns[i].backward(g)
        g = self.drops[0].backward(g)
        self.encoder.backward(g)
        return None


def build_lstm_lm(hidden, layers=2, spec=None, vocab=10000, dropout=0.5, seed=0):
    """Word-level LSTM LM; ``count_params`` covers the LSTM stack only.

    Symmetry defaults to the average parameterization on all four hidden-gate
    blocks.
    """
    if spec is None:
        spec = SymmetrySpec(SymmetryKind("average"), location="hidden_gates")
    if hidden < 1 or layers < 1:
        raise ConfigError(f"LSTM needs hidden >= 1 and layers >= 1, got {hidden}, {layers}", "arch")
    _check_location(spec, LSTM_LOCATIONS, "hidden_gates")
    if spec.active and spec.axis != "channelwise":
        raise ConfigError("LSTM symmetry is only defined channel-wise", "symmetry.axis")
    rng = np.random.default_rng(seed)
    body = LanguageModel(vocab, hidden, layers, spec, dropout, rng)
    return Model(body, task="lm", has_bn=False, count_scope="rnn", name=f"lstm_lm-{hidden}x{layers}")
