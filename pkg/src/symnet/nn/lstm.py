"""LSTM cell and stack with optional symmetric gate blocks.

Gate order is (i, f, g, o) as in PyTorch.  Each of the four input->gate and
four hidden->gate blocks is its own weight source, so any subset can be
symmetrized; the hidden blocks are square and always eligible, the input
blocks only when input size equals hidden size.
"""
import numpy as np

from ..errors import UnsupportedLayerError
from .layers import Layer
from .params import DenseWeight, ParamGroup, make_weight

GATES = ("i", "f", "g", "o")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_forward(x, h, c, weights):
    """One step of the LSTM recurrence.

    ``weights`` holds dense ``W_ih`` (4h x d), ``W_hh`` (4h x h), ``b_ih`` and
    ``b_hh`` (4h).  Returns (h', c', cache).
    """
    gates = x @ weights["W_ih"].T + weights["b_ih"] + h @ weights["W_hh"].T + weights["b_hh"]
    H = h.shape[-1]
    i = _sigmoid(gates[..., :H])
    f = _sigmoid(gates[..., H:2 * H])
    g = np.tanh(gates[..., 2 * H:3 * H])
    o = _sigmoid(gates[..., 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def lstm_cell_backward(cache, dh_new, dc_new, weights):
    """Returns (dx, dh, dc, dgates); weight grads are dgates^T @ [x | h]."""
    x, h, c, i, f, g, o, tc = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c
    dc_prev = dc * f
    dgates = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        dg * (1.0 - g * g),
        do * o * (1.0 - o),
    ], axis=-1)
    dx = dgates @ weights["W_ih"]
    dh = dgates @ weights["W_hh"]
    return dx, dh, dc_prev, dgates


class LSTMLayer(Layer):
    """A single LSTM layer over a (T, B, d) sequence."""

    kind = "lstm_cell"

    def __init__(self, d, h, rng, name="lstm0", kind=None, hidden_gates=(), input_gates=(), has_bn=False):
        self.name = name
        self.d, self.h = d, h
        if input_gates and d != h:
            raise UnsupportedLayerError(
                f"{name}: input-gate symmetry needs input size == hidden size, got {d} != {h}")
        bound = 1.0 / np.sqrt(h)
        self.w_ih = []
        self.w_hh = []
        for gate in GATES:
            init = rng.uniform(-bound, bound, size=(h, d))
            k = kind if gate in input_gates else None
            self.w_ih.append(make_weight(f"{name}.weight_ih.{gate}", (h, d), k, "channelwise", init, rng, has_bn))
        for gate in GATES:
            init = rng.uniform(-bound, bound, size=(h, h))
            k = kind if gate in hidden_gates else None
            self.w_hh.append(make_weight(f"{name}.weight_hh.{gate}", (h, h), k, "channelwise", init, rng, has_bn))
        self.b_ih = ParamGroup(f"{name}.bias_ih", rng.uniform(-bound, bound, size=4 * h))
        self.b_hh = ParamGroup(f"{name}.bias_hh", rng.uniform(-bound, bound, size=4 * h))

    def weight_sources(self):
        return self.w_ih + self.w_hh

    def extra_groups(self):
        return [self.b_ih, self.b_hh]

    def dense_weights(self):
        return {
            "W_ih": np.concatenate([w.value() for w in self.w_ih], axis=0),
            "W_hh": np.concatenate([w.value() for w in self.w_hh], axis=0),
            "b_ih": self.b_ih.value,
            "b_hh": self.b_hh.value,
        }

    def forward(self, x, train=True, state=None):
        T, B, _ = x.shape
        h = np.zeros((B, self.h)) if state is None else state[0]
        c = np.zeros((B, self.h)) if state is None else state[1]
        weights = self.dense_weights()
        out = np.empty((T, B, self.h))
        caches = []
        for t in range(T):
            h, c, cache = lstm_cell_forward(x[t], h, c, weights)
            out[t] = h
            caches.append(cache)
        self._cache = (weights, caches)
        self.final_state = (h, c)
        return out

    def backward(self, g, dstate=None):
        weights, caches = self._cache
        T = len(caches)
        B = g.shape[1]
        dh = np.zeros((B, self.h)) if dstate is None else dstate[0]
        dc = np.zeros((B, self.h)) if dstate is None else dstate[1]
        dx = np.empty((T, B, self.d))
        dW_ih = np.zeros_like(weights["W_ih"])
        dW_hh = np.zeros_like(weights["W_hh"])
        db = np.zeros(4 * self.h)
        for t in reversed(range(T)):
            dx[t], dh, dc, dgates = lstm_cell_backward(caches[t], g[t] + dh, dc, weights)
            x_t, h_t = caches[t][0], caches[t][1]
            dW_ih += dgates.T @ x_t
            dW_hh += dgates.T @ h_t
            db += dgates.sum(axis=0)
        H = self.h
        for k in range(4):
            self.w_ih[k].accumulate(dW_ih[k * H:(k + 1) * H])
            self.w_hh[k].accumulate(dW_hh[k * H:(k + 1) * H])
        self.b_ih.grad += db
        self.b_hh.grad += db
        self.dstate0 = (dh, dc)
        return dx
