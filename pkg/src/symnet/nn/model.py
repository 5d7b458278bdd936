"""Model container, parameter counting and the functional forward/backward API."""
import numpy as np

from ..errors import DimensionError
from .losses import cross_entropy_with_grad, mse_with_grad
from .lstm import LSTMLayer


class Model:
    """A fixed layer graph plus the task loss it is trained with.

    ``task`` is ``classify`` (logits, integer labels), ``lm`` (T x B x V
    logits, T x B targets) or ``regress`` (mean squared error).
    """

    def __init__(self, body, task="classify", has_bn=False, count_scope=None, name="model",
                 input_shape=None):
        self.body = body
        self.task = task
        self.has_bn = has_bn
        self.count_scope = count_scope
        self.name = name
        self.input_shape = input_shape
        self._grad_out = None
        self._dtype = np.float64

    # structure

    def layers(self):
        return list(self.body.walk())

    def weight_sources(self, scope=None):
        seen, out = set(), []
        for layer in self.layers():
            if scope == "rnn" and not isinstance(layer, LSTMLayer):
                continue
            for src in layer.weight_sources():
                if id(src) not in seen:
                    seen.add(id(src))
                    out.append(src)
        return out

    def param_groups(self, scope=None):
        seen, out = set(), []
        for src in self.weight_sources(scope):
            for g in src.groups:
                if id(g) not in seen:
                    seen.add(id(g))
                    out.append(g)
        for layer in self.layers():
            if scope == "rnn" and not isinstance(layer, LSTMLayer):
                continue
            for g in layer.extra_groups():
                if id(g) not in seen:
                    seen.add(id(g))
                    out.append(g)
        return out

    def symmetric_sources(self):
        return [s for s in self.weight_sources() if s.symmetric]

    def soft_sources(self):
        return [s for s in self.symmetric_sources() if s.kind.name == "soft"]

    # computation

    def penalty(self):
        total = 0.0
        for src in self.soft_sources():
            total += src.penalty()[0]
        return total

    def forward(self, x, y=None, train=True):
        if self.input_shape is not None and tuple(x.shape[1:]) != tuple(self.input_shape):
            raise DimensionError(f"{self.name}: expected input of shape (B, {self.input_shape}), got {x.shape}")
        x = np.asarray(x)
        self._dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
        out = self.body.forward(x, train)
        if y is None:
            self._grad_out = None
            return out, None
        if self.task == "classify":
            loss, g = cross_entropy_with_grad(out, y)
        elif self.task == "lm":
            V = out.shape[-1]
            loss, g = cross_entropy_with_grad(out.reshape(-1, V), np.asarray(y).reshape(-1))
            g = g.reshape(out.shape)
        else:
            loss, g = mse_with_grad(out, y)
        self._grad_out = g
        self.task_loss = loss
        if train:
            loss = loss + self.penalty()
        return out, loss

    def zero_grad(self):
        for g in self.param_groups():
            g.zero_grad()

    def backward(self, scale=1.0, upstream=None):
        """Backpropagate the last forward's loss; returns {group name: grad}.

        ``upstream`` replaces the loss gradient w.r.t. the model output.
        """
        self.zero_grad()
        g = self._grad_out if upstream is None else upstream
        if g is None:
            raise RuntimeError("backward() called before a forward pass with targets")
        self.body.backward((g * scale).astype(self._dtype, copy=False))
        for src in self.soft_sources():
            _, pg = src.penalty()
            if pg is not None:
                src.accumulate(pg * scale)
        return {p.name: p.grad for p in self.param_groups()}

    # bookkeeping

    def count_params(self, phase="train", scope="default"):
        if phase not in ("train", "test"):
            raise ValueError(f"phase must be 'train' or 'test', got {phase!r}")
        scope = self.count_scope if scope == "default" else scope
        total = sum(src.count(phase) for src in self.weight_sources(scope))
        seen = {id(g) for src in self.weight_sources(scope) for g in src.groups}
        for g in self.param_groups(scope):
            if id(g) not in seen:
                total += g.size
        return int(total)

    def asymmetry_norms(self, p=1):
        return {src.name: src.asymmetry(p) for src in self.soft_sources()}

    def project_soft_weights(self):
        """Replace every soft-constrained weight by its upper-triangle projection."""
        for src in self.soft_sources():
            src.project_upper()

    def train_mode_reset(self):
        for layer in self.layers():
            if hasattr(layer, "reset_state"):
                layer.reset_state()


def forward(model, batch, train=True):
    """(activations, loss) for a batch ``(x, y)``."""
    x, y = batch
    return model.forward(x, y, train)


def backward(model, activations=None, scale=1.0):
    return model.backward(scale=scale)


def count_params(model, phase="train", scope="default"):
    return model.count_params(phase, scope)
