"""SGD with momentum, per-group learning-rate scales and decay exemptions."""
import numpy as np

from ..errors import ContractError


class SGD:
    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0, clip=None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip = clip
        self.velocity = {id(p): np.zeros_like(p.value) for p in self.params}

    def step(self, grads=None):
        if grads is None:
            grads = {p.name: p.grad for p in self.params}
        sgd_step(self.params, grads, self.lr, self.momentum, self.weight_decay,
                 velocity=self.velocity, clip=self.clip)


def sgd_step(params, grads, lr, momentum=0.0, weight_decay=0.0, velocity=None, clip=None):
    """In-place update of every ParamGroup in ``params``.

    v <- momentum*v + g + weight_decay*w, then w <- w - lr*lr_scale*v.  Groups
    flagged ``weight_decay=False`` skip the decay term.  ``clip`` rescales the
    joint gradient to that global L2 norm when exceeded.
    """
    if velocity is None:
        velocity = {}
    missing = [p.name for p in params if p.name not in grads]
    if missing:
        raise ContractError(f"sgd_step: no gradient for {', '.join(missing)}")
    scale = 1.0
    if clip is not None:
        norm = np.sqrt(sum(float((grads[p.name] ** 2).sum()) for p in params))
        if norm > clip:
            scale = clip / norm
    for p in params:
        g = grads[p.name]
        if g.shape != p.value.shape:
            raise ContractError(f"sgd_step: gradient for {p.name} has shape {g.shape}, value {p.value.shape}")
        d = g * scale if scale != 1.0 else g.copy()
        if weight_decay and p.weight_decay:
            d = d + weight_decay * p.value
        v = velocity.get(id(p))
        if v is None or momentum == 0:
            v = d
        else:
            v = momentum * v + d
        velocity[id(p)] = v
        p.value = p.value - lr * p.lr_scale * v
    return params
