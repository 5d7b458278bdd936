import numpy as np

from ..errors import DimensionError


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_with_grad(logits, labels):
    """Mean negative log-likelihood over the batch and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    B = logits.shape[0]
    lp = log_softmax(logits)
    loss = -lp[np.arange(B), labels].mean()
    grad = np.exp(lp)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


def cross_entropy(logits, labels):
    return cross_entropy_with_grad(logits, labels)[0]


def mse_with_grad(pred, target):
    diff = pred - target
    return float((diff * diff).mean()), 2.0 * diff / diff.size
