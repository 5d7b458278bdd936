"""Single-hidden-layer sigmoid regression with a symmetric hidden weight.

The symmetric net computes ``a . sigmoid(W [x; 0] + b) + c`` where W is a
symmetric ``width x width`` matrix (triangular parameterization) and the
n-dimensional input is zero-padded to ``width``; its unconstrained twin uses
a dense ``width x n`` weight.  Both are fit by L-BFGS on a grid over
[0, 1]^n and scored by the max error on a finer grid.
"""
import numpy as np
from scipy.optimize import minimize

from ..symmetry.ops import build_triangular, grad_triangular

TARGETS = {
    "constant": lambda x: np.full(len(x), 0.7),
    "linear": lambda x: 0.5 * (x[:, 0] + x[:, 1]) if x.shape[1] > 1 else 0.5 * x[:, 0],
    "polynomial": lambda x: (x ** 2).sum(axis=1) - 1.5 * x.prod(axis=1) + 0.3 * x[:, 0] ** 3,
    "sine-product": lambda x: np.prod(np.sin(np.pi * x), axis=1),
}


def grid(n, m):
    axes = [np.linspace(0.0, 1.0, m)] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Net:
    def __init__(self, n, width, symmetric, rng):
        if symmetric and width < n:
            raise ValueError(f"symmetric net needs width >= input dim, got {width} < {n}")
        self.n, self.width, self.symmetric = n, width, symmetric
        shapes = {"b": (width,), "a": (width,), "c": (1,)}
        if symmetric:
            shapes = {"u": (width * (width - 1) // 2,), "v": (width,), **shapes}
        else:
            shapes = {"W": (width, n), **shapes}
        self.shapes = shapes
        scale = 3.0
        init = {
            "b": rng.normal(0, scale, width), "a": rng.normal(0, 1.0 / np.sqrt(width), width), "c": np.zeros(1),
        }
        if symmetric:
            init["u"] = rng.normal(0, scale, shapes["u"])
            init["v"] = rng.normal(0, scale, width)
        else:
            init["W"] = rng.normal(0, scale, (width, n))
        self.theta = self.pack(init)

    def pack(self, d):
        return np.concatenate([d[k].ravel() for k in self.shapes])

    def unpack(self, theta):
        out, i = {}, 0
        for k, s in self.shapes.items():
            size = int(np.prod(s))
            out[k] = theta[i:i + size].reshape(s)
            i += size
        return out

    def weight(self, p):
        if self.symmetric:
            return build_triangular(p["u"], p["v"])[:, :self.n]
        return p["W"]

    def predict(self, theta, x):
        p = self.unpack(theta)
        return _sigmoid(x @ self.weight(p).T + p["b"]) @ p["a"] + p["c"][0]

    def loss_grad(self, theta, x, y):
        p = self.unpack(theta)
        W = self.weight(p)
        h = _sigmoid(x @ W.T + p["b"])
        r = h @ p["a"] + p["c"][0] - y
        N = len(y)
        loss = float(r @ r) / N
        dr = 2.0 * r / N
        dz = np.outer(dr, p["a"]) * h * (1.0 - h)
        g = {"a": h.T @ dr, "c": np.array([dr.sum()]), "b": dz.sum(axis=0)}
        dW = dz.T @ x
        if self.symmetric:
            full = np.zeros((self.width, self.width))
            full[:, :self.n] = dW
            g["u"], g["v"] = grad_triangular(full)
        else:
            g["W"] = dW
        return loss, self.pack(g)


def fit(net, x, y, maxiter):
    res = minimize(net.loss_grad, net.theta, args=(x, y), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "maxfun": 2 * maxiter, "gtol": 1e-12, "ftol": 1e-16})
    net.theta = res.x
    return res


def approx_demo(target="sine-product", n=2, width=64, seed=0, train_points=21, eval_points=101, maxiter=3000):
    """Fit both twins to ``target`` and report their sup-norm errors."""
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}; expected one of {sorted(TARGETS)}")
    f = TARGETS[target]
    xt = grid(n, train_points)
    xe = grid(n, eval_points)
    out = {"target": target, "n": n, "width": width, "seed": seed,
           "train_grid": train_points, "eval_grid": eval_points}
    for label, sym in (("symmetric", True), ("unconstrained", False)):
        net = Net(n, width, sym, np.random.default_rng(seed))
        res = fit(net, xt, f(xt), maxiter)
        err = np.abs(net.predict(net.theta, xe) - f(xe)).max()
        out[label] = {"sup_error": float(err), "train_mse": float(res.fun), "iterations": int(res.nit),
                      "params": int(net.theta.size)}
    u = out["unconstrained"]["sup_error"]
    out["ratio"] = out["symmetric"]["sup_error"] / u if u > 0 else float("inf")
    return out
