"""Small dense networks on numpy: forward/backward, Adam, soft updates, input widening.

All weights and biases live in one flat float64 vector; per-layer arrays are
views into it, so optimizer steps and target blending are single vector ops.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")
EXPANSION_SCALE = {"reset": 0.0, "decreased": 0.1, "regular": 1.0}
BN_EPS = 1e-5


@dataclass(frozen=True)
class GradClipPolicy:
    max_norm: float = 3.0

    def __post_init__(self):
        if self.max_norm <= 0:
            raise ValueError("max_norm must be positive")


class StaleCacheError(RuntimeError):
    pass


@dataclass
class ForwardCache:
    version: int
    inputs: list
    pre: list
    post: list
    bn: list


class Mlp:
    """Fully connected network with one activation per layer.

    ``sizes`` lists widths from input to output, e.g. [13, 64, 64, 64, 3].
    """

    def __init__(self, sizes, activations, rng=None, output_init=3e-3, batch_norm=False, bn_momentum=0.99):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        if len(activations) != len(sizes) - 1:
            raise ValueError("one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = list(activations)
        self.batch_norm = bool(batch_norm)
        self.bn_momentum = bn_momentum
        self.output_init = output_init
        self.version = 0
        self.params = np.zeros(self.num_params())
        self._bind()
        self.m = np.zeros_like(self.params)
        self.v = np.zeros_like(self.params)
        self.step_count = 0
        n_hidden = len(sizes) - 2
        self.bn_mean = [np.zeros(sizes[i + 1]) for i in range(n_hidden)]
        self.bn_var = [np.ones(sizes[i + 1]) for i in range(n_hidden)]
        if rng is not None:
            self.init(rng)

    # layout

    def num_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def _bind(self) -> None:
        self.W, self.b = [], []
        off = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            self.W.append(self.params[off:off + i * o].reshape(i, o))
            off += i * o
            self.b.append(self.params[off:off + o])
            off += o

    def init(self, rng) -> None:
        n = len(self.W)
        for k in range(n):
            fan_in = self.sizes[k]
            lim = self.output_init if k == n - 1 else 1.0 / np.sqrt(fan_in)
            self.W[k][...] = rng.uniform(-lim, lim, self.W[k].shape)
            self.b[k][...] = rng.uniform(-lim, lim, self.b[k].shape)
        self.version += 1

    def copy(self) -> "Mlp":
        out = Mlp.__new__(Mlp)
        out.sizes = list(self.sizes)
        out.activations = list(self.activations)
        out.batch_norm = self.batch_norm
        out.bn_momentum = self.bn_momentum
        out.output_init = self.output_init
        out.version = 0
        out.params = self.params.copy()
        out._bind()
        out.m = self.m.copy()
        out.v = self.v.copy()
        out.step_count = self.step_count
        out.bn_mean = [a.copy() for a in self.bn_mean]
        out.bn_var = [a.copy() for a in self.bn_var]
        return out

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != self.params.shape:
            raise ValueError("parameter vector has the wrong size")
        self.params[...] = flat
        self.version += 1

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    # forward / backward

    def forward(self, x, train: bool = False):
        """Returns (output, cache). ``x`` is a vector or a (batch, in) matrix.

        ``train`` only matters with batch_norm: batch statistics are used and
        the running averages updated.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {h.shape[1]}")
        inputs, pres, posts, bns = [], [], [], []
        last = len(self.W) - 1
        for k, (W, b, act) in enumerate(zip(self.W, self.b, self.activations)):
            inputs.append(h)
            z = h @ W + b
            bn = None
            if self.batch_norm and k < last:
                if train:
                    mu = z.mean(0)
                    var = z.var(0)
                    mom = self.bn_momentum
                    self.bn_mean[k] = mom * self.bn_mean[k] + (1 - mom) * mu
                    self.bn_var[k] = mom * self.bn_var[k] + (1 - mom) * var
                else:
                    mu, var = self.bn_mean[k], self.bn_var[k]
                inv = 1.0 / np.sqrt(var + BN_EPS)
                zhat = (z - mu) * inv
                bn = (inv, zhat, train)
                z = zhat
            pres.append(z)
            bns.append(bn)
            if act == "relu":
                h = np.maximum(z, 0.0)
            elif act == "tanh":
                h = np.tanh(z)
            else:
                h = z
            posts.append(h)
        out = h[0] if single else h
        return out, ForwardCache(self.version, inputs, pres, posts, bns)

    def predict(self, x):
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, upstream):
        """Gradients of sum(output * upstream) w.r.t. the flat params and the input."""
        if cache.version != self.version:
            raise StaleCacheError("parameters changed since this forward pass")
        g = np.asarray(upstream, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        grads = np.zeros_like(self.params)
        gW, gb = self._views(grads)
        for k in reversed(range(len(self.W))):
            act = self.activations[k]
            if act == "relu":
                g = g * (cache.pre[k] > 0)
            elif act == "tanh":
                g = g * (1.0 - cache.post[k] ** 2)
            bn = cache.bn[k]
            if bn is not None:
                inv, zhat, batch_stats = bn
                if batch_stats:
                    n = g.shape[0]
                    g = inv / n * (n * g - g.sum(0) - zhat * (g * zhat).sum(0))
                else:
                    g = g * inv
            gW[k][...] = cache.inputs[k].T @ g
            gb[k][...] = g.sum(0)
            g = g @ self.W[k].T
        return grads, (g[0] if single else g)

    def _views(self, flat):
        Ws, bs = [], []
        off = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            Ws.append(flat[off:off + i * o].reshape(i, o))
            off += i * o
            bs.append(flat[off:off + o])
            off += o
        return Ws, bs

    # updates

    def optimizer_step(self, grads, policy: GradClipPolicy = GradClipPolicy(), lr: float = 1e-3,
                       betas=(0.9, 0.999), eps: float = 1e-8) -> float:
        """Clip by global norm, then take one Adam step. Returns the applied gradient norm."""
        grads = np.asarray(grads, dtype=float)
        if grads.shape != self.params.shape:
            raise ValueError("gradient vector has the wrong size")
        norm = float(np.sqrt(grads @ grads))
        if norm > policy.max_norm:
            grads = grads * (policy.max_norm / norm)
            norm = policy.max_norm
        b1, b2 = betas
        self.step_count += 1
        self.m *= b1
        self.m += (1 - b1) * grads
        self.v *= b2
        self.v += (1 - b2) * grads * grads
        m_hat = self.m / (1 - b1**self.step_count)
        v_hat = self.v / (1 - b2**self.step_count)
        self.params -= lr * m_hat / (np.sqrt(v_hat) + eps)
        self.version += 1
        return norm

    def expand_input_dim(self, extra_inputs: int, mode: str = "reset", rng=None) -> None:
        """Append ``extra_inputs`` input rows to the first layer.

        New weights are scale * fresh init, scale 0 / 0.1 / 1 for
        reset / decreased / regular. Existing values are copied bit for bit.
        """
        if extra_inputs < 0:
            raise ValueError("extra_inputs must be >= 0")
        if mode not in EXPANSION_SCALE:
            raise ValueError(f"unknown expansion mode {mode!r}")
        if extra_inputs == 0:
            return
        alpha = EXPANSION_SCALE[mode]
        old_in = self.sizes[0]
        new_in = old_in + extra_inputs
        out0 = self.sizes[1]
        if alpha == 0.0:
            fresh = np.zeros((extra_inputs, out0))
        else:
            if rng is None:
                raise ValueError("rng required for non-zero expansion")
            lim = self.output_init if len(self.W) == 1 else 1.0 / np.sqrt(new_in)
            fresh = alpha * rng.uniform(-lim, lim, (extra_inputs, out0))

        def widen(flat, new_rows):
            head = flat[: old_in * out0].reshape(old_in, out0)
            return np.concatenate([head, new_rows], axis=0).ravel(), flat[old_in * out0:]

        w, rest = widen(self.params, fresh)
        params = np.concatenate([w, rest])
        zeros = np.zeros((extra_inputs, out0))
        m = np.concatenate(widen(self.m, zeros))
        v = np.concatenate(widen(self.v, zeros))
        self.sizes[0] = new_in
        self.params, self.m, self.v = params, m, v
        self._bind()
        self.version += 1

    # persistence

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        lines = [
            "format=herlab-mlp-1",
            "sizes=" + ",".join(str(s) for s in self.sizes),
            "activations=" + ",".join(self.activations),
            f"batch_norm={int(self.batch_norm)}",
            f"num_params={len(self.params)}",
            "dtype=<f8",
        ]
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            lines.append(f"layer{k}.W={W.shape[0]}x{W.shape[1]}")
            lines.append(f"layer{k}.b={b.shape[0]}")
        with open(os.path.join(directory, "manifest.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")
        arrays = [self.params.astype("<f8")]
        if self.batch_norm:
            arrays += [a.astype("<f8") for a in self.bn_mean + self.bn_var]
        with open(os.path.join(directory, "params.bin"), "wb") as f:
            for a in arrays:
                f.write(a.tobytes())

    @classmethod
    def load(cls, directory: str) -> "Mlp":
        meta = {}
        with open(os.path.join(directory, "manifest.txt")) as f:
            for line in f:
                line = line.strip()
                if line:
                    key, _, val = line.partition("=")
                    meta[key] = val
        sizes = [int(s) for s in meta["sizes"].split(",")]
        net = cls(sizes, meta["activations"].split(","), batch_norm=bool(int(meta["batch_norm"])))
        raw = np.fromfile(os.path.join(directory, "params.bin"), dtype="<f8")
        n = net.num_params()
        net.set_params(raw[:n])
        if net.batch_norm:
            off = n
            for k in range(len(net.bn_mean)):
                w = net.sizes[k + 1]
                net.bn_mean[k] = raw[off:off + w].copy()
                off += w
            for k in range(len(net.bn_var)):
                w = net.sizes[k + 1]
                net.bn_var[k] = raw[off:off + w].copy()
                off += w
        return net


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.sizes != online.sizes:
        raise ValueError("networks have different shapes")
    target.params *= 1.0 - tau
    target.params += tau * online.params
    if target.batch_norm:
        for k in range(len(target.bn_mean)):
            target.bn_mean[k] = (1 - tau) * target.bn_mean[k] + tau * online.bn_mean[k]
            target.bn_var[k] = (1 - tau) * target.bn_var[k] + tau * online.bn_var[k]
    target.version += 1
