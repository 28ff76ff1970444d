"""Small double-precision multilayer perceptron with hand-written backprop."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class TrainingFault(RuntimeError):
    """A parameter update produced a non-finite value."""


class Mlp:
    """tanh hidden layers, linear output; weights stored as ``(out, in)``.

    ``forward`` accepts a single vector or a ``(batch, in)`` matrix. In the
    batch case ``backward`` sums parameter gradients over the rows.
    """

    def __init__(self, sizes, rng=None, weights=None, biases=None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if weights is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            weights, biases = [], []
            for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
                limit = np.sqrt(6.0 / (n_in + n_out))  # Xavier-uniform
                weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
                biases.append(np.zeros(n_out))
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[k + 1], self.sizes[k]) or b.shape != (self.sizes[k + 1],):
                raise ValueError(f"layer {k}: weight {w.shape} / bias {b.shape} do not match sizes {self.sizes}")
        self._cache = None

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in ``[W0, b0, W1, b1, ...]`` order (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_inputs or x.ndim not in (1, 2):
            raise ValueError(f"input shape {x.shape} does not match {self.n_inputs} inputs")
        acts = [x]
        a = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if k == last else np.tanh(z)
            acts.append(a)
        if cache:
            self._cache = acts
        return a

    __call__ = forward

    def backward(self, grad_out, acts=None) -> list[np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` w.r.t. ``params()``.

        Uses the activations of the last cached forward pass unless ``acts``
        (as returned by :meth:`activations`) is given.
        """
        acts = self._cache if acts is None else acts
        if acts is None:
            raise RuntimeError("backward called before forward")
        g = np.asarray(grad_out, dtype=float)
        if g.shape != acts[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} != output shape {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                g = g * (1.0 - acts[k + 1] ** 2)
            a_in = acts[k]
            if g.ndim == 1:
                grads[2 * k] = np.outer(g, a_in)
                grads[2 * k + 1] = g.copy()
            else:
                grads[2 * k] = g.T @ a_in
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k]
        return grads

    def activations(self):
        return self._cache

    def check_finite(self) -> None:
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise TrainingFault("non-finite parameter after update")

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    # -- checkpoints ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "sizes": self.sizes,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        sizes = data["sizes"]
        weights = []
        for k, flat in enumerate(data["weights"]):
            shape = (sizes[k + 1], sizes[k])
            if len(flat) != shape[0] * shape[1]:
                raise ValueError(f"layer {k}: {len(flat)} weights, expected {shape}")
            weights.append(np.array(flat, dtype=float).reshape(shape))
        return cls(sizes, weights=weights, biases=data["biases"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sgd_step(params, grads, rate: float, direction: str = "descend") -> None:
    """In-place ``theta <- theta -/+ rate * g``; raises :class:`TrainingFault` on NaN."""
    if direction not in ("ascend", "descend"):
        raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    sign = 1.0 if direction == "ascend" else -1.0
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    updates = []
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch {p.shape} vs {np.shape(g)}")
        u = p + sign * rate * np.asarray(g)
        if not np.all(np.isfinite(u)):
            raise TrainingFault("non-finite value in SGD update")
        updates.append(u)
    for p, u in zip(params, updates):
        p[...] = u


def masked_softmax(logits, mask=None) -> np.ndarray:
    """Softmax over entries where ``mask`` is true; masked entries get 0."""
    z = np.asarray(logits, dtype=float)
    mask = np.ones(z.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("masked_softmax needs at least one valid entry")
    out = np.zeros_like(z)
    zv = z[mask]
    e = np.exp(zv - zv.max())
    out[mask] = e / e.sum()
    return out
