"""Flat-parameter dense classifier with hand-written forward/backward.

The model is a plain MLP head: input -> optional tanh hidden layer ->
output logits. Parameters live in one float64 vector (per layer: row-major
weights, then biases), which keeps optimizer steps, teacher EMA copies,
and finite-difference checks trivial.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Mlp", "as_matrix", "make_rng", "sigmoid", "softmax"]


def make_rng(seed) -> np.random.Generator:
    """All randomness in the package flows from generators made here."""
    return np.random.default_rng(seed)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise ValueError."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


# Smallest/largest float64 strictly inside (0, 1); sigmoid outputs are
# clipped here so downstream logs never see an exact 0 or 1.
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(logits) -> np.ndarray:
    """Numerically stable logistic, with outputs in the open interval (0, 1)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite entries")
    neg = np.exp(-np.abs(z))  # in (0, 1], never overflows
    out = neg / (1.0 + neg)   # sigmoid(-|z|)
    out = np.where(z >= 0.0, 1.0 - out, out)
    return np.clip(out, _SIG_LO, _SIG_HI)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax (max-shifted for stability)."""
    z = as_matrix(logits, "logits")
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Mlp:
    """Sigmoid-output classifier: linear map or one tanh hidden layer.

    ``layer_sizes`` is ``(n_in, n_out)`` or ``(n_in, n_hidden, n_out)``.
    Instances are immutable; ``sgd_step`` returns a new model.
    """

    def __init__(self, layer_sizes, params):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) not in (2, 3):
            raise ValueError(f"layer_sizes must have 2 or 3 entries, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        expected = Mlp.param_count(sizes)
        theta = np.asarray(params, dtype=np.float64)
        if theta.ndim != 1 or theta.size != expected:
            raise ValueError(
                f"model with layers {sizes} expects {expected} parameters, "
                f"got array of shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters contain non-finite entries")
        self.layer_sizes = sizes
        self.params = theta.copy()

    @staticmethod
    def param_count(layer_sizes) -> int:
        sizes = tuple(layer_sizes)
        return int(sum((fi + 1) * fo for fi, fo in zip(sizes[:-1], sizes[1:])))

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "Mlp":
        """Draw parameters uniformly on [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        sizes = tuple(int(s) for s in layer_sizes)
        chunks = []
        for fi, fo in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fi)
            chunks.append(rng.uniform(-bound, bound, size=(fi + 1) * fo))
        return cls(sizes, np.concatenate(chunks))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, params) -> "Mlp":
        return Mlp(self.layer_sizes, params)

    def _layers(self):
        """Yield (W, b) views into the flat parameter vector."""
        off = 0
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.params[off:off + fi * fo].reshape(fi, fo)
            off += fi * fo
            b = self.params[off:off + fo]
            off += fo
            yield w, b

    def _check_batch(self, batch) -> np.ndarray:
        x = as_matrix(batch, "batch")
        if x.shape[1] != self.n_inputs:
            raise ValueError(
                f"batch has {x.shape[1]} feature columns, model expects {self.n_inputs}"
            )
        return x

    def forward(self, batch) -> np.ndarray:
        """Raw logits for a batch, shape (n, n_outputs)."""
        logits, _ = self._forward_cached(batch)
        return logits

    def _forward_cached(self, batch):
        x = self._check_batch(batch)
        layers = list(self._layers())
        acts = [x]
        z = x
        for w, b in layers[:-1]:
            z = np.tanh(z @ w + b)
            acts.append(z)
        w, b = layers[-1]
        logits = z @ w + b
        if not np.all(np.isfinite(logits)):
            raise ValueError("forward pass produced non-finite logits")
        return logits, acts

    def backward(self, batch, dloss_dlogits) -> np.ndarray:
        """Chain an upstream logit gradient back to a flat parameter gradient."""
        x = self._check_batch(batch)
        g = as_matrix(dloss_dlogits, "dloss_dlogits")
        if g.shape != (x.shape[0], self.n_outputs):
            raise ValueError(
                f"dloss_dlogits has shape {g.shape}, expected "
                f"{(x.shape[0], self.n_outputs)}"
            )
        _, acts = self._forward_cached(x)
        layers = list(self._layers())
        grads = [None] * len(layers)
        delta = g
        for i in range(len(layers) - 1, -1, -1):
            a_in = acts[i]
            dw = a_in.T @ delta
            db = delta.sum(axis=0)
            grads[i] = (dw, db)
            if i > 0:
                w, _ = layers[i]
                delta = (delta @ w.T) * (1.0 - acts[i] ** 2)  # tanh'
        return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])

    def sgd_step(self, grad, lr: float) -> "Mlp":
        """Plain gradient step: theta' = theta - lr * grad."""
        g = np.asarray(grad, dtype=np.float64)
        if g.shape != self.params.shape:
            raise ValueError(
                f"gradient has shape {g.shape}, expected {self.params.shape}"
            )
        if not lr > 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        return Mlp(self.layer_sizes, self.params - lr * g)
