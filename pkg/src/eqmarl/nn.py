"""Small dense-network kit: layers, losses, Adam, and JSON checkpoints.

Gradients are hand-derived for the fixed architectures used here; there is
no general autodiff graph.  Forward passes are pure and cache whatever the
matching backward pass needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("linear", "relu", "softmax")
PROB_CLAMP = 1e-8


class NanGradientError(RuntimeError):
    """A gradient tensor contained NaN; the run must stop with diagnostics."""


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, shift-stabilized."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits) given probs = softmax(logits) and d(loss)/d(probs)."""
    inner = np.sum(probs * dprobs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)


@dataclass
class DenseLayer:
    """Fully connected layer y = activation(W x + b)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must match output size")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.activation!r}")

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    def param_count(self) -> int:
        return self.out_size * (self.in_size + 1)

    @classmethod
    def init(cls, in_size: int, out_size: int, activation: str,
             rng: np.random.Generator) -> "DenseLayer":
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (in_size + out_size))
        w = rng.uniform(-limit, limit, (out_size, in_size))
        return cls(w, np.zeros(out_size), activation)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Returns (output, cache).  x is (..., in_size); batches broadcast."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_size:
            raise ValueError(
                f"input size {x.shape[-1]} != layer input {self.in_size}")
        pre = x @ self.weights.T + self.bias
        if self.activation == "relu":
            out = np.maximum(pre, 0.0)
        elif self.activation == "softmax":
            out = softmax(pre)
        else:
            out = pre
        return out, {"x": x, "pre": pre, "out": out}

    def backward(self, cache: dict, dout: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (dW, db, dx); batch axes are summed into dW and db."""
        if self.activation == "relu":
            dpre = dout * (cache["pre"] > 0)
        elif self.activation == "softmax":
            dpre = softmax_backward(cache["out"], dout)
        else:
            dpre = np.asarray(dout, dtype=np.float64)
        x = cache["x"]
        lead = dpre.shape[:-1]
        dpre2 = dpre.reshape(-1, self.out_size)
        x2 = x.reshape(-1, self.in_size)
        dw = dpre2.T @ x2
        db = dpre2.sum(axis=0)
        dx = (dpre2 @ self.weights).reshape(lead + (self.in_size,))
        return dw, db, dx


def huber_loss(predicted: np.ndarray, target: np.ndarray,
               delta: float = 1.0) -> float:
    """Mean Huber loss: quadratic within delta, linear beyond."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ValueError("predicted and target must have the same shape")
    if predicted.size == 0:
        raise ValueError("empty input")
    err = predicted - target
    a = np.abs(err)
    per = np.where(a <= delta, 0.5 * err * err, delta * a - 0.5 * delta * delta)
    return float(np.mean(per))


def huber_loss_grad(predicted: np.ndarray, target: np.ndarray,
                    delta: float = 1.0) -> np.ndarray:
    """d(mean Huber)/d(predicted)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.size == 0:
        raise ValueError("empty input")
    err = predicted - target
    g = np.where(np.abs(err) <= delta, err, delta * np.sign(err))
    return g / predicted.size


def actor_loss(advantages: np.ndarray, chosen_probs: np.ndarray,
               alpha: float, full_probs: np.ndarray | None = None) -> float:
    """Mean of -A*ln(p) + alpha*H over all agent-step entries.

    By default H = -p*ln(p) on the chosen action's probability alone.
    Passing the full per-step distributions switches H to the (negated)
    full-distribution entropy bonus, for sensitivity runs.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    p = np.clip(np.asarray(chosen_probs, dtype=np.float64), PROB_CLAMP, 1.0)
    if advantages.shape != p.shape:
        raise ValueError("advantages and probabilities must align")
    if p.size == 0:
        raise ValueError("empty input")
    pg = -advantages * np.log(p)
    if full_probs is None:
        ent = -p * np.log(p)
        return float(np.mean(pg + alpha * ent))
    q = np.clip(np.asarray(full_probs, dtype=np.float64), PROB_CLAMP, 1.0)
    ent_full = -np.sum(q * np.log(q), axis=-1)
    return float(np.mean(pg - alpha * ent_full))


def actor_loss_grad_logits(advantages: np.ndarray, probs: np.ndarray,
                           chosen: np.ndarray, alpha: float,
                           full_entropy: bool = False) -> np.ndarray:
    """d(actor loss)/d(logits), averaged over entries like the loss itself.

    probs is (..., |A|); chosen holds the sampled action indices with the
    same leading shape as advantages.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    chosen = np.asarray(chosen)
    p_c = np.clip(np.take_along_axis(probs, chosen[..., None],
                                     axis=-1)[..., 0], PROB_CLAMP, 1.0)
    dprobs = np.zeros_like(probs)
    if full_entropy:
        d_c = -advantages / p_c
        q = np.clip(probs, PROB_CLAMP, 1.0)
        dprobs += alpha * (np.log(q) + 1.0)
    else:
        d_c = -advantages / p_c + alpha * (-np.log(p_c) - 1.0)
    np.put_along_axis(dprobs, chosen[..., None],
                      np.take_along_axis(dprobs, chosen[..., None], axis=-1)
                      + d_c[..., None], axis=-1)
    dlogits = softmax_backward(probs, dprobs)
    return dlogits / advantages.size


@dataclass
class AdamState:
    """Bias-corrected Adam over a list of parameter tensors."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray],
                   learning_rate: float) -> "AdamState":
        return cls(learning_rate,
                   m=[np.zeros_like(p, dtype=np.float64) for p in params],
                   v=[np.zeros_like(p, dtype=np.float64) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update.  NaN gradients abort the run."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and optimizer state must align")
    for i, g in enumerate(grads):
        g = np.asarray(g, dtype=np.float64)
        if np.any(np.isnan(g)):
            raise NanGradientError(
                f"NaN gradient in tensor {i} of shape {g.shape}")
        if g.shape != params[i].shape:
            raise ValueError("gradient shape mismatch")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


# ---------------------------------------------------------------------------
# Checkpoint serialization: named tensors as JSON with shape headers.
# ---------------------------------------------------------------------------

def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    doc = {name: {"shape": list(np.asarray(t).shape),
                  "data": np.asarray(t, dtype=np.float64).ravel().tolist()}
           for name, t in tensors.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    out = {}
    for name, entry in doc.items():
        arr = np.asarray(entry["data"], dtype=np.float64)
        out[name] = arr.reshape(entry["shape"])
    return out
