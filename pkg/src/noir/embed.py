"""Metric-learning embedding network trained with a triplet loss.

A plain fully-connected network (rectifier hidden units, linear output)
implemented in numpy with analytic backpropagation, so gradients can be
verified against finite differences. Optimized with Adam.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np


class EmbedError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedConfig:
    input_dim: int = 2048
    hidden_layers: int = 5
    hidden_dim: int = 1024
    output_dim: int = 1024
    epochs: int = 100
    batch_size: int = 40
    learning_rate: float = 1e-3
    margin: float = 1.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.hidden_dim] * self.hidden_layers + [self.output_dim]


def triplet_loss(a: np.ndarray, p: np.ndarray, n: np.ndarray, alpha: float = 1.0) -> float:
    """max(||a-p|| - ||a-n|| + alpha, 0) on already-embedded vectors."""
    a, p, n = (np.asarray(v, dtype=np.float64) for v in (a, p, n))
    if not (a.shape == p.shape == n.shape):
        raise EmbedError("triplet vectors must share a dimension")
    if alpha < 0:
        raise EmbedError("margin must be non-negative")
    d_ap = float(np.linalg.norm(a - p))
    d_an = float(np.linalg.norm(a - n))
    return max(d_ap - d_an + alpha, 0.0)


class EmbeddingNet:
    """Fully-connected embedding network with immutable-by-convention weights."""

    def __init__(self, config: EmbedConfig, seed: int = 0, weights=None, biases=None):
        self.config = config
        dims = config.layer_dims
        if weights is not None:
            self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
            self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        else:
            rng = np.random.default_rng(seed)
            self.weights, self.biases = [], []
            for d_in, d_out in zip(dims[:-1], dims[1:]):
                bound = 1.0 / math.sqrt(d_in)
                self.weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
                self.biases.append(rng.uniform(-bound, bound, size=d_out))
        self.loss_history: list[float] = []

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Embed a batch (N x input_dim) or single vector."""
        single = np.ndim(x) == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.config.input_dim:
            raise EmbedError(
                f"input dim {h.shape[1]} != configured {self.config.input_dim}"
            )
        for i in range(self.n_layers):
            h = h @ self.weights[i] + self.biases[i]
            if i < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    def _forward_cached(self, x: np.ndarray):
        acts = [x]
        pre = []
        h = x
        for i in range(self.n_layers):
            z = h @ self.weights[i] + self.biases[i]
            pre.append(z)
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return acts, pre

    def _backward(self, acts, pre, grad_out):
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (pre[i] > 0)
            grads_w[i] = acts[i].T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads_w, grads_b

    def triplet_batch_loss_and_grads(self, anchors, positives, negatives):
        """Mean triplet loss over a batch plus weight/bias gradients."""
        m = len(anchors)
        batch = np.vstack([anchors, positives, negatives]).astype(np.float64)
        acts, pre = self._forward_cached(batch)
        emb = acts[-1]
        ea, ep, en = emb[:m], emb[m : 2 * m], emb[2 * m :]

        diff_ap = ea - ep
        diff_an = ea - en
        d_ap = np.linalg.norm(diff_ap, axis=1)
        d_an = np.linalg.norm(diff_an, axis=1)
        margins = d_ap - d_an + self.config.margin
        active = margins > 0
        loss = float(np.mean(np.maximum(margins, 0.0)))

        eps = 1e-12
        u_ap = diff_ap / np.maximum(d_ap, eps)[:, None]
        u_an = diff_an / np.maximum(d_an, eps)[:, None]
        scale = active[:, None] / m
        g_a = (u_ap - u_an) * scale
        g_p = -u_ap * scale
        g_n = u_an * scale
        grad_out = np.vstack([g_a, g_p, g_n])
        grads_w, grads_b = self._backward(acts, pre, grad_out)
        return loss, grads_w, grads_b

    def to_json(self) -> str:
        doc = {
            "layer_dims": self.config.layer_dims,
            "margin": self.config.margin,
            "weights": [
                base64.b64encode(w.astype("<f4").tobytes()).decode()
                for w in self.weights
            ],
            "biases": [
                base64.b64encode(b.astype("<f4").tobytes()).decode()
                for b in self.biases
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EmbeddingNet":
        doc = json.loads(text)
        dims = doc["layer_dims"]
        config = EmbedConfig(
            input_dim=dims[0],
            hidden_layers=len(dims) - 2,
            hidden_dim=dims[1] if len(dims) > 2 else dims[-1],
            output_dim=dims[-1],
            margin=doc.get("margin", 1.0),
        )
        weights = [
            np.frombuffer(base64.b64decode(s), dtype="<f4")
            .reshape(d_in, d_out)
            .astype(np.float64)
            for s, d_in, d_out in zip(doc["weights"], dims[:-1], dims[1:])
        ]
        biases = [
            np.frombuffer(base64.b64decode(s), dtype="<f4").astype(np.float64)
            for s in doc["biases"]
        ]
        return cls(config, weights=weights, biases=biases)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            m_hat = self.m[i] / (1 - self.b1**self.t)
            v_hat = self.v[i] / (1 - self.b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_embedding(
    features: np.ndarray,
    labels: list[str],
    config: EmbedConfig | None = None,
    seed: int = 0,
) -> EmbeddingNet:
    """Train an embedding net with random-triplet mining.

    Each epoch draws, per anchor, one random positive (same label) and one
    random negative, reshuffled every epoch. Mean per-epoch loss is kept
    in net.loss_history.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if config is None:
        config = EmbedConfig(input_dim=features.shape[1])
    by_label: dict[str, list[int]] = {}
    for i, l in enumerate(labels):
        by_label.setdefault(l, []).append(i)
    if len(by_label) < 2:
        raise EmbedError("need at least 2 distinct labels")
    for l, idx in by_label.items():
        if len(idx) < 2:
            raise EmbedError(f"label {l!r} has a single sample: no positive available")

    rng = np.random.default_rng(seed)
    net = EmbeddingNet(config, seed=seed)
    params = net.weights + net.biases
    opt = Adam(params, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)
    n = len(features)
    label_arr = np.asarray(labels)

    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            pos, neg = [], []
            for i in idx:
                same = by_label[labels[i]]
                j = i
                while j == i:
                    j = same[rng.integers(len(same))]
                pos.append(j)
                k = i
                while label_arr[k] == labels[i]:
                    k = int(rng.integers(n))
                neg.append(k)
            loss, gw, gb = net.triplet_batch_loss_and_grads(
                features[idx], features[pos], features[neg]
            )
            opt.step(params, gw + gb)
            epoch_losses.append(loss)
        net.loss_history.append(float(np.mean(epoch_losses)))
    return net
