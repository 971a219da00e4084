"""Feedforward Q-network: ReLU hidden layers, scalar linear output, inverted
dropout during training. Forward and backward passes are written out by hand
in numpy."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "mobiroute-qnet"
CHECKPOINT_VERSION = 1


class QNetwork:
    """Maps a concatenated ``(f_s, f_a)`` row to a scalar Q-value.

    The raw network output is multiplied by ``output_scale`` so that the
    regression operates on targets of order one.
    """

    def __init__(self, input_dim: int, hidden=(64, 64), dropout: float = 0.2, output_scale: float = 1.0,
                 seed: int | None = 0, dtype=np.float64):
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.dropout = float(dropout)
        self.output_scale = float(output_scale)
        self.dtype = np.dtype(dtype)
        self.meta = {}
        rng = np.random.default_rng(seed)
        sizes = (self.input_dim,) + self.hidden + (1,)
        self.weights, self.biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            limit = np.sqrt((1.0 if last else 6.0) / fan_in)
            self.weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)).astype(self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype))

    # -- parameters -------------------------------------------------------------

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_params(self, params):
        self.weights = [np.asarray(p, dtype=self.dtype) for p in params[0::2]]
        self.biases = [np.asarray(p, dtype=self.dtype) for p in params[1::2]]

    def copy(self) -> "QNetwork":
        other = QNetwork.__new__(QNetwork)
        other.__dict__.update(self.__dict__)
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.meta = dict(self.meta)
        return other

    def astype(self, dtype) -> "QNetwork":
        """Copy with parameters stored as ``dtype`` (e.g. float32 for fast
        inference)."""
        other = self.copy()
        other.dtype = np.dtype(dtype)
        other.weights = [W.astype(other.dtype) for W in self.weights]
        other.biases = [b.astype(other.dtype) for b in self.biases]
        return other

    # -- passes -----------------------------------------------------------------

    def _check(self, X):
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValueError(f"input has {X.shape[1]} columns, network expects {self.input_dim}")
        return X

    def sample_masks(self, n: int, rng) -> list:
        """Inverted-dropout masks, one entry per hidden layer.

        Only the last hidden layer is dropped (earlier entries are None). It
        feeds the linear output, so the mask-averaged training output equals
        the evaluation-mode output and regression targets stay unbiased;
        dropping units in front of a ReLU would not have that property.
        """
        keep = 1.0 - self.dropout
        out = [None] * len(self.hidden)
        if self.hidden:
            out[-1] = (rng.random((n, self.hidden[-1])) < keep).astype(self.dtype) / keep
        return out

    def _forward(self, X, masks=None):
        acts, pre = [X], []
        a = X
        for i, (W, b) in enumerate(zip(self.weights[:-1], self.biases[:-1])):
            z = a @ W + b
            a = np.maximum(z, 0.0)
            if masks is not None and masks[i] is not None:
                a = a * masks[i]
            pre.append(z)
            acts.append(a)
        out = (a @ self.weights[-1] + self.biases[-1])[:, 0]
        return out, (acts, pre)

    def hidden_features(self, X) -> np.ndarray:
        """Evaluation-mode activations of the last hidden layer."""
        a = self._check(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
        return a

    def fit_readout(self, X, y, ridge: float = 0.1) -> None:
        """Set the linear output layer to the ridge-regression fit of ``y`` on
        the evaluation-mode hidden features of ``X``. The penalty is ``ridge``
        times the mean feature energy; the output bias is not penalized."""
        H = self.hidden_features(X).astype(float)
        H = np.hstack([H, np.ones((len(H), 1))])
        t = np.asarray(y, dtype=float) / self.output_scale
        G = H.T @ H
        pen = ridge * np.trace(G[:-1, :-1]) / max(len(G) - 1, 1)
        G[np.arange(len(G) - 1), np.arange(len(G) - 1)] += max(pen, 1e-12)
        w = np.linalg.solve(G, H.T @ t)
        self.weights[-1] = w[:-1, None].astype(self.dtype)
        self.biases[-1] = w[-1:].astype(self.dtype)

    def predict(self, X) -> np.ndarray:
        """Evaluation-mode Q-values (no dropout) for each row of ``X``."""
        out, _ = self._forward(self._check(X))
        return out * self.output_scale

    __call__ = predict

    def loss_and_grads(self, X, y, masks=None):
        """Half mean squared error between scaled outputs and ``y``, and its
        gradient with respect to ``params``. ``masks`` fixes the dropout
        pattern (None trains without dropout)."""
        X = self._check(X)
        t = np.asarray(y, dtype=self.dtype) / self.output_scale
        out, (acts, pre) = self._forward(X, masks)
        n = len(X)
        err = out - t
        loss = 0.5 * float(np.mean(err * err))
        delta = (err / n)[:, None]
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                if masks is not None and masks[i - 1] is not None:
                    delta = delta * masks[i - 1]
                delta = delta * (pre[i - 1] > 0)
        return loss, grads

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "dropout": self.dropout,
            "output_scale": self.output_scale,
            "meta": self.meta,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QNetwork":
        if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a version-1 mobiroute Q-network checkpoint")
        net = cls(data["input_dim"], data["hidden"], data["dropout"], data["output_scale"], seed=None)
        net.weights = [np.array(W, dtype=net.dtype).reshape(-1, len(b)) for W, b in zip(data["weights"], data["biases"])]
        net.biases = [np.array(b, dtype=net.dtype) for b in data["biases"]]
        net.meta = dict(data.get("meta", {}))
        return net

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "QNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def q_value(net: QNetwork, f_s, f_a) -> float:
    f_s, f_a = np.ravel(f_s), np.ravel(f_a)
    if len(f_s) + len(f_a) != net.input_dim:
        raise ValueError(f"feature length {len(f_s)} + {len(f_a)} != network input {net.input_dim}")
    return float(net.predict(np.concatenate([f_s, f_a]))[0])


def select_action(net: QNetwork, state, candidates, epsilon: float, rng) -> int:
    """Epsilon-greedy choice among candidate action rows; greedy ties go to
    the lowest index."""
    candidates = np.asarray(candidates, dtype=float)
    if candidates.size == 0:
        raise ValueError("no candidate actions")
    candidates = np.atleast_2d(candidates)
    k = len(candidates)
    if rng.random() < epsilon:
        return int(rng.integers(k))
    X = np.hstack([np.broadcast_to(np.ravel(state), (k, len(np.ravel(state)))), candidates])
    return int(np.argmax(net.predict(X)))
