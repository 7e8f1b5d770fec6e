"""Reference gesture classifiers for the augmentation study.

Two deliberately simple models: multinomial logistic regression on
per-channel summary features, and a small two-layer temporal ConvNet trained
with momentum SGD. Both are deterministic given their seed.
"""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression

from .features import feature_matrix
from .nn import Conv1d, Linear, Module, leaky_relu, leaky_relu_grad
from .training import apply_sgd_


class ClassifierError(ValueError):
    pass


def _class_index(labels):
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ClassifierError(f"training set holds a single class ({classes.tolist()})")
    lookup = {c: i for i, c in enumerate(classes.tolist())}
    return classes, np.array([lookup[l] for l in labels.tolist()])


class LinearWindowClassifier:
    """Multinomial logistic regression on [rms | mav | zero-crossing] features."""

    def __init__(self, seed=0, max_iter=2000, c=1.0):
        self.seed = seed
        self.max_iter = max_iter
        self.c = c
        self.model = None
        self._mu = self._sd = None

    def fit(self, windows, labels):
        X = feature_matrix(windows)
        classes, y = _class_index(labels)
        self.classes = classes
        self._mu = X.mean(axis=0)
        self._sd = np.maximum(X.std(axis=0), 1e-12)
        self.model = LogisticRegression(
            C=self.c, max_iter=self.max_iter, random_state=self.seed
        )
        self.model.fit((X - self._mu) / self._sd, y)
        return self

    def predict(self, windows):
        if self.model is None:
            raise ClassifierError("classifier is not fitted")
        X = (feature_matrix(windows) - self._mu) / self._sd
        return self.classes[self.model.predict(X)]

    def accuracy(self, windows, labels):
        return float(np.mean(self.predict(windows) == np.asarray(labels)))


class ConvWindowClassifier(Module):
    """Two strided temporal conv layers, global average pool, affine head."""

    def __init__(self, d_e, n_classes, seed=0, channels=(8, 16), kernel=7,
                 epochs=30, batch_size=32, lr=0.05, momentum=0.9, weight_decay=1e-4):
        super().__init__()
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        pad = kernel // 2
        self.conv1 = self.add_child("conv1", Conv1d(d_e, channels[0], kernel, 2, pad, rng))
        self.conv2 = self.add_child("conv2", Conv1d(channels[0], channels[1], kernel, 2, pad, rng))
        self.head = self.add_child("head", Linear(channels[1], n_classes, rng))
        self.n_classes = n_classes
        self.epochs, self.batch_size = epochs, batch_size
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.seed = seed
        self.classes = None

    def _forward(self, X):
        x = X.transpose(0, 2, 1)  # (B, C, L)
        a1, c1 = self.conv1.forward(x)
        x1 = leaky_relu(a1)
        a2, c2 = self.conv2.forward(x1)
        x2 = leaky_relu(a2)
        pooled = x2.mean(axis=2)
        logits, c3 = self.head.forward(pooled)
        return logits, (c1, a1, c2, a2, x2.shape[2], c3)

    def _backward(self, g_logits, cache):
        c1, a1, c2, a2, L2, c3 = cache
        g_pool = self.head.backward(g_logits, c3)
        g_x2 = np.repeat(g_pool[:, :, None], L2, axis=2) / L2
        g_a2 = g_x2 * leaky_relu_grad(a2)
        g_x1 = self.conv2.backward(g_a2, c2)
        g_a1 = g_x1 * leaky_relu_grad(a1)
        self.conv1.backward(g_a1, c1)

    def fit(self, windows, labels):
        X = np.stack([np.asarray(w, dtype=np.float64) for w in windows])
        classes, y = _class_index(labels)
        if classes.size > self.n_classes:
            raise ClassifierError(
                f"{classes.size} classes exceed head size {self.n_classes}"
            )
        self.classes = classes
        rng = np.random.default_rng(np.random.SeedSequence(self.seed + 1))
        buffers = {}
        n = len(X)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                self.zero_grad()
                logits, cache = self._forward(X[idx])
                shifted = logits - logits.max(axis=1, keepdims=True)
                probs = np.exp(shifted)
                probs /= probs.sum(axis=1, keepdims=True)
                g = probs.copy()
                g[np.arange(len(idx)), y[idx]] -= 1.0
                self._backward(g / len(idx), cache)
                apply_sgd_(self, buffers, self.lr, self.momentum, self.weight_decay)
        return self

    def predict(self, windows):
        if self.classes is None:
            raise ClassifierError("classifier is not fitted")
        X = np.stack([np.asarray(w, dtype=np.float64) for w in windows])
        logits, _ = self._forward(X)
        return self.classes[np.argmax(logits, axis=1)]

    def accuracy(self, windows, labels):
        return float(np.mean(self.predict(windows) == np.asarray(labels)))
