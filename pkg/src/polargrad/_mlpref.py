"""Reference numpy implementation of the feedforward critic kernels.

Semantics are shared with the compiled backend (``polargrad._fastmlp``):
a two-hidden-layer tanh network with a scalar linear output. ``sgd_mse_step``
takes one in-place gradient step on 0.5 * mean((out - y)^2); the halved
convention makes lr=1 land a single-sample tabular-style update exactly on
its target. It returns the unhalved mean squared error before the step.
"""

import numpy as np


def forward(X, Ws, bs):
    h = np.tanh(X @ Ws[0] + bs[0])
    h = np.tanh(h @ Ws[1] + bs[1])
    return (h @ Ws[2] + bs[2])[:, 0]


def forward_cached(X, Ws, bs):
    h1 = np.tanh(X @ Ws[0] + bs[0])
    h2 = np.tanh(h1 @ Ws[1] + bs[1])
    y = (h2 @ Ws[2] + bs[2])[:, 0]
    return y, h1, h2


def param_grads(X, h1, h2, dy, Ws):
    """Backprop of sum(dy * out) through the cached forward pass."""
    d3 = dy[:, None]
    dW3 = h2.T @ d3
    db3 = d3.sum(axis=0)
    d2 = (d3 @ Ws[2].T) * (1.0 - h2 * h2)
    dW2 = h1.T @ d2
    db2 = d2.sum(axis=0)
    d1 = (d2 @ Ws[1].T) * (1.0 - h1 * h1)
    dW1 = X.T @ d1
    db1 = d1.sum(axis=0)
    return [dW1, dW2, dW3], [db1, db2, db3]


def sgd_mse_step(X, y, Ws, bs, lr):
    out, h1, h2 = forward_cached(X, Ws, bs)
    resid = out - y
    dy = resid / len(y)
    dWs, dbs = param_grads(X, h1, h2, dy, Ws)
    for W, dW in zip(Ws, dWs):
        W -= lr * dW
    for b, db in zip(bs, dbs):
        b -= lr * db
    return float(np.mean(resid * resid))
