"""Fitted Q-iteration on a pooled experience set."""

from __future__ import annotations

import numpy as np

from .config import RLConfig
from .experience import ExperienceBuffer
from .network import QNetwork


def _segment_max(q: np.ndarray, owner: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    if len(owner):
        starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
        out[owner[starts]] = np.maximum.reduceat(q, starts)
    return out


def _next_rows(data: dict, subset: np.ndarray):
    """Rows of ``NA`` belonging to experiences ``subset`` and, per row, the
    position within ``subset`` of its owner."""
    owner = data["owner"]
    lo = np.searchsorted(owner, subset, side="left")
    hi = np.searchsorted(owner, subset, side="right")
    counts = hi - lo
    pos = np.repeat(np.arange(len(subset)), counts)
    rows = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(lo, counts)
    return rows, pos


def bootstrap_targets(data: dict, frozen: QNetwork | None, gamma: float, subset=None) -> np.ndarray:
    """``r + gamma**k * max_a' Q(s', a')`` per experience (``r`` when
    terminal or when no previous iterate exists). ``subset`` restricts the
    computation to those experience indices (sorted, unique)."""
    idx = np.arange(len(data["R"])) if subset is None else np.asarray(subset, dtype=np.int64)
    R, K, term = data["R"][idx], data["K"][idx], data["terminal"][idx]
    if frozen is None:
        return R.copy()
    rows, pos = _next_rows(data, idx)
    if len(rows) == 0:
        return R.copy()
    Xn = np.hstack([data["NS"][idx[pos]], data["NA"][rows]])
    best = _segment_max(frozen.predict(Xn).astype(float), pos, len(idx))
    return R + np.where(term, 0.0, gamma ** K * best)


def fitted_q_train(dataset, config: RLConfig, seed: int = 0, callback=None) -> QNetwork:
    """Train a fresh Q-network on ``dataset`` (an :class:`ExperienceBuffer`).

    Each of ``config.iterations`` iterations freezes a copy of the current
    network, recomputes bootstrapped targets from it for the experiences the
    iteration samples (the first iteration regresses onto the immediate
    rewards) and then takes
    ``steps_per_iteration`` mini-batch SGD steps with momentum, dropout and
    global-norm gradient clipping. The linear read-out is then refit by ridge
    regression on the hidden features (see ``RLConfig.readout_ridge``).
    The returned network records the per-column input range it was fitted
    on in ``meta``. Fully determined by ``seed``.
    """
    if isinstance(dataset, ExperienceBuffer):
        if len(dataset) == 0:
            raise ValueError("empty experience dataset")
        data = dataset.arrays()
    else:
        data = dataset
        if len(data["R"]) == 0:
            raise ValueError("empty experience dataset")
    X = np.hstack([data["S"], data["A"]])
    n = len(X)
    seeds = np.random.SeedSequence(seed).spawn(2)
    net = QNetwork(X.shape[1], config.hidden, config.dropout, config.value_scale,
                   seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])
    velocity = [np.zeros_like(p) for p in net.params]
    batch = min(config.batch_size, n)
    frozen = None
    for it in range(config.iterations):
        draws = rng.integers(n, size=(config.steps_per_iteration, batch))
        # targets are only needed for the experiences this iteration samples
        subset, where = np.unique(draws, return_inverse=True)
        where = where.reshape(draws.shape)
        y_sub = bootstrap_targets(data, frozen, config.gamma, subset)
        for step in range(config.steps_per_iteration):
            idx = draws[step]
            masks = net.sample_masks(batch, rng) if config.dropout > 0 else None
            _, grads = net.loss_and_grads(X[idx], y_sub[where[step]], masks)
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > config.grad_clip:
                grads = [g * (config.grad_clip / norm) for g in grads]
            params = net.params
            for p, v, g in zip(params, velocity, grads):
                v *= config.momentum
                v -= config.learning_rate * g
                p += v
        if config.readout_ridge is not None:
            # dropout's noise acts as a strong ridge on the read-out and biases
            # it toward the mean target; refit it on this iteration's targets
            # with a milder ridge and without dropout
            net.fit_readout(X[subset], y_sub, config.readout_ridge)
            velocity[-2][...] = 0.0
            velocity[-1][...] = 0.0
        # the frozen iterate only serves predictions; single precision halves
        # the cost of the bootstrap pass
        frozen = net.astype(np.float32)
        if callback is not None:
            callback(it, net, subset, y_sub)
    net.meta.update({
        "input_mean": X.mean(axis=0).tolist(),
        "input_min": X.min(axis=0).tolist(),
        "input_max": X.max(axis=0).tolist(),
    })
    return net
