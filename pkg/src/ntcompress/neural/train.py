from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ..core import LinkGraph, TrafficDataset, TrafficWindow, build_link_graph
from ..ingest import split_windows
from ..models import LogTransform
from . import tensor as tn
from .predictor import (
    NETWORK,
    SINGLE_LINK,
    PredictorModel,
    _as_tensors,
    adjacency_for,
    encode_past,
    label_step,
    laplace_nll_tensor,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    kind: str = NETWORK
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    masks_per_window: int = 50
    split_fraction: float = 0.7
    seed: int = 0
    hidden_size: int = 64
    w_past: int = 4
    eval_masks: int = 4
    windows_per_epoch: int | None = None  # subsample of training windows per epoch
    grad_clip: float | None = 1.0  # global gradient-norm cap; None disables
    lr_schedule: str = "constant"  # or "cosine": decay to 0 over the run

    def __post_init__(self):
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.masks_per_window < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("masks_per_window, batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainResult:
    model: PredictorModel
    train_loss: list[float]
    eval_loss: list[float]
    best_epoch: int
    seconds: float


def fit_transform(values: np.ndarray) -> LogTransform:
    logs = np.log1p(np.asarray(values, dtype=np.float64))
    std = float(logs.std())
    return LogTransform(float(logs.mean()), std if std > 1e-6 else 1.0)


def window_loss(p, kind: str, adj, past_x: np.ndarray, label_x: np.ndarray, known: np.ndarray,
                b_min: float):
    """Mean Laplace NLL over unknown label entries.

    ``past_x`` is ``(B, w, L)``; ``label_x`` and ``known`` are ``(B * M, L)``
    with the ``M`` masks of each window stored consecutively.
    """
    reps = label_x.shape[0] // past_x.shape[0]
    h = encode_past(p, kind, adj, past_x)
    if reps > 1:
        h = tn.repeat_batch(h, reps)
    mu, b = label_step(p, kind, adj, h, label_x, known, b_min)
    weight = (~known.astype(bool)).astype(np.float64)
    count = weight.sum()
    if count == 0:
        raise ValueError("no unknown label entries to score")
    nll = laplace_nll_tensor(mu, b, label_x)
    return tn.total(nll * (weight / count))


def sample_masks(rng: np.random.Generator, n: int, num_links: int) -> np.ndarray:
    """Bernoulli(1/2) known flags, with one random label link forced unknown."""
    known = rng.random((n, num_links)) < 0.5
    known[np.arange(n), rng.integers(0, num_links, size=n)] = False
    return known


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))
    if norm > max_norm:
        for k in grads:
            grads[k] = grads[k] * (max_norm / norm)
    return norm


def _windows(x: np.ndarray, w_past: int, labels: np.ndarray):
    idx = labels[:, None] + np.arange(-w_past, 0)[None, :]
    return x[idx], x[labels]


def train(dataset: TrafficDataset, config: TrainConfig, graph: LinkGraph | None = None,
          progress=None) -> TrainResult:
    """Fit a predictor with masked conditional training.

    Windows are split chronologically; the checkpoint with the lowest
    evaluation loss is returned. Fully deterministic for a given seed.
    """
    start = time.perf_counter()
    w = config.w_past
    if dataset.num_bins - w < 2:
        raise ValueError(f"dataset too short: {dataset.num_bins} bins for w_past={w}")
    train_labels, eval_labels = split_windows(dataset.num_bins, config.split_fraction, w)

    rng = np.random.default_rng(config.seed)
    transform = fit_transform(dataset.values[: train_labels[-1] + 1])
    model = PredictorModel.initialize(config.kind, config.hidden_size, w, transform, rng)
    if graph is None and config.kind == NETWORK:
        graph = build_link_graph(dataset.topology)
    num_links = dataset.num_links
    adj = adjacency_for(config.kind, graph, num_links)
    x = transform(dataset.values.astype(np.float64))
    masks_per = config.masks_per_window if config.kind == NETWORK else 1

    eval_rng = np.random.default_rng([config.seed, 1])
    eval_past, eval_label = _windows(x, w, eval_labels)
    if config.kind == NETWORK:
        eval_reps = config.eval_masks
        eval_known = sample_masks(eval_rng, len(eval_labels) * eval_reps, num_links)
    else:
        eval_reps = 1
        eval_known = np.zeros((len(eval_labels), num_links), dtype=bool)
    eval_label = np.repeat(eval_label, eval_reps, axis=0)

    def evaluate(params) -> float:
        p = _as_tensors(params)
        total, count = 0.0, 0
        chunk = 64
        with tn.no_grad():
            for s in range(0, len(eval_labels), chunk):
                e = min(s + chunk, len(eval_labels))
                sl = slice(s * eval_reps, e * eval_reps)
                kn = eval_known[sl]
                n_unknown = int((~kn).sum())
                loss = window_loss(p, config.kind, adj, eval_past[s:e], eval_label[sl], kn, model.b_min)
                total += float(loss.data) * n_unknown
                count += n_unknown
        return total / count

    params = {k: v.copy() for k, v in model.params.items()}
    opt = Adam(params, config.learning_rate)
    best = (evaluate(params), -1, {k: v.copy() for k, v in params.items()})
    train_hist, eval_hist = [], []
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            opt.lr = config.learning_rate * 0.5 * (1 + np.cos(np.pi * epoch / config.epochs))
        order = rng.permutation(train_labels)
        if config.windows_per_epoch:
            order = order[: config.windows_per_epoch]
        losses = []
        for s in range(0, len(order), config.batch_size):
            batch = np.sort(order[s:s + config.batch_size])
            past, label = _windows(x, w, batch)
            if config.kind == NETWORK:
                known = sample_masks(rng, len(batch) * masks_per, num_links)
            else:
                known = np.zeros((len(batch), num_links), dtype=bool)
            label = np.repeat(label, masks_per, axis=0)
            p = _as_tensors(params, grad=True)
            loss = window_loss(p, config.kind, adj, past, label, known, model.b_min)
            loss.backward()
            grads = {k: p[k].grad for k in params}
            if config.grad_clip:
                clip_gradients(grads, config.grad_clip)
            opt.step(params, grads)
            losses.append(float(loss.data))
        ev = evaluate(params)
        train_hist.append(float(np.mean(losses)) if losses else float("nan"))
        eval_hist.append(ev)
        if ev < best[0]:
            best = (ev, epoch, {k: v.copy() for k, v in params.items()})
        log.info("epoch %d train %.4f eval %.4f", epoch, train_hist[-1], ev)
        if progress:
            progress(epoch, train_hist[-1], ev)
    return TrainResult(model.with_params(best[2]), train_hist, eval_hist, best[1],
                       time.perf_counter() - start)


def check_gradients(loss_fn, params: dict[str, np.ndarray], epsilon: float = 1e-6,
                    n_checks: int = 60, seed: int = 0) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``loss_fn`` maps a dict of tensors to a scalar tensor. ``n_checks``
    entries are sampled uniformly over all parameters.
    """
    p = _as_tensors(params, grad=True)
    loss_fn(p).backward()
    analytic = {k: (p[k].grad if p[k].grad is not None else np.zeros_like(params[k])) for k in params}
    rng = np.random.default_rng(seed)
    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    picks = rng.choice(sizes.sum(), size=min(n_checks, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    work = {k: v.copy() for k, v in params.items()}
    worst = 0.0
    with tn.no_grad():
        for flat in np.sort(picks):
            i = int(np.searchsorted(bounds, flat, side="right"))
            name = names[i]
            pos = np.unravel_index(flat - (bounds[i - 1] if i else 0), params[name].shape)
            orig = work[name][pos]
            work[name][pos] = orig + epsilon
            up = float(loss_fn(_as_tensors(work)).data)
            work[name][pos] = orig - epsilon
            down = float(loss_fn(_as_tensors(work)).data)
            work[name][pos] = orig
            numeric = (up - down) / (2 * epsilon)
            a = float(analytic[name][pos])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def gradient_check(model: PredictorModel, window: TrafficWindow, epsilon: float = 1e-6,
                   graph: LinkGraph | None = None, n_checks: int = 60, seed: int = 0) -> float:
    """Gradient check of the masked NLL on one window."""
    num_links = window.past.shape[1]
    adj = adjacency_for(model, graph, num_links)
    tf = model.transform
    past = tf(window.past)[None]
    label = tf(window.label_bin)[None]
    known = window.mask.known[None].copy()
    if model.kind == SINGLE_LINK:
        known[:] = False

    def loss_fn(p):
        return window_loss(p, model.kind, adj, past, label, known, model.b_min)

    return check_gradients(loss_fn, model.params, epsilon, n_checks, seed)
