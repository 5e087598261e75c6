"""Optimization loops: plain SGD with momentum, a cached-feature fast path
for frozen-backbone runs, and the still-image pretrain -> inflate -> head
fine-tune recipe.

When only the head is trainable the backbone output for a fixed clip set
never changes, so features are extracted once and the head trains on the
cache; this is step-for-step identical to running the full network every
batch, just without re-spending the conv time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers, model
from .errors import ConfigError, ModelError
from .model import NetSpec, Network


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def sgd_train(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> list[float]:
    """Train in place on a materialized batch tensor; returns per-epoch mean loss."""
    if len(x) == 0:
        raise ModelError("training set is empty")
    if len(x) != len(y):
        raise ModelError(f"got {len(x)} samples but {len(y)} labels")
    rng = np.random.default_rng(cfg.seed)
    trainable = [n for n in sorted(net.params) if n not in net.frozen]
    velocity = {n: np.zeros_like(net.params[n]) for n in trainable}
    curve = []
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in _epoch_batches(len(x), cfg.batch_size, rng):
            logits, caches = net.forward(x[idx], want_cache=True)
            loss, dlogits = layers.bce_with_logits(logits, y[idx])
            grads = net.backward(dlogits, caches)
            for name in trainable:
                g = grads[name]
                v = velocity[name]
                v *= cfg.momentum
                v += g
                net.params[name] -= (cfg.lr * v).astype(net.params[name].dtype, copy=False)
            total += loss * len(idx)
        curve.append(total / len(x))
    return curve


def extract_features(net: Network, clip_iter, batch_size: int = 8):
    """Backbone GAP features for a stream of (clip(C,T,H,W), label) pairs."""
    feats, labels, buf, lab = [], [], [], []

    def flush():
        if buf:
            feats.append(net.features(np.stack(buf)))
            labels.extend(lab)
            buf.clear()
            lab.clear()

    for clip, label in clip_iter:
        buf.append(clip)
        lab.append(label)
        if len(buf) == batch_size:
            flush()
    flush()
    if not feats:
        raise ModelError("no clips to extract features from")
    return np.concatenate(feats, axis=0), np.asarray(labels, dtype=np.float64)


def train_head_on_features(net: Network, feats: np.ndarray, y: np.ndarray,
                           cfg: TrainConfig) -> list[float]:
    """Head-only SGD on cached backbone features; mutates head.w / head.b."""
    bad = [n for n in net.params if not n.startswith("head.") and n not in net.frozen]
    if bad:
        raise ModelError(f"feature-cache training requires a frozen backbone; "
                         f"unfrozen: {', '.join(sorted(bad))}")
    rng = np.random.default_rng(cfg.seed)
    w, b = net.params["head.w"], net.params["head.b"]
    vw, vb = np.zeros_like(w), np.zeros_like(b)
    curve = []
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in _epoch_batches(len(feats), cfg.batch_size, rng):
            logits, cache = layers.dense_forward(feats[idx], w, b)
            loss, dlogits = layers.bce_with_logits(logits[:, 0], y[idx])
            _, dw, db = layers.dense_backward(dlogits[:, None], cache, w)
            vw *= cfg.momentum
            vw += dw
            vb *= cfg.momentum
            vb += db
            w -= (cfg.lr * vw).astype(w.dtype, copy=False)
            b -= (cfg.lr * vb).astype(b.dtype, copy=False)
            total += loss * len(idx)
        curve.append(total / len(feats))
    return curve


def score_clips(net: Network, clip_iter, batch_size: int = 8) -> np.ndarray:
    """Sigmoid scores for a stream of clips (labels in the iter are ignored)."""
    out, buf = [], []
    for item in clip_iter:
        clip = item[0] if isinstance(item, tuple) else item
        buf.append(clip)
        if len(buf) == batch_size:
            out.append(net.score(np.stack(buf)))
            buf = []
    if buf:
        out.append(net.score(np.stack(buf)))
    if not out:
        return np.zeros(0)
    return np.concatenate(out)


@dataclass
class TransferResult:
    network: Network
    pretrain_curve: list[float] = field(default_factory=list)
    finetune_curve: list[float] = field(default_factory=list)


def pretrain_twin(spec: NetSpec, stills: np.ndarray, labels: np.ndarray,
                  cfg: TrainConfig, init_seed: int = 0) -> Network:
    """Train the temporally collapsed twin on single-frame classification."""
    twin_spec = model.collapse_temporal(spec)
    twin = Network.init(twin_spec, seed=init_seed)
    sgd_train(twin, stills, labels, cfg)
    return twin


def inflate_and_freeze(twin: Network, spec: NetSpec, head_seed: int = 1,
                       flow: bool = False) -> Network:
    """Lift twin params onto the 3D spec, freeze the backbone, fresh head."""
    params2d = twin.params
    if flow:
        params2d = model.adapt_first_conv_to_flow(params2d)
    params = model.inflate_params(params2d, spec)
    rng = np.random.default_rng(head_seed)
    fresh = model.init_params(spec, rng)
    params["head.w"] = fresh["head.w"]
    params["head.b"] = fresh["head.b"]
    net = Network(spec, params)
    net.freeze_backbone()
    return net


def transfer_pretrain_then_finetune(
    spec: NetSpec,
    stills: np.ndarray,
    still_labels: np.ndarray,
    clip_iter,
    pre_cfg: TrainConfig,
    fine_cfg: TrainConfig,
    init_seed: int = 0,
    head_seed: int = 1,
    flow: bool = False,
) -> TransferResult:
    """Still-image pretraining, kernel inflation, frozen-backbone head tuning."""
    twin = pretrain_twin(spec, stills, still_labels, pre_cfg, init_seed)
    net = inflate_and_freeze(twin, spec, head_seed, flow=flow)
    feats, y = extract_features(net, clip_iter, fine_cfg.batch_size)
    curve = train_head_on_features(net, feats, y, fine_cfg)
    return TransferResult(network=net, finetune_curve=curve)


def scratch_head_baseline(spec: NetSpec, clip_iter, cfg: TrainConfig,
                          init_seed: int = 0, head_seed: int = 1) -> TransferResult:
    """Paired control: same head training on a random, never-trained backbone."""
    net = Network.init(spec, seed=init_seed)
    rng = np.random.default_rng(head_seed)
    fresh = model.init_params(spec, rng)
    net.params["head.w"] = fresh["head.w"]
    net.params["head.b"] = fresh["head.b"]
    net.freeze_backbone()
    feats, y = extract_features(net, clip_iter, cfg.batch_size)
    curve = train_head_on_features(net, feats, y, cfg)
    return TransferResult(network=net, finetune_curve=curve)
