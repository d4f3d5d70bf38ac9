"""Head training: losses, Adam, augmentation-driven batching and leave-one-participant-out folds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyBatch, ShapeMismatch, TooFewParticipants
from .estimator import Backend, FusionHead, sigmoid
from .keypoints import PolarContext
from .patch import AugmentConfig, FingerPatch, augment

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,fold,loss_touch,loss_force,loss_total"


@dataclass(frozen=True)
class TrainerConfig:
    lr: float = 0.0003
    batch_size: int = 128
    epochs: int = 8
    touch_loss_weight: float = 1.0
    force_loss_weight: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    force_on_touch_only: bool = False
    augment: bool = True

    def __post_init__(self):
        if not (self.lr > 0 and self.batch_size > 0 and self.epochs > 0):
            raise ValueError("lr, batch_size and epochs must be positive")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    patch: FingerPatch
    polar: PolarContext
    touch: int
    force: float  # normalized to [0, 1]
    participant: str
    sample_id: Optional[int] = None
    episode: int = 0

    def __post_init__(self):
        if self.touch not in (0, 1):
            raise ValueError("touch label must be 0 or 1")
        if not 0.0 <= self.force <= 1.0:
            raise ValueError("normalized force must lie in [0, 1]")


def weighted_bce(logits, labels) -> Tuple[float, np.ndarray]:
    """Class-balanced BCE. Positives are weighted by N_neg / N_pos."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise EmptyBatch("weighted_bce needs at least one sample")
    if z.shape != y.shape:
        raise ShapeMismatch("logits and labels differ in length")
    n_pos = float(y.sum())
    n_neg = float(y.size - n_pos)
    w = n_neg / n_pos if n_pos > 0 and n_neg > 0 else 1.0
    log_p = -np.logaddexp(0.0, -z)       # log sigmoid(z)
    log_not_p = -np.logaddexp(0.0, z)    # log (1 - sigmoid(z))
    loss = -np.mean(w * y * log_p + (1.0 - y) * log_not_p)
    p = sigmoid(z)
    grad = (w * y * (p - 1.0) + (1.0 - y) * p) / z.size
    return float(loss), grad


def mse_force(preds, targets, touch_mask=None, touch_only: bool = False) -> Tuple[float, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise EmptyBatch("mse_force needs at least one sample")
    if p.shape != t.shape:
        raise ShapeMismatch("preds and targets differ in length")
    if touch_only:
        if touch_mask is None:
            raise ValueError("touch_only requires a touch mask")
        mask = np.asarray(touch_mask, dtype=np.float64).reshape(-1)
    else:
        mask = np.ones_like(p)
    count = mask.sum()
    if count == 0:
        return 0.0, np.zeros_like(p)
    diff = (p - t) * mask
    return float(np.sum(diff * diff) / count), 2.0 * diff / count


def total_loss(loss_touch: float, loss_force: float, cfg: TrainerConfig = TrainerConfig()) -> float:
    return cfg.touch_loss_weight * loss_touch + cfg.force_loss_weight * loss_force


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              cfg: TrainerConfig, t: int):
    """One bias-corrected Adam update. Returns new (params, state); inputs are not modified."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    if params.keys() != grads.keys():
        raise ShapeMismatch("params and grads have different keys")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: param {p.shape} vs grad {g.shape}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[name] = p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v)


def head_loss_and_grads(head: FusionHead, E: np.ndarray, ctx: np.ndarray, touch: np.ndarray,
                        force: np.ndarray, cfg: TrainerConfig = TrainerConfig()):
    """Forward + backward through the fusion head.

    Returns (loss_touch, loss_force, loss_total, grads) with grads keyed like head.params().
    """
    E = np.atleast_2d(E)
    logits, force_raw, pre = head.forward(E, ctx)
    l_touch, g_logit = weighted_bce(logits, touch)
    l_force, g_force = mse_force(force_raw, force, touch_mask=touch, touch_only=cfg.force_on_touch_only)
    g_logit = g_logit * cfg.touch_loss_weight
    g_force = g_force * cfg.force_loss_weight
    hidden = np.maximum(pre, 0.0)
    d_pre = (np.outer(g_logit, head.W_touch) + np.outer(g_force, head.W_force)) * (pre > 0)
    d_embed = d_pre[:, :head.b_embed.size]
    grads = {
        "W_embed": E.T @ d_embed,
        "b_embed": d_embed.sum(axis=0),
        "W_touch": hidden.T @ g_logit,
        "b_touch": np.array([g_logit.sum()]),
        "W_force": hidden.T @ g_force,
        "b_force": np.array([g_force.sum()]),
    }
    return l_touch, l_force, total_loss(l_touch, l_force, cfg), grads


def lopo_splits(samples: Sequence[LabeledSample]) -> List[Tuple[list, list]]:
    """One (train, test) fold per participant, in sorted participant order."""
    participants = sorted({s.participant for s in samples})
    if len(participants) < 2:
        raise TooFewParticipants(f"need at least 2 participants, got {len(participants)}")
    return [
        ([s for s in samples if s.participant != p], [s for s in samples if s.participant == p])
        for p in participants
    ]


def sample_rng(seed: int, epoch: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, sample_id])


def _sample_key(sample: LabeledSample, index: int) -> int:
    return index if sample.sample_id is None else sample.sample_id


def embed_epochs(samples: Sequence[LabeledSample], backend: Backend, cfg: TrainerConfig,
                 aug_cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Backend embeddings of the augmented patch for every (epoch, sample): shape (epochs, N, D).

    Each sample's augmentation stream is keyed by (seed, epoch, sample id), so
    the result does not depend on which other samples are present.
    """
    out = np.empty((cfg.epochs, len(samples), backend.dim))
    for i, s in enumerate(samples):
        key = _sample_key(s, i)
        for epoch in range(cfg.epochs):
            patch = augment(s.patch, aug_cfg, sample_rng(cfg.seed, epoch, key)) if cfg.augment else s.patch
            out[epoch, i] = backend.embed(patch)
    return out


def fold_standardization(head: FusionHead, mean: np.ndarray, std: np.ndarray) -> FusionHead:
    """Rewrite a head trained on (e - mean) / std so it accepts raw embeddings."""
    out = head.copy()
    out.W_embed = head.W_embed / std[:, None]
    out.b_embed = head.b_embed - (mean / std) @ head.W_embed
    return out


def train_head_on_features(features: np.ndarray, ctx: np.ndarray, touch: np.ndarray,
                           force: np.ndarray, cfg: TrainerConfig = TrainerConfig(),
                           fold: int = -1, on_epoch: Optional[Callable[[str], None]] = None
                           ) -> FusionHead:
    """Train on precomputed per-epoch embeddings (epochs, N, D).

    Embeddings are standardized with statistics of the training features; the
    standardization is folded back into W_embed/b_embed before returning.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[0] < cfg.epochs:
        raise ShapeMismatch(f"expected ({cfg.epochs}, N, D) features, got {features.shape}")
    n, dim = features.shape[1], features.shape[2]
    if n == 0:
        raise EmptyBatch("cannot train on an empty sample set")
    ctx = np.asarray(ctx, dtype=np.float64)
    touch = np.asarray(touch, dtype=np.float64)
    force = np.asarray(force, dtype=np.float64)
    mean = features[:cfg.epochs].mean(axis=(0, 1))
    std = features[:cfg.epochs].std(axis=(0, 1))
    std = np.where(std > 1e-8, std, 1.0)

    head = FusionHead.initialize(dim, np.random.default_rng([cfg.seed, 0x4EAD]))
    params = head.params()
    state = AdamState()
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 0x5FF1E, epoch]).permutation(n)
        feats = (features[epoch] - mean) / std
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            l_t, l_f, l_tot, grads = head_loss_and_grads(
                FusionHead.from_params(params), feats[idx], ctx[idx], touch[idx], force[idx], cfg)
            step += 1
            params, state = adam_step(params, grads, state, cfg, step)
            sums += np.array([l_t, l_f, l_tot]) * idx.size
        sums /= n
        row = f"{epoch},{fold},{sums[0]:.6f},{sums[1]:.6f},{sums[2]:.6f}"
        log.debug(row)
        if on_epoch is not None:
            on_epoch(row)
    return fold_standardization(FusionHead.from_params(params), mean, std)


def train_head(samples: Sequence[LabeledSample], cfg: TrainerConfig, backend: Backend,
               aug_cfg: AugmentConfig = AugmentConfig(), fold: int = -1,
               on_epoch: Optional[Callable[[str], None]] = None) -> FusionHead:
    if not samples:
        raise EmptyBatch("cannot train on an empty sample set")
    feats = embed_epochs(samples, backend, cfg, aug_cfg)
    ctx = np.array([[s.polar.R, s.polar.theta] for s in samples])
    touch = np.array([s.touch for s in samples], dtype=np.float64)
    force = np.array([s.force for s in samples], dtype=np.float64)
    return train_head_on_features(feats, ctx, touch, force, cfg, fold, on_epoch)


@dataclass
class FeatureSet:
    """Embeddings and labels for a sample set, computed once and sliced per fold."""

    clean: np.ndarray        # (N, D) un-augmented
    augmented: np.ndarray    # (epochs, N, D)
    ctx: np.ndarray          # (N, 2)
    touch: np.ndarray
    force: np.ndarray
    participant: np.ndarray
    episode: np.ndarray

    @classmethod
    def build(cls, samples: Sequence[LabeledSample], backend: Backend, cfg: TrainerConfig,
              aug_cfg: AugmentConfig = AugmentConfig()) -> "FeatureSet":
        return cls(
            clean=np.array([backend.embed(s.patch) for s in samples]).reshape(len(samples), backend.dim),
            augmented=embed_epochs(samples, backend, cfg, aug_cfg),
            ctx=np.array([[s.polar.R, s.polar.theta] for s in samples]).reshape(-1, 2),
            touch=np.array([s.touch for s in samples], dtype=np.float64),
            force=np.array([s.force for s in samples], dtype=np.float64),
            participant=np.array([s.participant for s in samples], dtype=object),
            episode=np.array([s.episode for s in samples], dtype=np.int64),
        )

    @classmethod
    def concat(cls, parts: Sequence["FeatureSet"]) -> "FeatureSet":
        return cls(*(np.concatenate([getattr(p, f) for p in parts], axis=1 if f == "augmented" else 0)
                     for f in ("clean", "augmented", "ctx", "touch", "force", "participant", "episode")))

    def __len__(self):
        return self.touch.size


def training_loss(head: FusionHead, feats: np.ndarray, ctx, touch, force,
                  cfg: TrainerConfig = TrainerConfig()) -> float:
    return head_loss_and_grads(head, feats, ctx, touch, force, cfg)[2]


@dataclass
class FoldResult:
    participant: str
    head: FusionHead
    touch_prob: np.ndarray
    force_n: np.ndarray
    episode: np.ndarray
    gt_touch: np.ndarray
    gt_force_n: np.ndarray


def cross_validate(fs: FeatureSet, cfg: TrainerConfig = TrainerConfig(),
                   on_epoch: Optional[Callable[[str], None]] = None) -> List[FoldResult]:
    """Leave-one-participant-out: train on everyone else, predict the held-out participant."""
    from .estimator import FORCE_MAX_N

    participants = sorted(set(fs.participant.tolist()))
    if len(participants) < 2:
        raise TooFewParticipants(f"need at least 2 participants, got {len(participants)}")
    results = []
    for fold, p in enumerate(participants):
        train = fs.participant != p
        test = ~train
        head = train_head_on_features(fs.augmented[:, train], fs.ctx[train], fs.touch[train],
                                      fs.force[train], cfg, fold=fold, on_epoch=on_epoch)
        logits, force_raw, _ = head.forward(fs.clean[test], fs.ctx[test])
        results.append(FoldResult(
            participant=p, head=head, touch_prob=sigmoid(logits),
            force_n=np.clip(force_raw, 0.0, 1.0) * FORCE_MAX_N, episode=fs.episode[test],
            gt_touch=fs.touch[test].astype(np.int64), gt_force_n=fs.force[test] * FORCE_MAX_N,
        ))
    return results
