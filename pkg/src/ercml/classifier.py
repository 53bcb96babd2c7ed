"""Utterance-level emotion head.

One attention-encoder layer applied to the utterance vector as a
length-1 sequence, followed by a linear map to label logits. Trained
with imbalance-weighted cross-entropy; pretrainable standalone on
frozen sentence embeddings and left unfrozen for the contextual
trainer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import ALL_LABEL_IDS, Corpus, label_weights
from .embeddings import SentenceEmbeddingStore
from .encoder import (
    EncoderLayerParams,
    SingletonCache,
    init_encoder,
    singleton_backward,
    singleton_forward,
)
from .errors import BadTarget, DimMismatch, EmptyBatch
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass
class ClassifierParams:
    """Encoder-layer-plus-linear emotion head over an ordered label space."""

    encoder: EncoderLayerParams
    w_out: np.ndarray  # (d, K)
    b_out: np.ndarray  # (K,)
    label_space: tuple[int, ...]

    def __post_init__(self):
        if self.w_out.shape != (self.encoder.dim, len(self.label_space)):
            raise DimMismatch(
                f"head shape {self.w_out.shape} incompatible with dim {self.encoder.dim} "
                f"and {len(self.label_space)} labels"
            )

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def tensors(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{name}": arr for name, arr in self.encoder.tensors().items()}
        out["head.w"] = self.w_out
        out["head.b"] = self.b_out
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.tensors().items()}

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            encoder=self.encoder.copy(),
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
            label_space=self.label_space,
        )


def init_classifier(
    dim: int,
    label_space: tuple[int, ...] = ALL_LABEL_IDS,
    heads: int = 4,
    ffn_dim: int | None = None,
    seed: int = 0,
) -> ClassifierParams:
    """Deterministic classifier initialization (encoder seed offset to
    decorrelate from the contextual encoder initialized at `seed`)."""
    encoder = init_encoder(dim, heads=heads, ffn_dim=ffn_dim, seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    k = len(label_space)
    bound = np.sqrt(6.0 / (dim + k))
    return ClassifierParams(
        encoder=encoder,
        w_out=rng.uniform(-bound, bound, size=(dim, k)),
        b_out=np.zeros(k),
        label_space=tuple(label_space),
    )


@dataclass
class ClassifierCache:
    encoder_cache: SingletonCache
    encoded: np.ndarray  # (m, d)


def classify_batch(reps: np.ndarray, params: ClassifierParams):
    """Logits for a batch of utterance representations, (m, d) -> (m, K)."""
    reps = np.atleast_2d(np.asarray(reps, dtype=float))
    encoded, cache = singleton_forward(reps, params.encoder)
    logits = encoded @ params.w_out + params.b_out
    return logits, ClassifierCache(encoder_cache=cache, encoded=encoded)


def classify(representation: np.ndarray, params: ClassifierParams) -> np.ndarray:
    """Logits for one utterance representation, shape (K,)."""
    logits, _ = classify_batch(representation[None, :], params)
    return logits[0]


def classifier_backward(d_logits: np.ndarray, cache: ClassifierCache, params: ClassifierParams):
    """Returns (d_representations (m, d), grads keyed like tensors())."""
    grads = {}
    grads["head.w"] = cache.encoded.T @ d_logits
    grads["head.b"] = d_logits.sum(axis=0)
    d_encoded = d_logits @ params.w_out.T
    d_reps, enc_grads = singleton_backward(d_encoded, cache.encoder_cache, params.encoder)
    for name, g in enc_grads.items():
        grads[f"encoder.{name}"] = g
    return d_reps, grads


def predicted_label(logits: np.ndarray, label_space: tuple[int, ...]) -> int:
    """Argmax label id; ties break to the lowest label-space index."""
    return label_space[int(np.argmax(logits))]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def weighted_cross_entropy(
    logits: np.ndarray,
    target: int,
    weights: dict[int, float],
    label_space: tuple[int, ...],
) -> float:
    """-w(target) * log softmax(logits)[target]; labels absent from
    `weights` default to weight 1.

    Raises:
        BadTarget: target not in the label space.
    """
    if target not in label_space:
        raise BadTarget(f"target {target} not in label space {label_space}")
    idx = label_space.index(target)
    return float(-weights.get(target, 1.0) * log_softmax(np.asarray(logits, dtype=float))[idx])


def ce_loss_and_grad(
    logits: np.ndarray,
    targets: list[int],
    weights: dict[int, float],
    label_space: tuple[int, ...],
):
    """Mean weighted cross-entropy over a batch and its logit gradient.

    d(mean loss)/d(logits) = w(target) * (softmax - onehot) / m per row.
    """
    m = logits.shape[0]
    if m == 0:
        raise EmptyBatch("cross-entropy over an empty batch")
    idx = np.array([label_space.index(t) for t in targets])
    w = np.array([weights.get(t, 1.0) for t in targets])
    logp = log_softmax(logits)
    loss = float(-(w * logp[np.arange(m), idx]).mean())
    d_logits = np.exp(logp)
    d_logits[np.arange(m), idx] -= 1.0
    d_logits *= w[:, None] / m
    return loss, d_logits


def batch_class_weights(batch_labels: list[int]) -> dict[int, float]:
    """Per-batch imbalance weights: batch_size / (K_present * count(l)).

    Balanced batches get weight 1 for every present label; labels absent
    from the batch are simply absent from the map (callers default them
    to 1, where they multiply nothing).

    Raises:
        EmptyBatch: no labels given.
    """
    if not batch_labels:
        raise EmptyBatch("batch_class_weights on an empty batch")
    counts: dict[int, int] = {}
    for lab in batch_labels:
        counts[lab] = counts.get(lab, 0) + 1
    k_present = len(counts)
    total = len(batch_labels)
    return {lab: total / (k_present * c) for lab, c in counts.items()}


def pretrain_classifier(
    corpus: Corpus,
    store: SentenceEmbeddingStore,
    *,
    label_space: tuple[int, ...] = ALL_LABEL_IDS,
    steps: int = 200,
    batch_size: int = 32,
    learning_rate: float = 1e-3,
    seed: int = 0,
    heads: int = 4,
    ffn_dim: int | None = None,
    weighted_sampler: bool = True,
    weighted_ce: bool = True,
    smooth_counts: int | None = 1,
    grad_clip: float | None = 1.0,
    log_hook=None,
) -> ClassifierParams:
    """Train the emotion head standalone on frozen utterance embeddings.

    Batches are drawn by the inverse-frequency weighted sampler so rare
    labels appear, and the cross-entropy is re-weighted for the residual
    per-batch imbalance. With a 6-label space, neutral utterances are
    excluded from training entirely. The returned parameters stay
    unfrozen; the contextual trainer keeps updating them.
    """
    rng = np.random.default_rng(seed)
    items = [
        (store.get(dialog.id, utt.index), utt.label)
        for dialog, utt in corpus.iter_utterances()
        if utt.label in label_space
    ]
    if not items:
        raise EmptyBatch("no trainable utterances for the given label space")
    vectors = np.stack([vec for vec, _ in items])
    labels = [lab for _, lab in items]

    if weighted_sampler:
        class_w = label_weights(
            corpus, include_neutral=(0 in label_space), smooth_counts=smooth_counts
        )
        item_w = np.array([class_w.get(lab, 0.0) for lab in labels])
        if item_w.sum() == 0.0:
            item_w = np.ones(len(labels))
        probs = item_w / item_w.sum()
    else:
        probs = None

    params = init_classifier(store.dim, label_space=label_space, heads=heads, ffn_dim=ffn_dim, seed=seed)
    adam = Adam(params.tensors(), lr=learning_rate, clip_norm=grad_clip)
    for step in range(steps):
        chosen = rng.choice(len(labels), size=batch_size, p=probs)
        batch_x = vectors[chosen]
        batch_y = [labels[i] for i in chosen]
        ce_w = batch_class_weights(batch_y) if weighted_ce else {}
        logits, cache = classify_batch(batch_x, params)
        loss, d_logits = ce_loss_and_grad(logits, batch_y, ce_w, params.label_space)
        _, grads = classifier_backward(d_logits, cache, params)
        adam.step(grads)
        logger.debug("pretrain step=%d ce=%.6f", step, loss)
        if log_hook is not None:
            log_hook({"step": step, "ce": loss})
    return params


def classifier_to_tensors(params: ClassifierParams) -> tuple[dict[str, np.ndarray], dict]:
    """Flatten to (tensors, meta) for the checkpoint container."""
    meta = {
        "dim": params.encoder.dim,
        "heads": params.encoder.heads,
        "ffn_dim": params.encoder.ffn_dim,
        "label_space": list(params.label_space),
    }
    return params.tensors(), meta


def classifier_from_tensors(tensors: dict[str, np.ndarray], meta: dict) -> ClassifierParams:
    """Rebuild from a checkpoint's (tensors, meta)."""
    encoder = EncoderLayerParams(
        dim=int(meta["dim"]),
        heads=int(meta["heads"]),
        ffn_dim=int(meta["ffn_dim"]),
        **{name: tensors[f"encoder.{name}"].copy() for name in EncoderLayerParams.TENSOR_NAMES},
    )
    return ClassifierParams(
        encoder=encoder,
        w_out=tensors["head.w"].copy(),
        b_out=tensors["head.b"].copy(),
        label_space=tuple(int(x) for x in meta["label_space"]),
    )
