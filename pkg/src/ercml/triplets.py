"""Triplet construction and the triplet loss over representation space.

Three mining strategies: weighted-random sampling (anchor class drawn
from inverse-frequency label weights), batch-all enumeration, and
batch-hard (farthest positive, nearest negative per anchor). The loss
is max(d(a,p) - d(a,n) + margin, 0) with euclidean or cosine distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import DimMismatch, InsufficientDiversity, ZeroVector

_EUCLID_TINY = 1e-12


@dataclass(frozen=True, order=True)
class UttRef:
    """Reference to one utterance: dialog id plus position."""

    dialog_id: str
    index: int

    @property
    def key(self) -> str:
        return f"{self.dialog_id}#{self.index}"


@dataclass(frozen=True)
class Triplet:
    anchor: UttRef
    positive: UttRef
    negative: UttRef


@dataclass(frozen=True)
class TripletLossConfig:
    margin: float = 1.0
    distance: str = "euclidean"  # or "cosine"

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.distance not in ("euclidean", "cosine"):
            raise ValueError(f"distance must be 'euclidean' or 'cosine', got {self.distance!r}")


def distance(x: np.ndarray, y: np.ndarray, kind: str = "euclidean") -> float:
    """Symmetric distance: L2 norm of x-y, or 1 - cosine similarity.

    Raises:
        DimMismatch: unequal dimensions.
        ZeroVector: cosine distance on a zero-norm input.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimMismatch(f"distance on shapes {x.shape} vs {y.shape}")
    if kind == "euclidean":
        return float(np.linalg.norm(x - y))
    if kind == "cosine":
        nx = np.linalg.norm(x)
        ny = np.linalg.norm(y)
        if nx == 0.0 or ny == 0.0:
            raise ZeroVector("cosine distance undefined for zero-norm vector")
        return float(1.0 - (x @ y) / (nx * ny))
    raise ValueError(f"unknown distance kind {kind!r}")


def _distance_grads(x: np.ndarray, y: np.ndarray, kind: str):
    """Gradients of distance(x, y) with respect to x and y."""
    if kind == "euclidean":
        diff = x - y
        norm = np.linalg.norm(diff)
        if norm < _EUCLID_TINY:  # subgradient at the coincident point
            return np.zeros_like(x), np.zeros_like(y)
        g = diff / norm
        return g, -g
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise ZeroVector("cosine distance undefined for zero-norm vector")
    dot = x @ y
    dx = dot * x / (nx**3 * ny) - y / (nx * ny)
    dy = dot * y / (ny**3 * nx) - x / (nx * ny)
    return dx, dy


def triplet_loss(
    ea: np.ndarray, ep: np.ndarray, en: np.ndarray, cfg: TripletLossConfig
) -> float:
    """max(d(a,p) - d(a,n) + margin, 0)."""
    return max(
        distance(ea, ep, cfg.distance) - distance(ea, en, cfg.distance) + cfg.margin,
        0.0,
    )


def triplet_loss_grads(
    ea: np.ndarray, ep: np.ndarray, en: np.ndarray, cfg: TripletLossConfig
):
    """Loss and its gradients w.r.t. the three representations.

    Inactive triplets (loss 0) contribute zero gradient.
    """
    ea = np.asarray(ea, dtype=float)
    ep = np.asarray(ep, dtype=float)
    en = np.asarray(en, dtype=float)
    loss = triplet_loss(ea, ep, en, cfg)
    if loss <= 0.0:
        return 0.0, np.zeros_like(ea), np.zeros_like(ep), np.zeros_like(en)
    dap_da, dap_dp = _distance_grads(ea, ep, cfg.distance)
    dan_da, dan_dn = _distance_grads(ea, en, cfg.distance)
    return loss, dap_da - dan_da, dap_dp, -dan_dn


def corpus_pool(corpus: Corpus, include_neutral: bool = True) -> list[tuple[UttRef, int]]:
    """All utterance refs of a corpus with their labels, corpus order."""
    pool = []
    for dialog, utt in corpus.iter_utterances():
        if not include_neutral and utt.label == 0:
            continue
        pool.append((UttRef(dialog.id, utt.index), utt.label))
    return pool


def _group_by_label(pool) -> dict[int, list[UttRef]]:
    groups: dict[int, list[UttRef]] = {}
    for ref, label in pool:
        groups.setdefault(label, []).append(ref)
    return groups


def sample_triplets(
    pool: list[tuple[UttRef, int]],
    count: int,
    weights: dict[int, float],
    rng: np.random.Generator,
) -> list[Triplet]:
    """Draw `count` valid triplets with a weighted-random anchor sampler.

    Each candidate anchor is drawn with probability proportional to
    `weights[its label]` (the weighted-random-sampler semantics: with
    inverse-frequency weights the anchor classes come out uniform in
    expectation). Anchors are restricted to labels that admit a positive
    (>= 2 members, positive weight). Positive is uniform over same-label
    refs excluding the anchor; negative is uniform over all other-label
    refs. Deterministic given the generator state.

    Raises:
        InsufficientDiversity: fewer than 2 labels in the pool, or no
            label has 2 members and positive weight.
    """
    groups = _group_by_label(pool)
    if len(groups) < 2:
        raise InsufficientDiversity(f"pool has {len(groups)} distinct label(s); need >= 2")
    eligible = sorted(
        lab for lab, refs in groups.items() if len(refs) >= 2 and weights.get(lab, 0.0) > 0.0
    )
    if not eligible:
        raise InsufficientDiversity("no label with >= 2 members and positive weight")

    candidates: list[UttRef] = []
    cand_pos: list[int] = []       # anchor's position within its label group
    cand_group: list[int] = []     # index into `eligible`
    for gi, lab in enumerate(eligible):
        for pos, ref in enumerate(groups[lab]):
            candidates.append(ref)
            cand_pos.append(pos)
            cand_group.append(gi)
    item_probs = np.array([weights[eligible[g]] for g in cand_group], dtype=float)
    item_probs /= item_probs.sum()
    same_sizes = np.array([len(groups[lab]) for lab in eligible])
    others = [
        [r for olab, refs in sorted(groups.items()) if olab != lab for r in refs]
        for lab in eligible
    ]
    other_sizes = np.array([len(o) for o in others])

    draws = rng.choice(len(candidates), size=count, p=item_probs)
    group_of_draw = np.array([cand_group[i] for i in draws])
    anchor_pos = np.array([cand_pos[i] for i in draws])
    # Uniform over same-label refs excluding the anchor itself.
    p_idx = rng.integers(0, same_sizes[group_of_draw] - 1, size=count)
    p_idx[p_idx >= anchor_pos] += 1
    n_idx = rng.integers(0, other_sizes[group_of_draw], size=count)
    return [
        Triplet(
            anchor=candidates[draws[i]],
            positive=groups[eligible[group_of_draw[i]]][p_idx[i]],
            negative=others[group_of_draw[i]][n_idx[i]],
        )
        for i in range(count)
    ]


def batch_all_triplets(batch: list[tuple[UttRef, int]]) -> list[Triplet]:
    """Every valid (a, p, n) combination within the batch.

    Output is lexicographic by (anchor, positive, negative) ref order;
    batches without two same-label refs and a different label yield an
    empty list.
    """
    ordered = sorted(batch, key=lambda item: item[0])
    triplets = []
    for a_ref, a_lab in ordered:
        for p_ref, p_lab in ordered:
            if p_lab != a_lab or p_ref == a_ref:
                continue
            for n_ref, n_lab in ordered:
                if n_lab == a_lab:
                    continue
                triplets.append(Triplet(a_ref, p_ref, n_ref))
    return triplets


def batch_hard_triplets(
    batch: list[tuple[UttRef, int, np.ndarray]], cfg: TripletLossConfig
) -> list[Triplet]:
    """One triplet per eligible anchor: farthest positive, nearest negative.

    Distance ties break toward the lowest ref order. Anchors whose label
    has no second member are skipped.

    Raises:
        InsufficientDiversity: fewer than 2 distinct labels in the batch.
    """
    labels = {lab for _, lab, _ in batch}
    if len(labels) < 2:
        raise InsufficientDiversity(f"batch has {len(labels)} distinct label(s); need >= 2")
    ordered = sorted(batch, key=lambda item: item[0])
    triplets = []
    for a_ref, a_lab, a_vec in ordered:
        hardest_p: UttRef | None = None
        hardest_p_dist = -np.inf
        nearest_n: UttRef | None = None
        nearest_n_dist = np.inf
        for o_ref, o_lab, o_vec in ordered:
            if o_ref == a_ref:
                continue
            d = distance(a_vec, o_vec, cfg.distance)
            if o_lab == a_lab:
                if d > hardest_p_dist:
                    hardest_p, hardest_p_dist = o_ref, d
            else:
                if d < nearest_n_dist:
                    nearest_n, nearest_n_dist = o_ref, d
        if hardest_p is not None and nearest_n is not None:
            triplets.append(Triplet(a_ref, hardest_p, nearest_n))
    return triplets
