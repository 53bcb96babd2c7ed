"""Conversation-aware utterance encoding.

A dialog's frozen sentence embeddings are interleaved with a learned
separator vector (leading and trailing separator, 2U+1 rows for U
utterances), sinusoidal positional encodings are added, one trainable
attention-encoder layer runs over the whole sequence, and the result is
split back at the separator rows into per-utterance contextual vectors.

Forward and backward passes are written out explicitly in numpy; the
test suite verifies every parameter gradient against central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import erf

from .corpus import Dialog
from .embeddings import SentenceEmbeddingStore
from .errors import BadHeadCount, InconsistentPositions, ShapeMismatch

LN_EPS = 1e-5


# --- parameters -------------------------------------------------------------

@dataclass
class EncoderLayerParams:
    """One encoder layer: multi-head self-attention + feed-forward block.

    `sep` is the learned separator vector interleaved between utterance
    embeddings when a dialog sequence is built.
    """

    dim: int
    heads: int
    ffn_dim: int
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    w_ff1: np.ndarray
    b_ff1: np.ndarray
    w_ff2: np.ndarray
    b_ff2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    sep: np.ndarray

    TENSOR_NAMES = (
        "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
        "w_ff1", "b_ff1", "w_ff2", "b_ff2",
        "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias", "sep",
    )

    def tensors(self) -> dict[str, np.ndarray]:
        """Live name -> array view; optimizers update these in place."""
        return {name: getattr(self, name) for name in self.TENSOR_NAMES}

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(getattr(self, name)) for name in self.TENSOR_NAMES}

    def copy(self) -> "EncoderLayerParams":
        kwargs = {}
        for f in fields(self):
            value = getattr(self, f.name)
            kwargs[f.name] = value.copy() if isinstance(value, np.ndarray) else value
        return EncoderLayerParams(**kwargs)

    def head_dim(self) -> int:
        return self.dim // self.heads


def init_encoder(dim: int, heads: int = 4, ffn_dim: int | None = None, seed: int = 0) -> EncoderLayerParams:
    """Deterministic scaled-uniform initialization; layer norms at identity.

    Raises:
        BadHeadCount: `dim` not divisible by `heads`.
    """
    if heads < 1 or dim % heads != 0:
        raise BadHeadCount(f"dim {dim} not divisible by heads {heads}")
    if ffn_dim is None:
        ffn_dim = 4 * dim
    rng = np.random.default_rng(seed)

    def proj(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return EncoderLayerParams(
        dim=dim,
        heads=heads,
        ffn_dim=ffn_dim,
        w_q=proj(dim, dim), b_q=np.zeros(dim),
        w_k=proj(dim, dim), b_k=np.zeros(dim),
        w_v=proj(dim, dim), b_v=np.zeros(dim),
        w_o=proj(dim, dim), b_o=np.zeros(dim),
        w_ff1=proj(dim, ffn_dim), b_ff1=np.zeros(ffn_dim),
        w_ff2=proj(ffn_dim, dim), b_ff2=np.zeros(dim),
        ln1_gain=np.ones(dim), ln1_bias=np.zeros(dim),
        ln2_gain=np.ones(dim), ln2_bias=np.zeros(dim),
        sep=rng.uniform(-1.0 / np.sqrt(dim), 1.0 / np.sqrt(dim), size=dim),
    )


# --- positional encodings ---------------------------------------------------

def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    """Fixed sine/cosine positional encodings, shape (n, dim)."""
    positions = np.arange(n)[:, None]
    half = (dim + 1) // 2
    freqs = np.exp(-np.log(10000.0) * (2 * np.arange(half)) / dim)
    angles = positions * freqs[None, :]
    pe = np.zeros((n, 2 * half))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe[:, :dim]


# --- dialog sequences --------------------------------------------------------

@dataclass(frozen=True)
class DialogSequence:
    """Interleaved (separator, utterance, ..., separator) token matrix."""

    tokens: np.ndarray          # (2U+1, d), before positional encodings
    positions: np.ndarray       # (2U+1, d)
    sep_positions: tuple[int, ...]

    @property
    def n_utterances(self) -> int:
        return (self.tokens.shape[0] - 1) // 2

    def encoder_input(self) -> np.ndarray:
        return self.tokens + self.positions


def build_dialog_sequence(
    dialog: Dialog, store: SentenceEmbeddingStore, params: EncoderLayerParams
) -> DialogSequence:
    """Interleave the learned separator with the dialog's frozen embeddings.

    Raises:
        MissingEmbedding: store lacks a vector for some utterance.
        ShapeMismatch: store dim differs from encoder dim.
    """
    if store.dim != params.dim:
        raise ShapeMismatch(f"store dim {store.dim} != encoder dim {params.dim}")
    n_rows = 2 * len(dialog) + 1
    tokens = np.empty((n_rows, params.dim))
    tokens[0::2] = params.sep
    for utt in dialog.utterances:
        tokens[2 * utt.index + 1] = store.get(dialog.id, utt.index)
    return DialogSequence(
        tokens=tokens,
        positions=sinusoidal_positions(n_rows, params.dim),
        sep_positions=tuple(range(0, n_rows, 2)),
    )


def split_contextual(encoded: np.ndarray, sep_positions: tuple[int, ...]) -> np.ndarray:
    """Drop separator rows, keeping the U utterance rows in dialog order.

    Raises:
        InconsistentPositions: positions do not describe the strict
            sep/utterance alternation of `build_dialog_sequence`.
    """
    n_rows = encoded.shape[0]
    expected = tuple(range(0, n_rows, 2))
    if n_rows % 2 == 0 or tuple(sorted(sep_positions)) != expected:
        raise InconsistentPositions(
            f"sep positions {sorted(sep_positions)} invalid for {n_rows} rows"
        )
    return encoded[1::2]


# --- layer norm / gelu primitives --------------------------------------------

def _layer_norm_forward(x, gain, bias):
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * inv
    return gain * xhat + bias, xhat, inv


def _layer_norm_backward(dy, xhat, inv, gain):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    return dx, dgain, dbias


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _split_heads(m: np.ndarray, heads: int) -> np.ndarray:
    n, d = m.shape
    return m.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(m: np.ndarray) -> np.ndarray:
    h, n, hd = m.shape
    return m.transpose(1, 0, 2).reshape(n, h * hd)


# --- encoder layer forward / backward ----------------------------------------

@dataclass
class EncoderCache:
    x: np.ndarray
    qh: np.ndarray
    kh: np.ndarray
    vh: np.ndarray
    attn: np.ndarray
    hcat: np.ndarray
    xhat1: np.ndarray
    inv1: np.ndarray
    n1: np.ndarray
    pre: np.ndarray
    act: np.ndarray
    xhat2: np.ndarray
    inv2: np.ndarray


def encoder_forward(x: np.ndarray, params: EncoderLayerParams):
    """Full bidirectional self-attention block over one sequence.

    x: (n, d) -> (output (n, d), cache for the backward pass).
    Post-norm layout: attention, residual, layer norm, feed-forward,
    residual, layer norm.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ShapeMismatch(f"input shape {x.shape} incompatible with dim {params.dim}")
    p = params
    q = x @ p.w_q + p.b_q
    k = x @ p.w_k + p.b_k
    v = x @ p.w_v + p.b_v
    qh, kh, vh = (_split_heads(m, p.heads) for m in (q, k, v))
    scale = 1.0 / np.sqrt(p.head_dim())
    scores = (qh @ kh.transpose(0, 2, 1)) * scale
    scores -= scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)
    hcat = _merge_heads(attn @ vh)
    attn_out = hcat @ p.w_o + p.b_o

    r1 = x + attn_out
    n1, xhat1, inv1 = _layer_norm_forward(r1, p.ln1_gain, p.ln1_bias)
    pre = n1 @ p.w_ff1 + p.b_ff1
    act = _gelu(pre)
    ffn = act @ p.w_ff2 + p.b_ff2
    r2 = n1 + ffn
    out, xhat2, inv2 = _layer_norm_forward(r2, p.ln2_gain, p.ln2_bias)
    cache = EncoderCache(
        x=x, qh=qh, kh=kh, vh=vh, attn=attn, hcat=hcat,
        xhat1=xhat1, inv1=inv1, n1=n1, pre=pre, act=act,
        xhat2=xhat2, inv2=inv2,
    )
    return out, cache


def encoder_backward(d_out: np.ndarray, cache: EncoderCache, params: EncoderLayerParams):
    """Gradients of a scalar loss through :func:`encoder_forward`.

    Returns (d_input (n, d), grads dict keyed like `params.tensors()`).
    The `sep` entry is zero here; separator gradients are collected from
    d_input rows by :func:`sep_gradient`.
    """
    p = params
    grads = {name: None for name in p.TENSOR_NAMES}

    dr2, grads["ln2_gain"], grads["ln2_bias"] = _layer_norm_backward(
        d_out, cache.xhat2, cache.inv2, p.ln2_gain
    )
    dn1 = dr2.copy()
    dffn = dr2
    dact = dffn @ p.w_ff2.T
    grads["w_ff2"] = cache.act.T @ dffn
    grads["b_ff2"] = dffn.sum(axis=0)
    dpre = dact * _gelu_grad(cache.pre)
    grads["w_ff1"] = cache.n1.T @ dpre
    grads["b_ff1"] = dpre.sum(axis=0)
    dn1 += dpre @ p.w_ff1.T

    dr1, grads["ln1_gain"], grads["ln1_bias"] = _layer_norm_backward(
        dn1, cache.xhat1, cache.inv1, p.ln1_gain
    )
    dx = dr1.copy()
    dattn_out = dr1
    grads["w_o"] = cache.hcat.T @ dattn_out
    grads["b_o"] = dattn_out.sum(axis=0)
    dhcat = dattn_out @ p.w_o.T

    dheads = _split_heads(dhcat, p.heads)
    dattn = dheads @ cache.vh.transpose(0, 2, 1)
    dvh = cache.attn.transpose(0, 2, 1) @ dheads
    dscores = cache.attn * (dattn - (dattn * cache.attn).sum(axis=2, keepdims=True))
    scale = 1.0 / np.sqrt(p.head_dim())
    dqh = (dscores @ cache.kh) * scale
    dkh = (dscores.transpose(0, 2, 1) @ cache.qh) * scale

    for name_w, name_b, dm, w in (
        ("w_q", "b_q", _merge_heads(dqh), p.w_q),
        ("w_k", "b_k", _merge_heads(dkh), p.w_k),
        ("w_v", "b_v", _merge_heads(dvh), p.w_v),
    ):
        grads[name_w] = cache.x.T @ dm
        grads[name_b] = dm.sum(axis=0)
        dx += dm @ w.T

    grads["sep"] = np.zeros_like(p.sep)
    return dx, grads


def encoder_layer_forward(seq: DialogSequence, params: EncoderLayerParams) -> np.ndarray:
    """Encode a built dialog sequence; output shape equals input shape."""
    out, _ = encoder_forward(seq.encoder_input(), params)
    return out


def sep_gradient(d_input: np.ndarray, sep_positions: tuple[int, ...]) -> np.ndarray:
    """Accumulate input-row gradients at separator positions into d(sep)."""
    return d_input[list(sep_positions)].sum(axis=0)


# --- encoder stacks -----------------------------------------------------------
#
# One layer is the default and the published configuration; deeper
# stacks are supported as a plain sequence of layer parameters. The
# separator vector of the FIRST layer is the one interleaved into
# dialog sequences; `sep` tensors of deeper layers are unused.

EncoderStack = list[EncoderLayerParams]


def as_stack(encoder: "EncoderLayerParams | list[EncoderLayerParams]") -> EncoderStack:
    return encoder if isinstance(encoder, list) else [encoder]


def init_encoder_stack(
    dim: int, heads: int = 4, ffn_dim: int | None = None, layers: int = 1, seed: int = 0
) -> EncoderStack:
    """Independent deterministic initialization per layer."""
    if layers < 1:
        raise ShapeMismatch(f"need at least one encoder layer, got {layers}")
    return [
        init_encoder(dim, heads=heads, ffn_dim=ffn_dim, seed=seed + 101 * i)
        for i in range(layers)
    ]


def stack_tensors(stack: EncoderStack) -> dict[str, np.ndarray]:
    """Flattened live tensors, keyed "<layer>.<name>"."""
    return {
        f"{i}.{name}": arr
        for i, layer in enumerate(stack)
        for name, arr in layer.tensors().items()
    }


def stack_zero_grads(stack: EncoderStack) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in stack_tensors(stack).items()}


def stack_forward(x: np.ndarray, stack: EncoderStack):
    """Layers applied in sequence; returns (out, per-layer caches)."""
    caches = []
    out = x
    for layer in stack:
        out, cache = encoder_forward(out, layer)
        caches.append(cache)
    return out, caches


def stack_backward(d_out: np.ndarray, caches: list[EncoderCache], stack: EncoderStack):
    """Returns (d_input, flattened grads keyed like stack_tensors)."""
    grads: dict[str, np.ndarray] = {}
    d = d_out
    for i in range(len(stack) - 1, -1, -1):
        d, layer_grads = encoder_backward(d, caches[i], stack[i])
        for name, g in layer_grads.items():
            grads[f"{i}.{name}"] = g
    return d, grads


# --- whole-dialog convenience used by the trainer -----------------------------

@dataclass
class DialogEncoding:
    """Per-dialog forward state: contextual vectors plus backward caches."""

    sequence: DialogSequence
    caches: list[EncoderCache]
    contextual: np.ndarray  # (U, d)


def encode_dialog(
    dialog: Dialog,
    store: SentenceEmbeddingStore,
    encoder: "EncoderLayerParams | list[EncoderLayerParams]",
) -> DialogEncoding:
    """build sequence -> encoder layer(s) -> split, with caches retained."""
    stack = as_stack(encoder)
    seq = build_dialog_sequence(dialog, store, stack[0])
    out, caches = stack_forward(seq.encoder_input(), stack)
    return DialogEncoding(
        sequence=seq, caches=caches, contextual=split_contextual(out, seq.sep_positions)
    )


def encode_dialog_backward(
    d_contextual: np.ndarray,
    encoding: DialogEncoding,
    encoder: "EncoderLayerParams | list[EncoderLayerParams]",
) -> dict[str, np.ndarray]:
    """Backward from per-utterance gradients to encoder parameter gradients.

    Frozen utterance embeddings receive no gradient; separator rows
    accumulate into the first layer's `sep` entry. Given a single
    EncoderLayerParams the grads are keyed by plain tensor name; given a
    stack they are keyed "<layer>.<name>" like `stack_tensors`.
    """
    stack = as_stack(encoder)
    n_rows = encoding.sequence.tokens.shape[0]
    d_encoded = np.zeros((n_rows, stack[0].dim))
    d_encoded[1::2] = d_contextual
    d_input, grads = stack_backward(d_encoded, encoding.caches, stack)
    grads["0.sep"] = sep_gradient(d_input, encoding.sequence.sep_positions)
    if not isinstance(encoder, list):
        return {name[len("0."):]: g for name, g in grads.items()}
    return grads


# --- vectorized length-1 sequences (emotion-classifier path) -----------------

@dataclass
class SingletonCache:
    x: np.ndarray
    v: np.ndarray
    xhat1: np.ndarray
    inv1: np.ndarray
    n1: np.ndarray
    pre: np.ndarray
    act: np.ndarray
    xhat2: np.ndarray
    inv2: np.ndarray


def singleton_forward(rows: np.ndarray, params: EncoderLayerParams):
    """Encoder layer applied to each row as an independent length-1 sequence.

    For a one-token sequence the attention weights collapse to 1, so the
    whole layer becomes row-wise and a batch of m rows is one matrix
    pass. Equivalent to calling :func:`encoder_forward` on each (1, d)
    row; a test pins that equivalence.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != params.dim:
        raise ShapeMismatch(f"input shape {rows.shape} incompatible with dim {params.dim}")
    p = params
    v = rows @ p.w_v + p.b_v
    attn_out = v @ p.w_o + p.b_o
    r1 = rows + attn_out
    n1, xhat1, inv1 = _layer_norm_forward(r1, p.ln1_gain, p.ln1_bias)
    pre = n1 @ p.w_ff1 + p.b_ff1
    act = _gelu(pre)
    ffn = act @ p.w_ff2 + p.b_ff2
    r2 = n1 + ffn
    out, xhat2, inv2 = _layer_norm_forward(r2, p.ln2_gain, p.ln2_bias)
    cache = SingletonCache(
        x=rows, v=v, xhat1=xhat1, inv1=inv1, n1=n1, pre=pre, act=act,
        xhat2=xhat2, inv2=inv2,
    )
    return out, cache


def singleton_backward(d_out: np.ndarray, cache: SingletonCache, params: EncoderLayerParams):
    """Backward companion of :func:`singleton_forward`.

    Query/key projections never influence a length-1 sequence, so their
    gradients are exactly zero.
    """
    p = params
    grads = p.zero_grads()

    dr2, grads["ln2_gain"], grads["ln2_bias"] = _layer_norm_backward(
        d_out, cache.xhat2, cache.inv2, p.ln2_gain
    )
    dn1 = dr2.copy()
    dffn = dr2
    dact = dffn @ p.w_ff2.T
    grads["w_ff2"] = cache.act.T @ dffn
    grads["b_ff2"] = dffn.sum(axis=0)
    dpre = dact * _gelu_grad(cache.pre)
    grads["w_ff1"] = cache.n1.T @ dpre
    grads["b_ff1"] = dpre.sum(axis=0)
    dn1 += dpre @ p.w_ff1.T

    dr1, grads["ln1_gain"], grads["ln1_bias"] = _layer_norm_backward(
        dn1, cache.xhat1, cache.inv1, p.ln1_gain
    )
    dx = dr1.copy()
    dattn_out = dr1
    grads["w_o"] = cache.v.T @ dattn_out
    grads["b_o"] = dattn_out.sum(axis=0)
    dv = dattn_out @ p.w_o.T
    grads["w_v"] = cache.x.T @ dv
    grads["b_v"] = dv.sum(axis=0)
    dx += dv @ p.w_v.T
    return dx, grads
