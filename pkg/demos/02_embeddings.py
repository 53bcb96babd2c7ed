#!/usr/bin/env python3
"""Utterance vector providers: frozen stores, word tables, hash embedder.

The training code never runs an embedding model; it reads vectors from
an exported store (or, for dependency-free experiments, from the
deterministic hash embedder used throughout the tests).
"""

import tempfile
from pathlib import Path

import numpy as np

from ercml import (
    WordEmbeddingTable,
    embed_words,
    hash_embed,
    hash_store_for_corpus,
    load_sentence_embeddings,
    load_split,
    mean_pool,
    save_sentence_embeddings,
    tokenize,
)
from ercml.corpus import Utterance

DATA = Path(__file__).parent.parent / "tests" / "data" / "mini"

# The hash embedder: deterministic, unit-norm, no model weights needed.
vec = hash_embed("I am absolutely delighted !", dim=16, seed=0)
again = hash_embed("I am absolutely delighted !", dim=16, seed=0)
print(f"hash_embed dim={vec.shape[0]}, norm={np.linalg.norm(vec):.6f}, "
      f"deterministic={np.array_equal(vec, again)}")

# A store covering a whole corpus, written to the JSON-lines exchange
# format and read back.
corpus = load_split(DATA, "train")
store = hash_store_for_corpus(corpus, dim=16, seed=0, provider_name="hash-demo")
with tempfile.TemporaryDirectory() as td:
    path = save_sentence_embeddings(store, Path(td) / "store.jsonl")
    header, first = path.read_text().splitlines()[:2]
    print(f"\nexport header: {header}")
    print(f"first record:  {first[:70]}...")
    reloaded = load_sentence_embeddings(path)
    print(f"reloaded {len(reloaded)} vectors, dim {reloaded.dim}, "
          f"provider {reloaded.provider_name!r}")

# Word vectors for the isolated baseline: tokenizer plus table lookup.
print(f"\ntokenize('Why did you scratch my car?!') -> "
      f"{tokenize('Why did you scratch my car?!')}")
rng = np.random.default_rng(1)
table = WordEmbeddingTable(
    vocabulary={w: rng.standard_normal(8) for w in ("why", "did", "you", "my", "car")},
    dim=8,
    oov_policy="hashed",  # unseen tokens get stable hash vectors
)
utt = Utterance(index=0, text="Why did you scratch my car ?", label=1)
vectors = embed_words(utt, table)
print(f"embed_words -> {vectors.shape[0]} vectors of dim {vectors.shape[1]}")
print(f"mean_pool   -> first coords {np.round(mean_pool(vectors)[:4], 3)}")
