#!/usr/bin/env python3
"""The full contextual training procedure, end to end, on the fixture.

Pretrains the emotion head on frozen embeddings, then runs the
two-loss cycle per batch of whole dialogs: a weighted cross-entropy
update through classifier and encoder, followed by a triplet update
through the encoder. Finishes by scoring the train split with the
neutral-excluding metrics.
"""

from pathlib import Path

from ercml import (
    LABEL_NAMES,
    TrainConfig,
    evaluate_model,
    hash_store_for_corpus,
    load_split,
    predict,
    train_contextual,
)
from ercml.metrics import format_report

DATA = Path(__file__).parent.parent / "tests" / "data" / "mini"

corpus = load_split(DATA, "train")
store = hash_store_for_corpus(corpus, dim=16, seed=0)
print(f"{len(corpus.dialogs)} dialogs, {corpus.n_utterances} utterances, "
      f"store dim {store.dim} (frozen)")

config = TrainConfig(epochs=40, max_steps=120, seed=0)
records = []
model = train_contextual(corpus, store, config, log_hook=records.append)

print("\ntraining trace (every 20th cycle):")
print(f"{'step':>5} {'CE':>9} {'triplet':>9} {'active':>7}")
for rec in records[::20] + [records[-1]]:
    print(f"{rec['step']:5d} {rec['ce']:9.4f} {rec['triplet']:9.4f} {rec['active']:7d}")

dialog = corpus.dialogs[4]
print(f"\npredictions on dialog {dialog.id!r}:")
for utt, pred in zip(dialog.utterances, predict(model, dialog, store)):
    marker = " " if pred == utt.label else "!"
    print(f" {marker} gold={LABEL_NAMES[utt.label]:9s} pred={LABEL_NAMES[pred]:9s} {utt.text[:48]}")

print("\ntrain-split report (neutral excluded from the F1s):")
print(format_report(evaluate_model(model, corpus, store)), end="")
