#!/usr/bin/env python3
"""Zero-shot LLM comparison harness, fully offline.

Renders a dialog prompt asking for the last utterance's emotion, serves
canned generations through the replay client, parses the first
mentioned emotion out of each output, and scores one prediction per
dialog. Includes the modal-share detector that catches generators
collapsing onto a single label.
"""

from pathlib import Path

from ercml import (
    BUILTIN_TEMPLATES,
    LABEL_NAMES,
    ReplayClient,
    build_prompt,
    evaluate_llm,
    load_split,
    parse_label,
)

DATA = Path(__file__).parent.parent / "tests" / "data" / "mini"
corpus = load_split(DATA, "test")

template = BUILTIN_TEMPLATES["falcon-style"]
print("prompt for the first test dialog:")
print("-" * 60)
print(build_prompt(corpus.dialogs[0], template))
print("-" * 60)

# The parser takes the first emotion name mentioned, case-insensitive.
for raw in ("The emotion is sadness.", "Mostly happiness, with a hint of anger", "No idea."):
    print(f"parse_label({raw!r}) -> {parse_label(raw)}")

# A well-behaved mock: echo the gold label of each last utterance.
echo = ReplayClient(responses={
    d.id: f"I would call this {LABEL_NAMES[d.utterances[-1].label]}."
    for d in corpus.dialogs
})
result = evaluate_llm(echo, corpus, template, parallelism=1)
print(f"\ngold-echo client: macroF1* {result.report.macro_f1_star:.2f}, "
      f"microF1* {result.report.micro_f1_star:.2f}, "
      f"modal share {result.modal_share:.0%}")

# A degenerate generator that answers the same label every time.
stuck = ReplayClient(responses={}, default="Clearly happiness!")
collapsed = evaluate_llm(stuck, corpus, template, parallelism=1)
print(f"constant client:  modal label {collapsed.modal_label!r} at "
      f"{collapsed.modal_share:.0%}, collapse flagged: {collapsed.collapse_flagged}, "
      f"MCC {collapsed.report.mcc:.2f}")
print(f"generation log: {len(collapsed.records)} records "
      f"(key, prompt hash, raw output, parsed label, status)")
