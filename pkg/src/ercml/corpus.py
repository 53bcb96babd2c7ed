"""DailyDialog-format corpus parsing, validation, and label statistics.

The on-disk format is the official distribution layout: one dialog per
line, utterances delimited by the literal token ``__eou__``, and a
parallel label file carrying one space-separated integer sequence per
line. Label ids follow the official dataset convention and are the
single source of truth for every other module:

    0=neutral 1=anger 2=disgust 3=fear 4=happiness 5=sadness 6=surprise
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BadLabel,
    CountMismatch,
    EmptyCorpus,
    LineCountMismatch,
    MissingFile,
    ZeroCount,
)

logger = logging.getLogger(__name__)

EOU = "__eou__"

LABEL_NAMES: tuple[str, ...] = (
    "neutral",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
)
NAME_TO_ID: dict[str, int] = {name: i for i, name in enumerate(LABEL_NAMES)}
NEUTRAL_ID = 0
EMOTION_IDS: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
EMOTION_NAMES: tuple[str, ...] = LABEL_NAMES[1:]
ALL_LABEL_IDS: tuple[int, ...] = tuple(range(len(LABEL_NAMES)))

SPLITS = ("train", "validation", "test")

# Dataset statistic, not a format constraint: longer dialogs only warn.
MAX_EXPECTED_DIALOG_LEN = 35


def label_name(label_id: int) -> str:
    """Map a label id to its canonical name."""
    if not 0 <= label_id < len(LABEL_NAMES):
        raise BadLabel(f"label id {label_id} outside [0, {len(LABEL_NAMES) - 1}]")
    return LABEL_NAMES[label_id]


def label_id(name: str) -> int:
    """Map a canonical label name to its id."""
    try:
        return NAME_TO_ID[name]
    except KeyError:
        raise BadLabel(f"unknown label name {name!r}") from None


def utt_key(dialog_id: str, index: int) -> str:
    """Canonical utterance key, shared with the embedding store format."""
    return f"{dialog_id}#{index}"


@dataclass(frozen=True)
class Utterance:
    """One message of a dialog: position, trimmed text, label id."""

    index: int
    text: str
    label: int

    def __post_init__(self):
        if not self.text.strip():
            raise CountMismatch(f"utterance {self.index}: empty text segment")
        if not 0 <= self.label < len(LABEL_NAMES):
            raise BadLabel(f"utterance {self.index}: label {self.label} outside [0, 6]")


@dataclass(frozen=True)
class Dialog:
    """Ordered conversation with one emotion label per utterance."""

    id: str
    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(u.label for u in self.utterances)


@dataclass(frozen=True)
class Corpus:
    """A dataset split: dialogs plus the label histogram over all utterances."""

    split: str
    dialogs: tuple[Dialog, ...]
    label_histogram: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        hist = {lid: 0 for lid in ALL_LABEL_IDS}
        for dialog in self.dialogs:
            for utt in dialog.utterances:
                hist[utt.label] += 1
        object.__setattr__(self, "label_histogram", hist)

    @property
    def n_utterances(self) -> int:
        return sum(self.label_histogram.values())

    def iter_utterances(self):
        """Yield (dialog, utterance) pairs in corpus order."""
        for dialog in self.dialogs:
            for utt in dialog.utterances:
                yield dialog, utt


@dataclass(frozen=True)
class CorpusStats:
    split: str
    n_dialogs: int
    n_utterances: int
    max_utt_per_dialog: int
    mean_utt_per_dialog: float
    mean_utt_rounded: int
    label_histogram: dict[int, int]


def parse_dialog_line(text_line: str, label_line: str, dialog_id: str) -> Dialog:
    """Parse one parallel (text, labels) line pair into a Dialog.

    The trailing empty segment after the final ``__eou__`` is ignored.

    Raises:
        CountMismatch: segment count differs from label count, or a
            segment is empty after trimming.
        BadLabel: a label token is not an integer in [0, 6].
    """
    segments = text_line.split(EOU)
    if segments and not segments[-1].strip():
        segments = segments[:-1]
    labels: list[int] = []
    for token in label_line.split():
        try:
            value = int(token)
        except ValueError:
            raise BadLabel(f"dialog {dialog_id}: non-integer label token {token!r}") from None
        if not 0 <= value < len(LABEL_NAMES):
            raise BadLabel(f"dialog {dialog_id}: label {value} outside [0, 6]")
        labels.append(value)
    if len(segments) != len(labels):
        raise CountMismatch(
            f"dialog {dialog_id}: {len(segments)} utterances vs {len(labels)} labels"
        )
    if not segments:
        raise CountMismatch(f"dialog {dialog_id}: no utterances")
    utterances = tuple(
        Utterance(index=i, text=seg.strip(), label=lab)
        for i, (seg, lab) in enumerate(zip(segments, labels))
    )
    if len(utterances) > MAX_EXPECTED_DIALOG_LEN:
        logger.warning(
            "dialog %s has %d utterances (dataset max is %d)",
            dialog_id, len(utterances), MAX_EXPECTED_DIALOG_LEN,
        )
    return Dialog(id=dialog_id, utterances=utterances)


def _resolve_split_files(directory: Path, split: str) -> tuple[Path, Path]:
    """Locate the dialog-text and emotion-label files for a split.

    Accepts the official zip layout (per-split subdirectories) as well as
    a flattened directory.
    """
    candidates = [
        (directory / split / f"dialogues_{split}.txt",
         directory / split / f"dialogues_emotion_{split}.txt"),
        (directory / f"dialogues_{split}.txt",
         directory / f"dialogues_emotion_{split}.txt"),
        (directory / split / "dialogues_text.txt",
         directory / split / "dialogues_emotion.txt"),
    ]
    for text_path, label_path in candidates:
        if text_path.exists() and label_path.exists():
            return text_path, label_path
    tried = ", ".join(str(c[0]) for c in candidates)
    raise MissingFile(f"no dialog/label file pair for split {split!r} under {directory} (tried {tried})")


def load_split(directory: str | Path, split: str) -> Corpus:
    """Load one DailyDialog split from `directory`.

    Raises:
        MissingFile: split files absent.
        LineCountMismatch: text and label files differ in line count.
    """
    if split not in SPLITS:
        raise MissingFile(f"unknown split {split!r}; expected one of {SPLITS}")
    directory = Path(directory)
    text_path, label_path = _resolve_split_files(directory, split)
    text_lines = text_path.read_text(encoding="utf-8").splitlines()
    label_lines = label_path.read_text(encoding="utf-8").splitlines()
    # Trailing blank lines are a packaging artifact, not dialogs.
    while text_lines and not text_lines[-1].strip():
        text_lines.pop()
    while label_lines and not label_lines[-1].strip():
        label_lines.pop()
    if len(text_lines) != len(label_lines):
        raise LineCountMismatch(
            f"{text_path.name}: {len(text_lines)} lines vs {label_path.name}: {len(label_lines)} lines"
        )
    dialogs = tuple(
        parse_dialog_line(text, labels, dialog_id=f"{split}:{lineno}")
        for lineno, (text, labels) in enumerate(zip(text_lines, label_lines))
    )
    return Corpus(split=split, dialogs=dialogs)


def write_split(corpus: Corpus, directory: str | Path) -> tuple[Path, Path]:
    """Serialize a corpus back to the flattened file-pair format.

    Round-trips with :func:`load_split`: re-parsing the written files
    yields an identical corpus.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / f"dialogues_{corpus.split}.txt"
    label_path = directory / f"dialogues_emotion_{corpus.split}.txt"
    with text_path.open("w", encoding="utf-8") as tf, label_path.open("w", encoding="utf-8") as lf:
        for dialog in corpus.dialogs:
            tf.write(f" {EOU} ".join(u.text for u in dialog.utterances) + f" {EOU}\n")
            lf.write(" ".join(str(u.label) for u in dialog.utterances) + "\n")
    return text_path, label_path


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Exact per-split statistics; mean reported unrounded and rounded.

    Raises:
        EmptyCorpus: corpus has no dialogs.
    """
    if not corpus.dialogs:
        raise EmptyCorpus(f"split {corpus.split!r} has no dialogs")
    lengths = [len(d) for d in corpus.dialogs]
    mean = sum(lengths) / len(lengths)
    return CorpusStats(
        split=corpus.split,
        n_dialogs=len(corpus.dialogs),
        n_utterances=corpus.n_utterances,
        max_utt_per_dialog=max(lengths),
        mean_utt_per_dialog=mean,
        mean_utt_rounded=round(mean),
        label_histogram=dict(corpus.label_histogram),
    )


def format_stats(stats: CorpusStats) -> str:
    """Render stats as the key/value report emitted by the CLI."""
    lines = [
        f"split = {stats.split}",
        f"n_dialogs = {stats.n_dialogs}",
        f"n_utterances = {stats.n_utterances}",
        f"max_utt_per_dialog = {stats.max_utt_per_dialog}",
        f"mean_utt_per_dialog = {stats.mean_utt_per_dialog:.2f}",
        f"mean_utt_rounded = {stats.mean_utt_rounded}",
    ]
    for lid in ALL_LABEL_IDS:
        lines.append(f"count_{LABEL_NAMES[lid]} = {stats.label_histogram.get(lid, 0)}")
    return "\n".join(lines) + "\n"


def label_weights(
    corpus: Corpus,
    include_neutral: bool = False,
    smooth_counts: int | None = None,
    labels: tuple[int, ...] | None = None,
) -> dict[int, float]:
    """Inverse-frequency label weights, normalized to sum 1.

    Weight of label l is proportional to 1/count(l) over the included
    labels: the six emotions, plus neutral when `include_neutral`, or an
    explicit `labels` subset (how a caller drops zero-count labels).

    Args:
        smooth_counts: when set, adds this pseudo-count to every included
            label so tiny fixtures with absent labels stay well defined.

    Raises:
        ZeroCount: an included label never occurs and no smoothing given.
    """
    if labels is not None:
        included = labels
    else:
        included = ALL_LABEL_IDS if include_neutral else EMOTION_IDS
    counts: dict[int, int] = {}
    for lid in included:
        c = corpus.label_histogram.get(lid, 0)
        if smooth_counts is not None:
            c += smooth_counts
        if c <= 0:
            raise ZeroCount(
                f"label {LABEL_NAMES[lid]!r} has zero count; drop it or pass smooth_counts"
            )
        counts[lid] = c
    inverse = {lid: 1.0 / c for lid, c in counts.items()}
    total = sum(inverse.values())
    return {lid: w / total for lid, w in inverse.items()}
