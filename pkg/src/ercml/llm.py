"""Zero-shot generation baseline over dialog prompts.

Builds a prompt asking for the last utterance's emotion, sends it to a
pluggable text-generation endpoint (HTTP JSON or an offline replay
fixture), parses the first mentioned emotion out of the raw output, and
scores predictions with the shared metrics. A modal-share detector
flags degenerate generators that collapse onto one label.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .corpus import LABEL_NAMES, Corpus, Dialog
from .errors import BadTemplate, EmptyDialog, EndpointFailure
from .metrics import MetricsReport, confusion, report_from_confusion

logger = logging.getLogger(__name__)

UNPARSABLE = "__unparsable__"

PLACEHOLDERS = ("{dialog}", "{labels}", "{last_utterance}")

# Shipped defaults. These are reconstructions of the chat-style prompt
# skeletons used with instruction-tuned models, not replicas of any
# particular prompt; supply a template file to control the exact text.
LLAMA_STYLE = (
    "[INST] <<SYS>>\n"
    "You are an expert annotator of emotions in conversations.\n"
    "<</SYS>>\n"
    "Here is a conversation between two speakers:\n"
    "{dialog}\n"
    "The possible emotion labels are: {labels}.\n"
    "Which emotion label best describes the last utterance: \"{last_utterance}\"?\n"
    "Answer with exactly one label. [/INST]"
)
FALCON_STYLE = (
    "Conversation:\n"
    "{dialog}\n"
    "Labels: {labels}\n"
    "Question: what is the emotion of the last utterance, \"{last_utterance}\"?\n"
    "Answer with one label only.\n"
    "Answer:"
)


@dataclass(frozen=True)
class PromptTemplate:
    """Template text carrying each placeholder exactly once."""

    name: str
    template: str

    def __post_init__(self):
        for ph in PLACEHOLDERS:
            n = self.template.count(ph)
            if n != 1:
                raise BadTemplate(f"template {self.name!r} has {n} occurrences of {ph} (need 1)")

    @classmethod
    def from_file(cls, path: str | Path, name: str | None = None) -> "PromptTemplate":
        path = Path(path)
        return cls(name=name or path.stem, template=path.read_text(encoding="utf-8"))


BUILTIN_TEMPLATES = {
    "llama-style": PromptTemplate(name="llama-style", template=LLAMA_STYLE),
    "falcon-style": PromptTemplate(name="falcon-style", template=FALCON_STYLE),
}


def build_prompt(dialog: Dialog, template: PromptTemplate) -> str:
    """Render a dialog turn-per-line with alternating A:/B: speaker tags.

    Raises:
        EmptyDialog: dialog has no utterances.
    """
    if len(dialog) == 0:
        raise EmptyDialog(f"dialog {dialog.id} has no utterances")
    turns = "\n".join(
        f"{'A' if utt.index % 2 == 0 else 'B'}: {utt.text}" for utt in dialog.utterances
    )
    labels = ", ".join(LABEL_NAMES)
    # Literal replacement, not str.format: dialog text may contain braces.
    return (
        template.template
        .replace("{dialog}", turns)
        .replace("{labels}", labels)
        .replace("{last_utterance}", dialog.utterances[-1].text)
    )


def parse_label(generated: str, label_space: tuple[str, ...] = LABEL_NAMES) -> str:
    """First emotion name mentioned in the output, case-insensitive.

    Total: returns UNPARSABLE when no label name occurs. Equal start
    offsets (not reachable with the canonical names) break toward the
    lower label index.
    """
    haystack = generated.lower()
    best: str | None = None
    best_offset = len(haystack) + 1
    for name in label_space:
        offset = haystack.find(name.lower())
        if offset >= 0 and offset < best_offset:
            best, best_offset = name, offset
    return best if best is not None else UNPARSABLE


@dataclass
class ReplayClient:
    """Offline client serving canned outputs from a JSON-lines fixture.

    Each fixture record is `{"key": <dialog id>, "text": <output>}`; a
    `default` entry (key "*") answers dialogs missing from the fixture.
    """

    responses: dict[str, str]
    default: str | None = None
    calls: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayClient":
        responses: dict[str, str] = {}
        default = None
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record["key"] == "*":
                    default = str(record["text"])
                else:
                    responses[str(record["key"])] = str(record["text"])
        return cls(responses=responses, default=default)

    def generate(self, prompt: str, key: str | None = None) -> str:
        self.calls += 1
        if key is not None and key in self.responses:
            return self.responses[key]
        if self.default is not None:
            return self.default
        raise EndpointFailure(f"replay fixture has no response for key {key!r}")


@dataclass
class HttpGenerationClient:
    """Minimal HTTP JSON endpoint client.

    Request: `{"prompt": str, "max_new_tokens": int}`; response:
    `{"text": str}`. Retries up to `max_retries` extra attempts before
    raising EndpointFailure.
    """

    url: str
    timeout: float = 30.0
    max_retries: int = 2
    max_new_tokens: int = 16
    retry_wait: float = 0.5

    def generate(self, prompt: str, key: str | None = None) -> str:
        payload = json.dumps(
            {"prompt": prompt, "max_new_tokens": self.max_new_tokens}
        ).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                request = urllib.request.Request(
                    self.url, data=payload, headers={"Content-Type": "application/json"}
                )
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    body = json.loads(response.read().decode("utf-8"))
                return str(body["text"])
            except (urllib.error.URLError, OSError, KeyError, json.JSONDecodeError) as exc:
                last_error = exc
                logger.warning("generation attempt %d failed: %s", attempt, exc)
                if attempt < self.max_retries:
                    time.sleep(self.retry_wait)
        raise EndpointFailure(f"endpoint {self.url} failed after {self.max_retries + 1} attempts: {last_error}")


@dataclass(frozen=True)
class GenerationRecord:
    """One line of the generation log."""

    key: str
    prompt_sha256: str
    raw_output: str
    parsed_label: str
    status: str  # "ok", "unparsable", or "failed"

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "prompt_sha256": self.prompt_sha256,
            "raw_output": self.raw_output,
            "parsed_label": self.parsed_label,
            "status": self.status,
        }


@dataclass
class LlmEvalResult:
    """Metrics over last-utterance predictions plus the full log.

    The scored population is one utterance per dialog (the last one),
    minus endpoint failures; reports from this harness are not
    comparable to whole-corpus utterance-level reports.
    """

    report: MetricsReport
    records: list[GenerationRecord]
    n_dialogs: int
    n_failed: int
    n_unparsable: int
    modal_label: str | None
    modal_share: float
    collapse_flagged: bool


def evaluate_llm(
    client,
    corpus: Corpus,
    template: PromptTemplate,
    unparsable_policy: str = "count-as-wrong",
    parallelism: int = 4,
    collapse_threshold: float = 0.8,
) -> LlmEvalResult:
    """One generation per dialog, scored on the last utterance's gold label.

    `count-as-wrong` keeps unparsable outputs as a reserved pseudo-label
    that can never match gold; `map-to-neutral` folds them into neutral.
    Endpoint failures (after the client's retries) exclude the dialog
    from scoring and are counted in the result.
    """
    if unparsable_policy not in ("count-as-wrong", "map-to-neutral"):
        raise ValueError(f"unknown unparsable policy {unparsable_policy!r}")

    def run_one(dialog: Dialog) -> GenerationRecord:
        prompt = build_prompt(dialog, template)
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        try:
            raw = client.generate(prompt, key=dialog.id)
        except EndpointFailure as exc:
            logger.warning("dialog %s failed: %s", dialog.id, exc)
            return GenerationRecord(dialog.id, digest, "", UNPARSABLE, "failed")
        parsed = parse_label(raw)
        status = "ok" if parsed != UNPARSABLE else "unparsable"
        return GenerationRecord(dialog.id, digest, raw, parsed, status)

    dialogs = list(corpus.dialogs)
    if parallelism > 1 and len(dialogs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(run_one, dialogs))
    else:
        records = [run_one(d) for d in dialogs]

    preds: list[str] = []
    golds: list[str] = []
    n_failed = 0
    n_unparsable = 0
    for dialog, record in zip(dialogs, records):
        if record.status == "failed":
            n_failed += 1
            continue
        if record.status == "unparsable":
            n_unparsable += 1
            pred = "neutral" if unparsable_policy == "map-to-neutral" else UNPARSABLE
        else:
            pred = record.parsed_label
        preds.append(pred)
        golds.append(LABEL_NAMES[dialog.utterances[-1].label])

    label_space = LABEL_NAMES if unparsable_policy == "map-to-neutral" else LABEL_NAMES + (UNPARSABLE,)
    modal_label = None
    modal_share = 0.0
    if preds:
        tally: dict[str, int] = {}
        for p in preds:
            tally[p] = tally.get(p, 0) + 1
        modal_label = max(sorted(tally), key=lambda k: tally[k])
        modal_share = tally[modal_label] / len(preds)
    extras = {
        "population": "last-utterance-per-dialog",
        "n_dialogs": len(dialogs),
        "n_failed": n_failed,
        "n_unparsable": n_unparsable,
        "modal_label": modal_label,
        "modal_share": modal_share,
        "collapse_flagged": modal_share >= collapse_threshold if preds else False,
    }
    report = report_from_confusion(confusion(preds, golds, label_space), extras=extras)
    return LlmEvalResult(
        report=report,
        records=records,
        n_dialogs=len(dialogs),
        n_failed=n_failed,
        n_unparsable=n_unparsable,
        modal_label=modal_label,
        modal_share=modal_share,
        collapse_flagged=extras["collapse_flagged"],
    )


def write_generation_log(records: list[GenerationRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


def resolve_template(name_or_path: str) -> PromptTemplate:
    """A builtin name ('llama-style', 'falcon-style') or a file path."""
    if name_or_path in BUILTIN_TEMPLATES:
        return BUILTIN_TEMPLATES[name_or_path]
    path = Path(name_or_path)
    if path.exists():
        return PromptTemplate.from_file(path)
    raise BadTemplate(
        f"{name_or_path!r} is neither a builtin template "
        f"({', '.join(sorted(BUILTIN_TEMPLATES))}) nor a file"
    )
