"""Instruction parsing: heuristic chunking or LLM decomposition, then action canonicalization."""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .episodes import KIND_ORDER, ActionKind
from .llm import CompletionRequest, Encoder, LlmClient, LlmUnavailable, TrigramEncoder
from .subtask import SubTask

CANONICAL_PHRASES = {
    ActionKind.GO_TO: "go to",
    ActionKind.GO_PAST: "go past",
    ActionKind.GO_INTO: "go into",
    ActionKind.GO_THROUGH: "go through",
    ActionKind.EXIT: "exit",
}

CONNECTIVES = ("and then", "after that", "then", "next")
PARTICLES = frozenset({"to", "into", "in", "past", "through", "out", "of", "from", "toward", "towards"})
ARTICLES = frozenset({"the", "a", "an"})
# a chunk whose landmark is only one of these names no landmark at all ("wait there")
DEICTIC = frozenset({"there", "here", "it", "them", "this", "that"})
# leading words that still separate the verb from the landmark after chunking
LANDMARK_PREFIXES = frozenset(
    {"at", "by", "beside", "near", "next", "to", "straight", "ahead", "up", "down", "over", "onto", "on", "toward", "towards"}
)

_SENTENCE_SPLIT = re.compile(r"[.!?;]+")
_CONNECTIVE_SPLIT = re.compile(r"\b(?:" + "|".join(c.replace(" ", r"\s+") for c in CONNECTIVES) + r")\b", re.IGNORECASE)
_LINE = re.compile(r"^\s*(?:\d+\s*[.)]\s*)?\(\s*(.+?)\s*,\s*(.+?)\s*\)\s*$")


class ParseError(ValueError):
    """Base class for parser errors."""


class EmptyInstruction(ParseError):
    """The instruction has no content."""


class Unparseable(ParseError):
    """A non-blank completion line does not match ``(<action>, <landmark>)``."""

    def __init__(self, line: str):
        super().__init__(f"cannot parse line: {line!r}")
        self.line = line


class ParserKind(enum.Enum):
    HEURISTIC = "Heuristic"
    LLM = "Llm"


class PromptStyle(enum.Enum):
    DEFINITION = "Definition"
    EXAMPLES = "Examples"
    BOTH = "Both"

    @classmethod
    def parse(cls, text: str) -> PromptStyle:
        for style in cls:
            if style.value.lower() == text.strip().lower():
                return style
        raise ValueError(f"unknown prompt style {text!r}")


@dataclass(frozen=True)
class RawSubTask:
    action_phrase: str
    landmark_phrase: str
    source_line: str = ""


@dataclass(frozen=True)
class ParsedInstruction:
    instruction: str
    subtasks: tuple[SubTask, ...]
    raw: tuple[RawSubTask, ...]
    parser: ParserKind
    prompt_style: PromptStyle | None = None

    def __post_init__(self):
        if len(self.subtasks) != len(self.raw):
            raise ValueError("subtasks and raw must have the same length")

    def to_json(self) -> dict:
        return {
            "instruction": self.instruction,
            "subtasks": [s.to_json() for s in self.subtasks],
            "raw": [{"action_phrase": r.action_phrase, "landmark_phrase": r.landmark_phrase, "source_line": r.source_line} for r in self.raw],
            "parser": self.parser.value,
            "prompt_style": self.prompt_style.value if self.prompt_style else None,
        }

    def lines(self) -> list[str]:
        return [str(s) for s in self.subtasks]


# -- lexicon -----------------------------------------------------------------


def normalize_phrase(text: str) -> str:
    return " ".join(re.sub(r"[^\w\s'-]", " ", text.lower()).split())


@dataclass
class ActionLexicon:
    """Lowercased synonym phrase -> ActionKind; always contains the canonical phrases."""

    entries: dict[str, ActionKind] = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {normalize_phrase(k): v for k, v in self.entries.items()}
        for kind, phrase in CANONICAL_PHRASES.items():
            self.entries[phrase] = kind

    def lookup(self, phrase: str) -> ActionKind | None:
        return self.entries.get(normalize_phrase(phrase))

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return self.entries.items()

    @classmethod
    def parse_table(cls, lines: Iterable[str], source: str = "<lexicon>") -> ActionLexicon:
        entries = {}
        for n, line in enumerate(lines, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip():
                raise ValueError(f"{source}:{n}: expected 'phrase<TAB>kind'")
            try:
                entries[parts[0]] = ActionKind.parse(parts[1].strip())
            except ValueError as exc:
                raise ValueError(f"{source}:{n}: {exc}") from None
        return cls(entries)

    @classmethod
    def load(cls, path) -> ActionLexicon:
        with open(path, encoding="utf-8") as fh:
            return cls.parse_table(fh, str(path))

    @classmethod
    def default(cls) -> ActionLexicon:
        text = resources.files("subtasknav.data").joinpath("lexicon.tsv").read_text(encoding="utf-8")
        return cls.parse_table(text.splitlines(), "lexicon.tsv")


# -- heuristic chunker -------------------------------------------------------


def _words(text: str) -> list[str]:
    return re.findall(r"[A-Za-z0-9'-]+", text.lower())


def _split_on_and(chunks: Iterable[str]) -> list[str]:
    """Split further on a bare "and" that introduces a lexicon verb.

    "leave the bedroom and walk past the sofa" is two steps, while
    "the table and chairs" stays one landmark.
    """
    verbs = {phrase.split()[0] for phrase, _ in _default_lexicon().items()}
    verbs.update(p.split()[0] for p in CANONICAL_PHRASES.values())
    pattern = re.compile(r"\band\s+(?=(?:" + "|".join(sorted(map(re.escape, verbs))) + r")\b)", re.IGNORECASE)
    return [part for chunk in chunks for part in pattern.split(chunk)]


def chunk_heuristic(instruction: str) -> list[RawSubTask]:
    """Split on sentence punctuation and connectives; leading verb group vs. the rest.

    The verb group is the first word plus any particles that follow it;
    articles are dropped from the landmark; chunks without a landmark are
    dropped, and so are chunks whose landmark is only a deictic word.
    """
    if not instruction or not instruction.strip():
        raise EmptyInstruction("instruction is empty")
    out = []
    for sentence in _SENTENCE_SPLIT.split(instruction):
        for chunk in _split_on_and(_CONNECTIVE_SPLIT.split(sentence)):
            source = chunk.strip(" \t\n,")
            words = _words(source)
            if not words:
                continue
            k = 1
            while k < len(words) and words[k] in PARTICLES:
                k += 1
            landmark = [w for w in words[k:] if w not in ARTICLES]
            if landmark and not set(landmark) <= DEICTIC:
                out.append(RawSubTask(" ".join(words[:k]), " ".join(landmark), source))
    return out


# -- canonicalization --------------------------------------------------------


def canonicalize_action(
    action_phrase: str,
    encoder: Encoder | None = None,
    lexicon: ActionLexicon | None = None,
) -> ActionKind:
    """Lexicon lookup first, then the canonical phrase with the highest cosine similarity.

    Equal scores go to the kind listed first in KIND_ORDER.
    """
    if not action_phrase or not action_phrase.strip():
        raise ValueError("action phrase must be non-empty")
    lexicon = lexicon if lexicon is not None else _default_lexicon()
    hit = lexicon.lookup(action_phrase)
    if hit is not None:
        return hit
    encoder = encoder or _DEFAULT_ENCODER
    q = encoder.embed(action_phrase)
    best, best_score = KIND_ORDER[0], -np.inf
    for kind in KIND_ORDER:
        score = float(np.dot(q, encoder.embed(CANONICAL_PHRASES[kind])))
        if score > best_score + 1e-12:
            best, best_score = kind, score
    return best


_DEFAULT_ENCODER = TrigramEncoder()
_LEXICON_CACHE: list[ActionLexicon] = []


def _default_lexicon() -> ActionLexicon:
    if not _LEXICON_CACHE:
        _LEXICON_CACHE.append(ActionLexicon.default())
    return _LEXICON_CACHE[0]


def clean_landmark(text: str) -> str:
    """Lowercase, drop articles and leading prepositions ("at the sink" -> "sink")."""
    words = [w for w in _words(text) if w not in ARTICLES]
    k = 0
    while k < len(words) - 1 and words[k] in LANDMARK_PREFIXES:
        k += 1
    words = words[k:]
    return " ".join(words) if words else text.strip()


# -- prompts -----------------------------------------------------------------

DEFINITIONS = {
    ActionKind.GO_TO: "travel to the landmark and stop next to it.",
    ActionKind.GO_PAST: "travel on beyond the landmark, so that it is passed partway along the route.",
    ActionKind.GO_INTO: "enter the landmark region from outside and stop inside it.",
    ActionKind.GO_THROUGH: "enter the landmark region by one entrance and leave it by another.",
    ActionKind.EXIT: "leave the landmark region the agent is in and stop just outside it.",
}

PROMPT_HEADER = (
    "Break a navigation instruction into an ordered list of sub-tasks. "
    "Write one sub-task per line as: <index>. (<action>, <landmark>)"
)


def few_shot_examples() -> list[dict]:
    text = resources.files("subtasknav.data").joinpath("fewshot.json").read_text(encoding="utf-8")
    return json.loads(text)


def format_subtasks(raws: Sequence[RawSubTask] | Sequence[tuple[str, str]]) -> str:
    """Render sub-tasks in the completion line grammar (inverse of parse_llm_output)."""
    lines = []
    for i, r in enumerate(raws, 1):
        action, landmark = (r.action_phrase, r.landmark_phrase) if isinstance(r, RawSubTask) else r
        lines.append(f"{i}. ({action}, {landmark})")
    return "\n".join(lines)


def definition_block() -> str:
    lines = ["Sub-task definitions:"]
    for kind in KIND_ORDER:
        lines.append(f"- {CANONICAL_PHRASES[kind].capitalize()}: {DEFINITIONS[kind]}")
    return "\n".join(lines)


def examples_block() -> str:
    parts = ["Examples:"]
    for ex in few_shot_examples():
        parts.append(f"Instruction: {ex['instruction']}\nSub-tasks:\n{format_subtasks([tuple(p) for p in ex['subtasks']])}")
    return "\n\n".join(parts)


def build_prompt(instruction: str, style: PromptStyle = PromptStyle.BOTH) -> str:
    blocks = [PROMPT_HEADER]
    if style in (PromptStyle.DEFINITION, PromptStyle.BOTH):
        blocks.append(definition_block())
    if style in (PromptStyle.EXAMPLES, PromptStyle.BOTH):
        blocks.append(examples_block())
    blocks.append(f"Instruction: {instruction.strip()}\nSub-tasks:")
    return "\n\n".join(blocks) + "\n"


def parse_llm_output(completion: str) -> list[RawSubTask]:
    out = []
    for line in completion.splitlines():
        if not line.strip():
            continue
        m = _LINE.match(line)
        if m is None:
            raise Unparseable(line)
        out.append(RawSubTask(m.group(1), m.group(2), line))
    return out


# -- entry point -------------------------------------------------------------


def to_subtask(raw: RawSubTask, encoder: Encoder | None = None, lexicon: ActionLexicon | None = None) -> SubTask:
    return SubTask(canonicalize_action(raw.action_phrase, encoder, lexicon), clean_landmark(raw.landmark_phrase))


def parse_instruction(
    instruction: str,
    parser: ParserKind = ParserKind.HEURISTIC,
    style: PromptStyle = PromptStyle.BOTH,
    llm: LlmClient | None = None,
    encoder: Encoder | None = None,
    lexicon: ActionLexicon | None = None,
) -> ParsedInstruction:
    if parser is ParserKind.HEURISTIC:
        raws = chunk_heuristic(instruction)
        used_style = None
    else:
        if not instruction.strip():
            raise EmptyInstruction("instruction is empty")
        if llm is None:
            raise LlmUnavailable("the LLM parser needs a client or a fixture store")
        raws = parse_llm_output(llm.complete(CompletionRequest(build_prompt(instruction, style))))
        used_style = style
    subtasks = tuple(to_subtask(r, encoder, lexicon) for r in raws)
    return ParsedInstruction(instruction, subtasks, tuple(raws), parser, used_style)


# -- golden corpus -----------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    id: int
    instruction: str
    expected: tuple[tuple[ActionKind, str], ...]
    completion: str = ""

    @classmethod
    def from_json(cls, d: Mapping) -> CorpusEntry:
        expected = tuple((ActionKind.parse(a), l) for a, l in d["expected"])
        return cls(int(d["id"]), d["instruction"], expected, d.get("completion", ""))


def load_corpus(path=None) -> list[CorpusEntry]:
    if path is None:
        text = resources.files("subtasknav.data").joinpath("golden_corpus.jsonl").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return [CorpusEntry.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def matches_expected(parsed: ParsedInstruction, entry: CorpusEntry) -> bool:
    got = tuple((s.action, s.landmark) for s in parsed.subtasks)
    return got == entry.expected


def default_fixtures_path():
    return resources.files("subtasknav.data").joinpath("llm_fixtures.jsonl")


# instructions outside the corpus that the shipped fixture store also answers
EXTRA_COMPLETIONS = {
    "Exit the bedroom": "1. (Exit, bedroom)",
    "Go past the sofa": "1. (Go past, sofa)",
}


def corpus_fixture_records(corpus: Sequence[CorpusEntry], styles: Iterable[PromptStyle] = tuple(PromptStyle)) -> list[dict]:
    """Fixture-store records answering every corpus prompt with the entry's canned completion.

    This is how ``data/llm_fixtures.jsonl`` is produced; rerun it after
    editing the prompt templates, since fixtures are keyed by prompt hash.
    """
    from .llm import FixtureStore

    pairs = [(e.instruction, e.completion) for e in corpus] + list(EXTRA_COMPLETIONS.items())
    return [FixtureStore.record(build_prompt(i, style), c) for style in styles for i, c in pairs]
