"""Record ingestion, token normalisation, deduplication and project splits."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from . import parser

log = logging.getLogger(__name__)

NONE_TOKEN = "<none>"

_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+")
_SEPARATOR = re.compile(r"[^A-Za-z0-9]+")
_SENTENCE_END = re.compile(r"[.!?](?:\s|$)")


@dataclass(frozen=True)
class RawRecord:
    source_text: str
    doc_text: str
    project_id: str
    sbt_tokens: tuple[str, ...] | None = None


@dataclass
class Sample:
    id: int
    project_id: str
    code_tokens: list[str]
    sbt_tokens: list[str]
    comment_tokens: list[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> Sample:
        return cls(
            id=int(d["id"]),
            project_id=str(d["project_id"]),
            code_tokens=list(d["code_tokens"]),
            sbt_tokens=list(d["sbt_tokens"]),
            comment_tokens=list(d["comment_tokens"]),
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: Fraction = Fraction(8, 10)
    valid_fraction: Fraction = Fraction(1, 10)
    test_fraction: Fraction = Fraction(1, 10)
    seed: int = 0

    def __post_init__(self):
        fr = (Fraction(self.train_fraction), Fraction(self.valid_fraction), Fraction(self.test_fraction))
        if any(f <= 0 for f in fr):
            raise ValueError("split fractions must be positive")
        if sum(fr) != 1:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")
        object.__setattr__(self, "train_fraction", fr[0])
        object.__setattr__(self, "valid_fraction", fr[1])
        object.__setattr__(self, "test_fraction", fr[2])


@dataclass
class SplitStats:
    count: int = 0
    avg_comment: float = 0.0
    avg_code: float = 0.0
    avg_sbt: float = 0.0


@dataclass
class CorpusStats:
    splits: dict[str, SplitStats] = field(default_factory=dict)


# ------------------------------------------------------------ normalisation


def split_identifier(token: str) -> list[str]:
    """Split on underscores (and other punctuation) and camel-case boundaries.

    Digits are not boundaries; they are dropped before the camel split.  An
    uppercase run followed by a lowercase letter splits before its last
    character: ``HTTPRequest`` -> ``HTTP``, ``Request``.
    """
    out = []
    for part in _SEPARATOR.split(token):
        out.extend(m.group() for m in _CAMEL.finditer(re.sub(r"[0-9]+", "", part)))
    return out


def normalize_tokens(raw: Iterable[str]) -> list[str]:
    return [piece.lower() for tok in raw for piece in split_identifier(tok)]


def extract_comment(doc_text: str) -> list[str] | None:
    """First sentence of a doc block, else its first line, normalised.

    Returns None when nothing alphabetic survives.
    """
    text = _strip_doc_markup(doc_text)
    m = _SENTENCE_END.search(text)
    if m:
        first = text[: m.start()]
    else:
        first = text.strip().split("\n", 1)[0] if text.strip() else ""
    # a sentence may span lines in javadoc; flatten it
    tokens = normalize_tokens(first.split())
    return tokens or None


def _strip_doc_markup(doc: str) -> str:
    lines = []
    for line in doc.splitlines():
        line = line.strip()
        line = re.sub(r"^/\*\*+|\*+/$", "", line).strip()
        line = re.sub(r"^\*+", "", line).strip()
        if line.startswith("@"):  # block tags end the description
            break
        lines.append(line)
    text = "\n".join(lines).strip("\n")
    # inline tags like {@code foo} keep their payload
    return re.sub(r"\{@\w+\s*([^}]*)\}", r"\1", text)


def is_ascii(text: str) -> bool:
    return all(ord(c) < 128 for c in text)


def is_auto_generated(comment_tokens: list[str]) -> bool:
    return comment_tokens[:2] == ["auto", "generated"]


# ------------------------------------------------------------------ samples


def build_sample(record: RawRecord, sample_id: int, challenge: bool = False) -> Sample | None:
    """Turn one raw record into a Sample; None if the record is unusable.

    Raises LexError/ParseError for sources the parser rejects.
    """
    if not is_ascii(record.source_text) or not is_ascii(record.doc_text):
        return None
    comment = extract_comment(record.doc_text)
    if comment is None or is_auto_generated(comment):
        return None
    tokens = parser.lex(record.source_text)
    code = normalize_tokens(t.text for t in tokens)
    if record.sbt_tokens is not None:
        sbt_tokens = list(record.sbt_tokens)
    else:
        sbt_tokens = parser.sbt(parser.parse_tokens(tokens, len(record.source_text)))
    if challenge:
        code = parser.sbt_to_ao(sbt_tokens)
    if not code or not sbt_tokens:
        return None
    return Sample(sample_id, record.project_id, code, sbt_tokens, comment)


def deduplicate(samples: Iterable[Sample]) -> list[Sample]:
    seen = set()
    out = []
    for s in samples:
        key = (tuple(s.code_tokens), tuple(s.comment_tokens))
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return out


def project_position(project_id: str, seed: int) -> float:
    """Stable map of (project, seed) to [0, 1)."""
    digest = hashlib.blake2b(f"{seed}\x00{project_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2**64


def assign_split(project_id: str, spec: SplitSpec) -> str:
    u = project_position(project_id, spec.seed)
    if u < spec.train_fraction:
        return "train"
    if u < spec.train_fraction + spec.valid_fraction:
        return "valid"
    return "test"


def split_by_project(samples: Iterable[Sample], spec: SplitSpec) -> tuple[list[Sample], list[Sample], list[Sample]]:
    parts: dict[str, list[Sample]] = {"train": [], "valid": [], "test": []}
    for s in samples:
        parts[assign_split(s.project_id, spec)].append(s)
    return parts["train"], parts["valid"], parts["test"]


def _mean(values: list[int]) -> float:
    return sum(values) / len(values) if values else 0.0


def stats(splits: dict[str, list[Sample]]) -> CorpusStats:
    out = CorpusStats()
    for name, samples in splits.items():
        out.splits[name] = SplitStats(
            count=len(samples),
            avg_comment=_mean([len(s.comment_tokens) for s in samples]),
            avg_code=_mean([len(s.code_tokens) for s in samples]),
            avg_sbt=_mean([len(s.sbt_tokens) for s in samples]),
        )
    return out


# --------------------------------------------------------------------- I/O


def read_raw(path) -> Iterator[tuple[int, RawRecord | None, str | None]]:
    """Yield ``(line_no, record, error)``; exactly one of record/error is set."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                source = d["source_text"]
                doc = d["doc_text"]
                project = d["project_id"]
                if not isinstance(source, str) or not isinstance(doc, str) or not source.strip():
                    raise ValueError("source_text must be a nonempty string")
                sbt_tokens = d.get("sbt_tokens")
                if sbt_tokens is not None:
                    sbt_tokens = tuple(str(t) for t in sbt_tokens)
                yield line_no, RawRecord(source, doc, str(project), sbt_tokens), None
            except (ValueError, KeyError, TypeError) as exc:
                yield line_no, None, f"{type(exc).__name__}: {exc}"


def ingest(path, challenge: bool = False) -> tuple[list[Sample], dict[str, int]]:
    """Read a raw record file into deduplicated samples.

    Returns the samples and a count of skipped lines per reason.
    """
    samples = []
    skipped = {"malformed": 0, "unparseable": 0, "filtered": 0, "duplicate": 0}
    for line_no, record, error in read_raw(path):
        if record is None:
            log.warning("line %d: malformed record skipped (%s)", line_no, error)
            skipped["malformed"] += 1
            continue
        try:
            sample = build_sample(record, len(samples), challenge=challenge)
        except (parser.LexError, parser.ParseError) as exc:
            log.warning("line %d: %s", line_no, exc)
            skipped["unparseable"] += 1
            continue
        if sample is None:
            skipped["filtered"] += 1
            continue
        samples.append(sample)
    kept = deduplicate(samples)
    skipped["duplicate"] = len(samples) - len(kept)
    # ids stay dense after deduplication
    for i, s in enumerate(kept):
        s.id = i
    return kept, skipped


def write_samples(path, samples: Iterable[Sample]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")


def read_samples(path) -> list[Sample]:
    with open(path, encoding="utf-8") as fh:
        return [Sample.from_dict(json.loads(line)) for line in fh if line.strip()]
