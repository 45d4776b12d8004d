"""Deterministic synthetic Java corpus for smoke runs and overfit checks.

Records come in clone families: one templated method (template x field)
re-implemented in several projects with different types, modifiers and
parameter names but the same doc comment.  A retrieved neighbour from the
same family therefore carries the right comment, as near-duplicate code
does in real corpora.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

WORDS = [
    "user", "name", "account", "order", "price", "item", "status", "count",
    "file", "path", "event", "queue", "buffer", "node", "edge", "graph",
    "cache", "entry", "token", "session", "client", "server", "message", "index",
    "value", "record", "table", "column", "row", "page",
]
TYPES = ["String", "int", "long", "double", "Object"]
MODIFIERS = ["public", "protected", "private", "public final", "public synchronized"]
PARAMS = ["item", "value", "arg", "x", "other"]

# (code template, comment template); {M} modifiers, {F} CamelCase field,
# {f} camelCase field, {T} a type, {p} a parameter name, {w} the field words.
TEMPLATES = [
    ("{M} {T} get{F}() {{ return this.{f}; }}", "Returns the {w}."),
    ("{M} void set{F}({T} {p}) {{ this.{f} = {p}; }}", "Sets the {w}."),
    ("{M} boolean has{F}() {{ return {f} != null; }}", "Checks whether the {w} is present."),
    ("{M} void add{F}({T} {p}) {{ {f}List.add({p}); }}", "Adds an item to the {w} list."),
    ("{M} boolean remove{F}({T} {p}) {{ return {f}List.remove({p}); }}", "Removes an item from the {w} list."),
    ("{M} int count{F}() {{ return {f}List.size(); }}", "Returns the number of {w} entries."),
    ("{M} void clear{F}() {{ {f}List.clear(); }}", "Clears all {w} entries."),
    (
        "{M} int total{F}(int[] {p}) {{ int sum = 0; for (int i = 0; i < {p}.length; i++) {{ sum += {p}[i]; }} return sum; }}",
        "Computes the total of the {w} array.",
    ),
    ("{M} void print{F}() {{ System.out.println(this.{f}); }}", "Prints the {w} to standard output."),
    ("{M} void reset{F}() {{ if ({f} != null) {{ {f} = null; }} }}", "Resets the {w} to null."),
]


def _field(words: tuple[str, ...]) -> tuple[str, str, str]:
    camel = words[0] + "".join(w.capitalize() for w in words[1:])
    return camel[0].upper() + camel[1:], camel, " ".join(words)


def _variant(template: int, words: tuple[str, ...], variant: int, project: str) -> dict:
    code_t, doc_t = TEMPLATES[template]
    F, f, w = _field(words)
    code = code_t.format(
        M=MODIFIERS[variant % len(MODIFIERS)],
        T=TYPES[(variant + template) % len(TYPES)],
        p=PARAMS[(variant * 2 + template) % len(PARAMS)],
        F=F,
        f=f,
    )
    return {"source_text": code, "doc_text": "/** " + doc_t.format(w=w) + " */", "project_id": project}


def make_fixture(
    n_families: int = 50, train_variants: int = 4, heldout_per_family: int = 1, seed: int = 0
) -> tuple[list[dict], list[dict]]:
    """Return ``(train_records, heldout_records)``.

    Every family contributes ``train_variants`` training records and
    ``heldout_per_family`` further variants to the held-out set; held-out
    records come from their own projects and never repeat a training method.
    """
    rng = random.Random(seed)
    fields = [(a, b) for a in WORDS for b in WORDS if a != b]
    rng.shuffle(fields)
    families = [(k % len(TEMPLATES), fields[k]) for k in range(n_families)]
    train, heldout = [], []
    for fam, (template, words) in enumerate(families):
        for v in range(train_variants):
            train.append(_variant(template, words, v, f"fixture/train-{(fam + v) % 10}"))
        for v in range(train_variants, train_variants + heldout_per_family):
            heldout.append(_variant(template, words, v, f"fixture/heldout-{fam % 3}"))
    rng.shuffle(train)
    rng.shuffle(heldout)
    return train, heldout


def write_records(path, records: list[dict]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def bundled_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(__file__).resolve().parent / "data" / name
