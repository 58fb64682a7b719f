"""Natural-language rendering of query plans.

A query plan is pure logic: a precondition cube over scene atoms and one
outcome cube per answer option.  This module turns it into text a person
can answer.  The default path is a deterministic template renderer driven
by a phrase table; an optional client can instead ask an external
chat-completion endpoint to phrase the same logical content more fluently,
falling back to the template whenever the reply fails validation.

The letter printed next to an option is positional: option ``i`` always
carries letter ``OPTION_LETTERS[i]`` and maps to bin ``i`` of the plan.
Downstream filtering consumes that index, never the rendered text, so a
bad translation can at worst confuse the reader — it cannot corrupt the
candidate set.
"""

from __future__ import annotations

import json
import logging
import os
import re
import string
import urllib.request
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping, Optional, Sequence

from disambig.answers import QueryPlan
from disambig.logic import Cube, Literal
from disambig.rulelang import Schema

__all__ = [
    "ANY_OUTCOME",
    "NONE_OF_THE_ABOVE",
    "OPTION_LETTERS",
    "LlmConfig",
    "PhraseTable",
    "RenderedText",
    "letter_to_index",
    "load_few_shot",
    "logical_form",
    "render_llm",
    "render_template",
]

log = logging.getLogger(__name__)

OPTION_LETTERS = string.ascii_lowercase

NONE_OF_THE_ABOVE = "None of the above."

ANY_OUTCOME = "Any outcome is possible for this option."


def letter_to_index(letter: str) -> int:
    """Positional index of an option letter (``"a"`` → 0)."""
    idx = OPTION_LETTERS.find(letter)
    if idx < 0:
        raise ValueError(f"not an option letter: {letter!r}")
    return idx


# ---------------------------------------------------------------------------
# phrase tables
# ---------------------------------------------------------------------------

# Builtin phrasing for the default desk-scale vocabulary.  Keys mirror the
# table fields below; anything absent falls back to a generic pattern, so
# custom schemas render without any configuration.
_BUILTIN_ATTR_POS = {
    ("label", "face"): "{x} is a face",
    ("label", "guitar"): "{x} is a guitar",
    ("label", "dog"): "{x} is a dog",
    ("hair", "brown"): "{x} has brown hair",
    ("hair", "blonde"): "{x} has blonde hair",
    ("hair", "none"): "{x} has no hair",
    ("expression", "smiling"): "{x} is smiling",
    ("expression", "neutral"): "{x} has a neutral expression",
}
_BUILTIN_ATTR_NEG = {
    ("label", "face"): "{x} is not a face",
    ("label", "guitar"): "{x} is not a guitar",
    ("label", "dog"): "{x} is not a dog",
    ("hair", "brown"): "{x} does not have brown hair",
    ("hair", "blonde"): "{x} does not have blonde hair",
    ("hair", "none"): "{x} has some hair",
    ("expression", "smiling"): "{x} is not smiling",
    ("expression", "neutral"): "{x} does not have a neutral expression",
}
_BUILTIN_REL_POS = {"above": "{x} is above {y}"}
_BUILTIN_REL_NEG = {"above": "{x} is not above {y}"}
_BUILTIN_OUT_POS = {
    "Blur": "{x} gets blurred",
    "Brighten": "{x} gets brightened",
    "Crop": "{x} gets cropped",
}
_BUILTIN_OUT_NEG = {
    "Blur": "{x} does not get blurred",
    "Brighten": "{x} does not get brightened",
    "Crop": "{x} does not get cropped",
}


@dataclass(frozen=True)
class PhraseTable:
    """Maps literals to phrases and object indices to names.

    Attribute phrases are keyed by ``(attribute, value)``, relation and
    outcome phrases by name; each entry is a pattern with ``{x}`` (and
    ``{y}`` for relations) placeholders.  Missing entries fall back first
    to the builtin desk vocabulary and then to a generic pattern, so
    :meth:`phrase` is total over attr/rel/out literals.  ``validate``
    checks that a schema's literals all render injectively.
    """

    object_names: tuple[str, ...] = ()
    attr_positive: Mapping[tuple[str, str], str] = field(default_factory=dict)
    attr_negative: Mapping[tuple[str, str], str] = field(default_factory=dict)
    rel_positive: Mapping[str, str] = field(default_factory=dict)
    rel_negative: Mapping[str, str] = field(default_factory=dict)
    out_positive: Mapping[str, str] = field(default_factory=dict)
    out_negative: Mapping[str, str] = field(default_factory=dict)

    def name(self, index: int) -> str:
        """Display name for object ``index``."""
        if 0 <= index < len(self.object_names):
            return self.object_names[index]
        return f"object {index + 1}"

    def phrase(self, lit: Literal) -> str:
        """Render one attr/rel/out literal as a phrase."""
        atom = lit.atom
        x = self.name(atom.subject)
        if atom.kind == "attr":
            key = (atom.name, atom.value)
            if lit.positive:
                pat = self.attr_positive.get(key) or _BUILTIN_ATTR_POS.get(
                    key, f"{{x}} has {atom.name} {atom.value!r}"
                )
            else:
                pat = self.attr_negative.get(key) or _BUILTIN_ATTR_NEG.get(
                    key, f"{{x}} does not have {atom.name} {atom.value!r}"
                )
            return pat.format(x=x)
        if atom.kind == "rel":
            y = self.name(atom.other)
            if lit.positive:
                pat = self.rel_positive.get(atom.name) or _BUILTIN_REL_POS.get(
                    atom.name, f"{{x}} is {atom.name} {{y}}"
                )
            else:
                pat = self.rel_negative.get(atom.name) or _BUILTIN_REL_NEG.get(
                    atom.name, f"{{x}} is not {atom.name} {{y}}"
                )
            return pat.format(x=x, y=y)
        if atom.kind == "out":
            if lit.positive:
                pat = self.out_positive.get(atom.name) or _BUILTIN_OUT_POS.get(
                    atom.name, f"{atom.name!r} applies to {{x}}"
                )
            else:
                pat = self.out_negative.get(atom.name) or _BUILTIN_OUT_NEG.get(
                    atom.name, f"{atom.name!r} does not apply to {{x}}"
                )
            return pat.format(x=x)
        raise ValueError(f"no phrase form for {atom.kind!r} atoms")

    def validate(self, schema: Schema) -> None:
        """Check both-polarity coverage and injectivity over ``schema``.

        Raises ``ValueError`` if any two distinct literals of the schema
        render to the same string (phrases must let a reader tell every
        condition apart) or if a pattern fails to mention its subject.
        """
        seen: dict[str, Literal] = {}
        atoms = schema.attr_atoms() + schema.rel_atoms() + schema.out_atoms()
        for atom in atoms:
            for positive in (True, False):
                lit = Literal(atom, positive)
                text = self.phrase(lit)
                if not text:
                    raise ValueError(f"empty phrase for {lit!r}")
                if self.name(atom.subject) not in text:
                    raise ValueError(f"phrase for {lit!r} omits its subject")
                if text in seen:
                    raise ValueError(
                        f"phrase {text!r} renders both {seen[text]!r} and {lit!r}"
                    )
                seen[text] = lit

    @classmethod
    def for_schema(
        cls, schema: Schema, object_names: Sequence[str] = ()
    ) -> "PhraseTable":
        """A validated table for ``schema`` (builtin/generic phrasing)."""
        table = cls(object_names=tuple(object_names))
        table.validate(schema)
        return table


# ---------------------------------------------------------------------------
# template rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenderedText:
    """Question and lettered option sentences for one query plan.

    ``options[i]`` is ``(letter, sentence)`` and always corresponds to bin
    ``i`` of the plan (the none-of-the-above option, when present, is the
    final letter and has no bin).  ``fallback`` is true when an external
    rendering was requested but the template output is being used instead.
    """

    question: str
    options: tuple[tuple[str, str], ...]
    fallback: bool = False


def _sentence(phrases: Sequence[str]) -> str:
    """Join phrases into one sentence: 'P.', 'P and Q.', 'P, Q, and R.'"""
    if len(phrases) == 1:
        body = phrases[0]
    elif len(phrases) == 2:
        body = f"{phrases[0]} and {phrases[1]}"
    else:
        body = ", ".join(phrases[:-1]) + f", and {phrases[-1]}"
    return body[0].upper() + body[1:] + "."


def _option_sentence(cube: Cube, table: PhraseTable) -> str:
    if not cube.literals:
        return ANY_OUTCOME
    return _sentence([table.phrase(lit) for lit in cube.literals])


def render_template(
    plan: QueryPlan,
    table: Optional[PhraseTable] = None,
    *,
    none_option: bool = False,
) -> RenderedText:
    """Render ``plan`` deterministically through a phrase table.

    The question states the assumed input scene ("Imagine an input
    where: ...") and each bin's separator cube becomes one lettered
    option sentence.  ``none_option`` appends a final "None of the
    above." choice (used when the plan was computed on a sample of the
    candidates, so the true program may match no listed outcome).
    """
    table = table if table is not None else PhraseTable()
    if plan.precondition.literals:
        conjuncts = "; ".join(table.phrase(lit) for lit in plan.precondition.literals)
        question = f"Imagine an input where: {conjuncts}."
    else:
        question = "Imagine any input."
    question += " Which of the following happens?"
    if len(plan.separators) + bool(none_option) > len(OPTION_LETTERS):
        raise ValueError("plan has more options than available letters")
    options = [
        (OPTION_LETTERS[i], _option_sentence(cube, table))
        for i, cube in enumerate(plan.separators)
    ]
    if none_option:
        options.append((OPTION_LETTERS[len(options)], NONE_OF_THE_ABOVE))
    return RenderedText(question=question, options=tuple(options))


# ---------------------------------------------------------------------------
# external translation client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlmConfig:
    """Settings for the optional chat-completion translation endpoint.

    ``endpoint=None`` disables the client: rendering then never touches
    the network and immediately falls back to the template.  The API key
    is read from the environment variable named by ``api_key_env`` at
    request time and is never logged.
    """

    endpoint: Optional[str] = None
    model: str = "default"
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 10.0
    few_shot: tuple[tuple[str, str], ...] = ()
    extra_headers: tuple[tuple[str, str], ...] = ()

    @property
    def enabled(self) -> bool:
        return self.endpoint is not None


def load_few_shot(domain: str = "desk") -> tuple[tuple[str, str], ...]:
    """Load the packaged few-shot examples for ``domain``.

    Each example pairs a logical query (the :func:`logical_form` of some
    plan) with a gold rendering in the exact shape the validator expects.
    The examples live in editable JSON data files shipped with the
    package.
    """
    path = resources.files("disambig").joinpath("data", f"fewshot_{domain}.json")
    entries = json.loads(path.read_text(encoding="utf-8"))
    return tuple((e["query"], e["text"]) for e in entries)


def logical_form(plan: QueryPlan, *, none_option: bool = False) -> str:
    """Deterministic plain-text dump of the plan's logic for the prompt."""
    if plan.precondition.literals:
        pre = " & ".join(repr(lit) for lit in plan.precondition.literals)
    else:
        pre = "true"
    lines = [f"Precondition: {pre}"]
    for i, cube in enumerate(plan.separators):
        body = " & ".join(repr(lit) for lit in cube.literals) or "true"
        lines.append(f"({OPTION_LETTERS[i]}) {body}")
    if none_option:
        lines.append(f"({OPTION_LETTERS[len(plan.separators)]}) none of the listed outcomes")
    return "\n".join(lines)


_SYSTEM_PROMPT = (
    "You translate logical multiple-choice queries about an input scene "
    "into plain English. Render the precondition as one question asking "
    "the reader to imagine such an input, then every option as '(letter) "
    "sentence' on its own line, keeping the letters and their order "
    "exactly as given. Do not add, drop, or reorder options."
)

_MARKER = re.compile(r"\(([a-z])\)")


def _parse_reply(text: str, letters: Sequence[str]) -> Optional[RenderedText]:
    """Split a reply into question/options; None if letters don't match."""
    found = _MARKER.findall(text)
    if found != list(letters):
        return None
    parts = _MARKER.split(text)
    # parts = [question, letter, body, letter, body, ...]
    question = parts[0].strip()
    bodies = [parts[i].strip() for i in range(2, len(parts), 2)]
    if not question or not all(bodies):
        return None
    return RenderedText(question=question, options=tuple(zip(letters, bodies)))


def render_llm(
    plan: QueryPlan,
    cfg: LlmConfig,
    table: Optional[PhraseTable] = None,
    *,
    none_option: bool = False,
) -> RenderedText:
    """Render ``plan`` through the configured endpoint, else the template.

    Sends the plan's logical form plus the configured few-shot examples
    to a chat-completion HTTP endpoint and validates that the reply keeps
    every option letter exactly once, in order.  Any network, protocol,
    or validation failure returns the template rendering with
    ``fallback=True`` — this function never raises for endpoint trouble.
    """
    template = render_template(plan, table, none_option=none_option)
    if not cfg.enabled:
        return replace(template, fallback=True)
    letters = [letter for letter, _ in template.options]
    messages = [{"role": "system", "content": _SYSTEM_PROMPT}]
    for query, gold in cfg.few_shot:
        messages.append({"role": "user", "content": query})
        messages.append({"role": "assistant", "content": gold})
    messages.append(
        {"role": "user", "content": logical_form(plan, none_option=none_option)}
    )
    body = json.dumps({"model": cfg.model, "messages": messages}).encode("utf-8")
    headers = {"Content-Type": "application/json", **dict(cfg.extra_headers)}
    key = os.environ.get(cfg.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        if log.isEnabledFor(logging.DEBUG):
            shown = dict(headers)
            if "Authorization" in shown:
                shown["Authorization"] = "Bearer ***"
            log.debug("translation request to %s: headers=%s body=%s",
                      cfg.endpoint, shown, body.decode("utf-8"))
        req = urllib.request.Request(cfg.endpoint, data=body, headers=headers)
        with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        log.debug("translation response: %s", payload)
        content = payload["choices"][0]["message"]["content"]
        parsed = _parse_reply(str(content), letters)
        if parsed is None:
            log.debug("translation reply failed option validation; using template")
            return replace(template, fallback=True)
        return parsed
    except Exception as exc:  # noqa: BLE001 — any endpoint trouble means fallback
        log.debug("translation request failed (%s); using template", exc)
        return replace(template, fallback=True)
