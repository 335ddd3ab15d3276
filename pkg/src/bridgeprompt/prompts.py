"""Text prompt rendering: statistical, ordinal, semantic and integrated levels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

from .exceptions import ParseError, ValidationError

_ONES = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
         "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
         "seventeen", "eighteen", "nineteen"]
_TENS = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"]
_ORD_IRREGULAR = {"one": "first", "two": "second", "three": "third", "five": "fifth",
                  "eight": "eighth", "nine": "ninth", "twelve": "twelfth"}


def num_to_cardinal(n: int) -> str:
    if not 1 <= n <= 99:
        raise ValueError(f"cardinal out of range 1..99: {n}")
    if n < 20:
        return _ONES[n]
    tens, ones = divmod(n, 10)
    return _TENS[tens] if ones == 0 else f"{_TENS[tens]}-{_ONES[ones]}"


def ord_to_text(i: int) -> str:
    if not 1 <= i <= 99:
        raise ValueError(f"ordinal out of range 1..99: {i}")
    word = num_to_cardinal(i)
    head, sep, last = word.rpartition("-")
    if last in _ORD_IRREGULAR:
        last = _ORD_IRREGULAR[last]
    elif last.endswith("y"):
        last = last[:-1] + "ieth"
    else:
        last += "th"
    return head + sep + last


DEFAULT_SEMANTIC_VARIANTS = [
    "{ord}, the person is performing the action step of {vp}",
    "{ord}, the person is doing {vp}",
    "{ord}, the person performs the step of {vp}",
    "{ord}, the step being performed is {vp}",
    "{ord}, a person is carrying out the action of {vp}",
    "{ord}, someone is performing {vp}",
    "{ord}, the action performed is {vp}",
    "{ord}, the person carries out {vp}",
    "{ord}, we see the person {vp}",
    "{ord}, the person is about to {vp}",
    "{ord}, the video shows the step {vp}",
    "{ord}, the human is performing the action step of {vp}",
    "{ord}, the person starts to {vp}",
    "{ord}, the action step is to {vp}",
    "{ord}, in this step the person will {vp}",
    "{ord}, the person proceeds to {vp}",
    "{ord}, the performed action step is {vp}",
    "{ord}, the person tries to {vp}",
    "{ord}, the clip shows someone who will {vp}",
]

DEFAULT_INTEGRATED_VARIANTS = [
    "{ord}, {vp}",
    "{ord} step, {vp}",
    "{ord}, the person does {vp}",
    "{ord}, someone does {vp}",
    "{ord}, the step is {vp}",
    "{ord} the person will {vp}",
    "{ord}, doing {vp}",
    "{ord} action, {vp}",
    "{ord}, they {vp}",
]

INTEGRATED_JOINER = ", "


@dataclass
class VariantTable:
    """Paraphrase templates with literal ``{ord}`` / ``{vp}`` slots.

    Semantic variant 0 is the canonical template; inference and training
    average over all variants.
    """

    semantic_variants: List[str] = field(default_factory=lambda: list(DEFAULT_SEMANTIC_VARIANTS))
    integrated_variants: List[str] = field(default_factory=lambda: list(DEFAULT_INTEGRATED_VARIANTS))

    def __post_init__(self):
        if not self.semantic_variants or not self.integrated_variants:
            raise ValidationError("variant table needs at least one semantic and one integrated template")
        for t in self.semantic_variants + self.integrated_variants:
            if "{vp}" not in t:
                raise ValidationError(f"template lacks {{vp}} slot: {t!r}")

    @classmethod
    def canonical(cls) -> "VariantTable":
        return cls([DEFAULT_SEMANTIC_VARIANTS[0]], [DEFAULT_INTEGRATED_VARIANTS[0]])


def _render(template: str, ordinal: str, vp: str) -> str:
    # str.format would choke on braces inside verb phrases
    return template.replace("{ord}", ordinal).replace("{vp}", vp)


def load_variant_table(path) -> VariantTable:
    sections = {"semantic": [], "integrated": []}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in sections:
                    raise ParseError(f"unknown section [{current}]", path, lineno)
                continue
            if current is None:
                raise ParseError("template outside any section", path, lineno)
            sections[current].append(line)
    return VariantTable(sections["semantic"], sections["integrated"])


def write_variant_table(path, table: VariantTable):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("[semantic]\n")
        fh.writelines(t + "\n" for t in table.semantic_variants)
        fh.write("[integrated]\n")
        fh.writelines(t + "\n" for t in table.integrated_variants)


def make_statistical_prompt(K: int) -> str:
    noun = "action" if K == 1 else "actions"
    return f"this video clip contains {num_to_cardinal(K)} {noun} in total"


def make_ordinal_prompt(i: int) -> str:
    return f"this is the {ord_to_text(i)} action in the video"


def make_semantic_prompts(i: int, vp: str, table: VariantTable) -> List[str]:
    if not vp:
        raise ValueError("empty verb phrase")
    ordinal = ord_to_text(i)
    return [_render(t, ordinal, vp) for t in table.semantic_variants]


def make_integrated_prompts(vps: Sequence[str], table: VariantTable) -> List[str]:
    if not vps:
        raise ValueError("integrated prompt needs at least one verb phrase")
    if any(not vp for vp in vps):
        raise ValueError("empty verb phrase")
    ordinals = [ord_to_text(i) for i in range(1, len(vps) + 1)]
    return [INTEGRATED_JOINER.join(_render(t, o, vp) for o, vp in zip(ordinals, vps))
            for t in table.integrated_variants]


def make_activity_prompt(activity: str, template: str = "the person is making {activity}") -> str:
    return template.replace("{activity}", activity)


@dataclass
class PromptBundle:
    statistical: str
    ordinal: List[str]
    semantic: List[List[str]]
    integrated: List[str]

    @property
    def K(self) -> int:
        return len(self.ordinal)


def build_prompt_bundle(cut, vocab, table: VariantTable) -> PromptBundle:
    """Render all four prompt levels for a cut's ordered step list."""
    actions = [a for a, _ in cut.step_labels]
    if not actions:
        raise ValueError(f"cut of {cut.video_id} has no action steps")
    vps = [vocab.name_of(a) for a in actions]
    return PromptBundle(
        statistical=make_statistical_prompt(len(vps)),
        ordinal=[make_ordinal_prompt(i) for i in range(1, len(vps) + 1)],
        semantic=[make_semantic_prompts(i, vp, table) for i, vp in enumerate(vps, start=1)],
        integrated=make_integrated_prompts(vps, table),
    )
