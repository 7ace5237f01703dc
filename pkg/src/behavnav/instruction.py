"""Instruction decomposition into navigation and behavioral rules.

An instruction like "go to the mailbox, stay on the sidewalk, and stop for
stop signs" yields ordered navigation (action, landmark) pairs plus
behavioral (action, target) pairs; each behavioral action is scored with a
desirability probability in [0, 1] (1 = seek/remain, 0 = hard stop) that the
cost-map stage turns into pixel costs.

Two paths produce the same structures: a language-model backend through the
gateway, and a deterministic lexicon fallback that needs no network.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

from . import gateway

__all__ = [
    "BEHAV_VERBS",
    "BehaviorRule",
    "DEFAULT_DESIRABILITY",
    "InstructionBundle",
    "LengthMismatch",
    "NAV_VERBS",
    "PromptSet",
    "UnclassifiableClause",
    "build_decompose_request",
    "build_desirability_request",
    "decompose",
    "decompose_fallback",
    "gait_caution_flag",
    "load_prompts",
    "normalize_text",
    "pair_rules",
    "score_desirability",
    "score_desirability_fallback",
    "text_matches",
]

log = logging.getLogger(__name__)

NAV_VERBS = (
    "go forward until",
    "move forward until",
    "navigate to",
    "walk to",
    "go to",
)

BEHAV_VERBS = (
    "stay away from",
    "watch your step",
    "use caution",
    "stay on",
    "stop for",
    "yield to",
    "follow",
    "avoid",
)

# Desirability priors for the offline path; configuration, not ground truth.
DEFAULT_DESIRABILITY: Mapping[str, float] = {
    "stay on": 0.9,
    "follow": 0.9,
    "use caution": 0.5,
    "watch your step": 0.5,
    "yield to": 0.2,
    "stay away from": 0.1,
    "avoid": 0.1,
    "stop for": 0.0,
}

# Object phrases the fallback rewrites after article stripping.
TARGET_ALIASES: Mapping[str, str] = {
    "stop signs": "stop sign",
}

_CAUTION_VERBS = ("use caution", "watch your step")
_CAUTION_DEFAULT_TARGET = "ground"
_NAV_FILLERS = ("you see", "you reach", "you find", "you arrive at", "you get to", "there is")
_CONNECTIVES = ("to", "on", "at", "in", "near", "around", "for", "of")
_ARTICLES = ("the", "a", "an")


class LengthMismatch(Exception):
    """Behavioral actions and desirability values must pair one-to-one."""


class UnclassifiableClause(Exception):
    """One or more clauses matched no lexicon verb.

    Carries the offending clause texts and the bundle built from the clauses
    that did parse, so callers can log and keep going.
    """

    def __init__(self, clauses: Sequence[str], bundle: "InstructionBundle | None" = None):
        self.clauses = list(clauses)
        self.bundle = bundle
        super().__init__("; ".join(self.clauses))


def normalize_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation."""
    out = re.sub(r"\s+", " ", text.lower()).strip()
    return out.rstrip(".!?,;:").strip()


def text_matches(a: str, b: str) -> bool:
    """Substring match in either direction after normalization."""
    na, nb = normalize_text(a), normalize_text(b)
    if not na or not nb:
        return False
    return na in nb or nb in na


@dataclass
class InstructionBundle:
    """Ordered decomposition of one instruction."""

    nav_actions: list[str] = field(default_factory=list)
    nav_landmarks: list[str] = field(default_factory=list)
    behav_actions: list[str] = field(default_factory=list)
    behav_targets: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.nav_actions) != len(self.nav_landmarks):
            raise ValueError("nav_actions and nav_landmarks must pair one-to-one")
        if len(self.behav_actions) != len(self.behav_targets):
            raise ValueError("behav_actions and behav_targets must pair one-to-one")
        for entries in (self.nav_actions, self.nav_landmarks, self.behav_actions, self.behav_targets):
            for e in entries:
                if not e or not e.strip():
                    raise ValueError("bundle entries must be non-empty")


@dataclass(frozen=True)
class BehaviorRule:
    action: str
    target: str
    desirability: float

    def __post_init__(self):
        if not 0.0 <= self.desirability <= 1.0:
            raise ValueError(f"desirability {self.desirability} outside [0, 1]")

    @property
    def undesirability(self) -> float:
        return 1.0 - self.desirability


@dataclass
class PromptSet:
    decompose_prompt: str
    action_prompt: str
    frontier_prompt: str
    instruction: str = ""


def load_prompts(instruction: str = "") -> PromptSet:
    """Load the shipped prompt templates."""
    root = resources.files("behavnav.prompts")
    return PromptSet(
        decompose_prompt=(root / "decompose.txt").read_text(encoding="utf-8"),
        action_prompt=(root / "action.txt").read_text(encoding="utf-8"),
        frontier_prompt=(root / "frontier.txt").read_text(encoding="utf-8"),
        instruction=instruction,
    )


def render_prompt(template: str, **subs: str) -> str:
    """Literal {key} substitution; template braces elsewhere stay untouched."""
    out = template
    for key, value in subs.items():
        out = out.replace("{" + key + "}", value)
    return out


def _match_verb(clause: str, verbs: Sequence[str]) -> tuple[str, str] | None:
    for verb in sorted(verbs, key=len, reverse=True):
        if clause == verb:
            return verb, ""
        if clause.startswith(verb + " "):
            return verb, clause[len(verb) + 1 :].strip()
    return None


def _strip_leading(text: str, words: Sequence[str]) -> str:
    for w in words:
        if text == w:
            return ""
        if text.startswith(w + " "):
            return text[len(w) + 1 :].strip()
    return text


def _split_clauses(instruction: str) -> list[str]:
    pieces: list[str] = []
    for chunk in normalize_text(instruction).split(","):
        chunk = chunk.strip().rstrip(".!?;:").strip()
        if chunk:
            pieces.append(chunk)
    # split "x and stay on y" style joins, but only where a lexicon verb follows
    out: list[str] = []
    verbs = NAV_VERBS + BEHAV_VERBS
    for piece in pieces:
        piece = _strip_leading(piece, ("and then", "and", "then"))
        while True:
            cut = None
            for m in re.finditer(r" (?:and then|and|then) ", piece):
                rest = piece[m.end() :].strip()
                if _match_verb(rest, verbs) is not None:
                    cut = (piece[: m.start()].strip(), rest)
                    break
            if cut is None:
                break
            if cut[0]:
                out.append(cut[0])
            piece = cut[1]
        if piece:
            out.append(piece)
    return out


def _normalize_behav_target(remainder: str) -> str:
    t = _strip_leading(remainder, _CONNECTIVES)
    matched = _match_verb(t, BEHAV_VERBS)
    if matched is not None:
        t = matched[1]
    t = _strip_leading(t, _ARTICLES)
    return TARGET_ALIASES.get(t, t)


def decompose_fallback(instruction: str) -> InstructionBundle:
    """Deterministic lexicon decomposition; no backend involved.

    Clauses are split on commas and on and/then joins that introduce a new
    lexicon verb. Clauses matching no verb are skipped; if any were skipped,
    an UnclassifiableClause carrying them and the partial bundle is raised
    after the full parse.
    """
    bundle = InstructionBundle()
    skipped: list[str] = []
    for clause in _split_clauses(instruction):
        nav = _match_verb(clause, NAV_VERBS)
        if nav is not None:
            verb, rest = nav
            rest = _strip_leading(rest, _NAV_FILLERS)
            if rest:
                bundle.nav_actions.append(verb)
                bundle.nav_landmarks.append(rest)
            else:
                skipped.append(clause)
            continue
        behav = _match_verb(clause, BEHAV_VERBS)
        if behav is not None:
            verb, rest = behav
            target = _normalize_behav_target(rest)
            if not target and verb in _CAUTION_VERBS:
                target = _CAUTION_DEFAULT_TARGET
            if target:
                bundle.behav_actions.append(verb)
                bundle.behav_targets.append(target)
            else:
                skipped.append(clause)
            continue
        skipped.append(clause)
    if skipped:
        raise UnclassifiableClause(skipped, bundle)
    return bundle


def score_desirability_fallback(
    actions: Sequence[str], table: Mapping[str, float] | None = None
) -> list[float]:
    """Look up desirability priors; unknown actions score 0.5 with a warning."""
    merged = dict(DEFAULT_DESIRABILITY)
    if table:
        merged.update({normalize_text(k): float(v) for k, v in table.items()})
    out = []
    for action in actions:
        key = normalize_text(action)
        if key not in merged:
            log.warning("no desirability prior for action %r, using 0.5", action)
        out.append(min(1.0, max(0.0, merged.get(key, 0.5))))
    return out


def build_decompose_request(instruction: str, prompts: PromptSet) -> dict:
    return {
        "schema": "decompose",
        "prompt": render_prompt(prompts.decompose_prompt, instruction=instruction),
        "instruction": instruction,
    }


def build_desirability_request(actions: Sequence[str], prompts: PromptSet) -> dict:
    return {
        "schema": "desirability",
        "prompt": render_prompt(prompts.action_prompt, actions=", ".join(actions)),
        "actions": list(actions),
    }


def decompose(instruction: str, prompts: PromptSet, backend: "gateway.GatewayClient") -> InstructionBundle:
    """Decompose through the language backend; one call per mission."""
    response = backend.call(build_decompose_request(instruction, prompts))
    parsed = gateway.validate(response, "decompose")
    lists = {k: [normalize_text(e) for e in v] for k, v in parsed.items()}
    for key, entries in lists.items():
        for i, e in enumerate(entries):
            if not e:
                raise gateway.MalformedResponse(f"{key}[{i}]", "entry empty after normalization")
    return InstructionBundle(
        nav_actions=lists["nav_actions"],
        nav_landmarks=lists["nav_landmarks"],
        behav_actions=lists["behav_actions"],
        behav_targets=lists["behav_targets"],
    )


def score_desirability(
    actions: Sequence[str], prompts: PromptSet, backend: "gateway.GatewayClient"
) -> list[float]:
    """Score behavioral actions through the language backend.

    Values up to 0.01 outside [0, 1] are clamped; anything further is
    rejected by the gateway schema.
    """
    if not actions:
        return []
    response = backend.call(build_desirability_request(actions, prompts))
    values = gateway.validate(response, "desirability")
    if len(values) != len(actions):
        raise gateway.MalformedResponse("values", f"expected {len(actions)} values, got {len(values)}")
    return [min(1.0, max(0.0, v)) for v in values]


def pair_rules(bundle: InstructionBundle, desirability: Sequence[float]) -> list[BehaviorRule]:
    """Zip behavioral actions/targets with their desirability scores."""
    if len(desirability) != len(bundle.behav_actions):
        raise LengthMismatch(
            f"{len(bundle.behav_actions)} behavioral actions, {len(desirability)} scores"
        )
    return [
        BehaviorRule(action=a, target=t, desirability=float(p))
        for a, t, p in zip(bundle.behav_actions, bundle.behav_targets, desirability)
    ]


def gait_caution_flag(behav_actions: Sequence[str]) -> bool:
    """True when any action asks for careful stepping."""
    for action in behav_actions:
        a = normalize_text(action)
        if "use caution" in a or ("watch" in a and "step" in a):
            return True
    return False
