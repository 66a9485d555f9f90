"""Rule-based utterance parsing into coarse dialogue acts.

The parser is deterministic: tokenize, detect arguments (prices on the
bargaining task, item splits on the division task), then walk an ordered
rule list and return the first matching intent.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import (
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DNScenario,
    EventKind,
    Intent,
    ITEMS,
    Money,
    Role,
    Scenario,
    Split,
    bin_price,
    money,
    normalize_price,
)

BOS = "<bos>"
EOS = "<eos>"

PRICE_CAP_FACTOR = Decimal("1.5")

GREET_WORDS = frozenset({"hi", "hello", "hey", "greetings", "howdy"})
DISAGREE_PHRASES = (
    ("no",),
    ("nope",),
    ("can't",),
    ("cannot",),
    ("too", "low"),
    ("too", "high"),
    ("not", "worth"),
)
AGREE_PHRASES = (
    ("deal",),
    ("ok",),
    ("okay",),
    ("sounds", "good"),
    ("sure",),
    ("that", "works"),
    ("thanks",),
    ("thank", "you"),
)
WH_AUX_STARTERS = frozenset(
    {
        "what", "why", "how", "when", "where", "who", "which",
        "is", "are", "do", "does", "can", "could", "would", "will",
    }
)

FIRST_PERSON = frozenset({"i", "me", "my", "mine", "i'll", "i'd", "we", "us", "our"})
SECOND_PERSON = frozenset({"you", "your", "yours", "you'll", "you'd", "u"})

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

_TOKEN_RE = re.compile(
    r"(?P<number>\$?\d+(?:,\d{3})*(?:\.\d+)?[kK]?\$?)"
    r"|(?P<word>[A-Za-z]+(?:'[A-Za-z]+)*)"
    r"|(?P<punct>[^\sA-Za-z0-9])"
)


@dataclass(frozen=True)
class Token:
    surface: str  # lowercased
    span: tuple[int, int]  # character offsets into the original text
    kind: str  # word | number | punctuation
    value: Optional[Decimal] = None  # numeric value, numbers only

    @property
    def dollar_marked(self) -> bool:
        return self.kind == "number" and (self.surface.startswith("$") or self.surface.endswith("$"))


def _number_value(surface: str) -> Optional[Decimal]:
    body = surface.strip("$").replace(",", "")
    scale = 1
    if body.endswith("k"):
        body = body[:-1]
        scale = 1000
    try:
        return Decimal(body) * scale
    except ArithmeticError:
        return None


def tokenize(text: str) -> list[Token]:
    """Lowercased word/number/punctuation tokens with spans into ``text``."""
    tokens: list[Token] = []
    for match in _TOKEN_RE.finditer(text):
        surface = match.group(0).lower()
        span = (match.start(), match.end())
        if match.lastgroup == "number":
            value = _number_value(surface)
            if value is None:
                tokens.append(Token(surface, span, "punctuation"))
            else:
                tokens.append(Token(surface, span, "number", value))
        elif match.lastgroup == "word":
            tokens.append(Token(surface, span, "word"))
        else:
            tokens.append(Token(surface, span, "punctuation"))
    return tokens


@dataclass(frozen=True)
class PriceLexicon:
    """Neighbor words observed next to dollar-marked prices in training data."""

    left_neighbors: frozenset[str] = frozenset()
    right_neighbors: frozenset[str] = frozenset()

    def to_json(self) -> str:
        payload = {
            "left": sorted(self.left_neighbors),
            "right": sorted(self.right_neighbors),
        }
        return json.dumps(payload, sort_keys=True, indent=0)

    @classmethod
    def from_json(cls, blob: str) -> "PriceLexicon":
        payload = json.loads(blob)
        return cls(frozenset(payload["left"]), frozenset(payload["right"]))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PriceLexicon":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_price_lexicon(texts: Iterable[str]) -> PriceLexicon:
    """Collect left/right neighbors of every dollar-marked number in ``texts``."""
    left: set[str] = set()
    right: set[str] = set()
    for text in texts:
        tokens = tokenize(text)
        for i, tok in enumerate(tokens):
            if tok.dollar_marked:
                left.add(tokens[i - 1].surface if i > 0 else BOS)
                right.add(tokens[i + 1].surface if i + 1 < len(tokens) else EOS)
    return PriceLexicon(frozenset(left), frozenset(right))


def detect_price_tokens(
    tokens: Sequence[Token], scenario: CBScenario, lexicon: PriceLexicon
) -> list[tuple[int, Money]]:
    """(token index, price) pairs, in textual order.

    A number is a price if it is dollar-marked, or if both its neighbors
    were seen next to training prices and it is at most 1.5x the listing.
    """
    cap = scenario.listing_price * PRICE_CAP_FACTOR
    found: list[tuple[int, Money]] = []
    for i, tok in enumerate(tokens):
        if tok.kind != "number" or tok.value is None or tok.value < 0:
            continue
        if tok.dollar_marked:
            found.append((i, money(tok.value)))
            continue
        left = tokens[i - 1].surface if i > 0 else BOS
        right = tokens[i + 1].surface if i + 1 < len(tokens) else EOS
        if left in lexicon.left_neighbors and right in lexicon.right_neighbors and tok.value <= cap:
            found.append((i, money(tok.value)))
    return found


def detect_prices(
    tokens: Sequence[Token], scenario: CBScenario, lexicon: PriceLexicon
) -> list[Money]:
    return [price for _, price in detect_price_tokens(tokens, scenario, lexicon)]


@dataclass(frozen=True)
class ParseContext:
    """What the parser may look at besides the utterance itself."""

    scenario: Scenario
    speaker: Role
    prior_events: tuple[DialogueEvent, ...] = ()
    prior_acts: tuple[CoarseDialogueAct, ...] = ()

    @classmethod
    def from_state(cls, state, speaker: Role) -> "ParseContext":
        return cls(state.scenario, speaker, tuple(state.events), tuple(state.acts))

    def latest_argument(self, role: Role) -> Union[Money, Split, None]:
        for event, act in zip(reversed(self.prior_events), reversed(self.prior_acts)):
            if event.role == role and act.argument is not None:
                return act.argument
        return None

    def partner_last_intent(self) -> Optional[Intent]:
        partner = self.speaker.partner
        for event, act in zip(reversed(self.prior_events), reversed(self.prior_acts)):
            if event.role == partner:
                return act.intent
        return None


def _contains_phrase(words: Sequence[str], phrases: Sequence[tuple[str, ...]]) -> bool:
    for phrase in phrases:
        n = len(phrase)
        for i in range(len(words) - n + 1):
            if tuple(words[i : i + n]) == phrase:
                return True
    return False


def _is_counter(context: ParseContext, argument: Union[Money, Split]) -> bool:
    """True when the partner has an outstanding, different proposal."""
    partner_arg = context.latest_argument(context.speaker.partner)
    if partner_arg is None:
        return False
    if isinstance(argument, Money) and isinstance(partner_arg, Money):
        scenario = context.scenario
        assert isinstance(scenario, CBScenario)
        own = bin_price(normalize_price(context.speaker, scenario, argument))
        theirs = bin_price(normalize_price(context.speaker, scenario, partner_arg))
        return own != theirs
    if isinstance(argument, Split) and isinstance(partner_arg, Split):
        return argument.allocation != partner_arg.allocation
    return True


def classify_intent(
    tokens: Sequence[Token],
    argument: Union[Money, Split, None],
    context: ParseContext,
) -> Intent:
    """First match over the ordered rule list; unknown when nothing fires."""
    surfaces = [t.surface for t in tokens]
    words = [t.surface for t in tokens if t.kind == "word"]
    word_set = set(words)

    if len(context.prior_events) < 2 and argument is None and word_set & GREET_WORDS:
        return Intent.GREET
    if argument is not None:
        if _is_counter(context, argument):
            return Intent.COUNTER
        return Intent.PROPOSE
    if _contains_phrase(words, DISAGREE_PHRASES):
        return Intent.DISAGREE
    if _contains_phrase(words, AGREE_PHRASES):
        return Intent.AGREE
    if "?" in surfaces or (words and words[0] in WH_AUX_STARTERS):
        return Intent.INQUIRE
    if tokens and context.partner_last_intent() == Intent.INQUIRE:
        return Intent.INFORM
    return Intent.UNKNOWN


def parse_dn_split(
    tokens: Sequence[Token], scenario: DNScenario, context: ParseContext
) -> Split:
    """Left-to-right grouping of (count, object) pairs with pronoun resolution.

    A bare plural object claims the full count; a bare singular claims one.
    Counts are clamped so the split never exceeds the scenario totals.
    """
    speaker = context.speaker
    current = speaker
    pending: Optional[int] = None
    remaining = dict(scenario.counts)
    alloc: dict[Role, dict[str, int]] = {speaker: {}, speaker.partner: {}}

    for tok in tokens:
        if tok.kind == "word":
            if tok.surface in FIRST_PERSON:
                current = speaker
                continue
            if tok.surface in SECOND_PERSON:
                current = speaker.partner
                continue
            if tok.surface in _NUMBER_WORDS:
                pending = _NUMBER_WORDS[tok.surface]
                continue
            item = _object_item(tok.surface)
            if item is not None:
                plural = tok.surface.endswith("s")
                count = pending if pending is not None else (scenario.counts[item] if plural else 1)
                count = min(count, remaining[item])
                if count > 0:
                    alloc[current][item] = alloc[current].get(item, 0) + count
                    remaining[item] -= count
                pending = None
        elif tok.kind == "number" and tok.value is not None:
            if tok.value == int(tok.value) and 1 <= int(tok.value) <= 10:
                pending = int(tok.value)
    return Split(alloc)


def _object_item(word: str) -> Optional[str]:
    singular = word[:-1] if word.endswith("s") else word
    return singular if singular in ITEMS else None


def canonical_act(act: CoarseDialogueAct, context: ParseContext) -> CoarseDialogueAct:
    """Relabel a planned act's intent the way the rule list would parse it.

    A manager may ask for ``propose`` when the rules would read the same
    utterance as ``counter`` (and vice versa), or for context-bound intents
    (greet, inform) outside the contexts that license them. Aligning the
    intent up front keeps generation faithful under re-parse.
    """
    intent = act.intent
    if act.argument is not None and intent in (Intent.PROPOSE, Intent.COUNTER):
        intent = Intent.COUNTER if _is_counter(context, act.argument) else Intent.PROPOSE
        return CoarseDialogueAct(intent, price=act.price, split=act.split)
    if intent in (Intent.GREET, Intent.INFORM, Intent.UNKNOWN):
        if intent == Intent.GREET and len(context.prior_events) < 2:
            return act
        if context.partner_last_intent() == Intent.INQUIRE:
            return CoarseDialogueAct(Intent.INFORM)
        return CoarseDialogueAct(Intent.UNKNOWN)
    return act


def parse_utterance(
    event: DialogueEvent,
    context: ParseContext,
    lexicon: PriceLexicon,
) -> CoarseDialogueAct:
    """Map one event to its coarse dialogue act (never fails; worst case unknown)."""
    if event.kind == EventKind.OFFER:
        return CoarseDialogueAct(Intent.OFFER, price=event.price, split=event.split)
    if event.kind == EventKind.ACCEPT:
        return CoarseDialogueAct(Intent.ACCEPT)
    if event.kind == EventKind.REJECT:
        return CoarseDialogueAct(Intent.REJECT)
    if event.kind == EventKind.QUIT:
        return CoarseDialogueAct(Intent.QUIT)

    tokens = tokenize(event.text or "")
    scenario = context.scenario
    if isinstance(scenario, CBScenario):
        prices = detect_prices(tokens, scenario, lexicon)
        argument: Union[Money, Split, None] = prices[-1] if prices else None
    else:
        split = parse_dn_split(tokens, scenario, context)
        argument = None if split.is_empty() else split

    intent = classify_intent(tokens, argument, context)
    if intent in (Intent.PROPOSE, Intent.COUNTER):
        if isinstance(argument, Money):
            return CoarseDialogueAct(intent, price=argument)
        return CoarseDialogueAct(intent, split=argument)
    return CoarseDialogueAct(intent)
