"""Retrieval-based generation: realize a dialogue act as an utterance.

Training utterances become delexicalized templates; at generation time
candidates with the requested intent pair are ranked by TF-IDF context
similarity and sampled through a trigram language model. A re-parse guard
keeps the emitted text faithful to the requested intent.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

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
from .lm import TrigramLM
from .parser import (
    FIRST_PERSON,
    ParseContext,
    PriceLexicon,
    SECOND_PERSON,
    Token,
    _NUMBER_WORDS,
    _object_item,
    detect_price_tokens,
    parse_utterance,
    tokenize,
)

PRICE_SLOT = "[price]"
SPLIT_SLOT = "[split]"


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Template:
    """Utterance tokens with argument spans replaced by typed placeholders."""

    tokens: tuple[str, ...]
    source_id: str = ""

    def render(self) -> str:
        return " ".join(self.tokens)

    @property
    def placeholders(self) -> list[str]:
        return [t for t in self.tokens if t in (PRICE_SLOT, SPLIT_SLOT)]

    def terms(self) -> list[str]:
        return [t.lower() for t in self.tokens]


@dataclass(frozen=True)
class Candidate:
    """One retrieval tuple: (context template, z_prev, response template, z_next)."""

    context_template: Template
    context_intent: Intent
    response_template: Template
    response_intent: Intent
    source_id: str
    seq: int


TfIdfVector = dict[str, float]


def _string_tokens(text: str) -> list[str]:
    """Original-case token strings, used for template construction."""
    return [text[t.span[0] : t.span[1]] for t in tokenize(text)]


def _dn_argument_indices(tokens: Sequence[Token]) -> list[int]:
    """Indices of tokens that take part in split detection."""
    hits = []
    for i, tok in enumerate(tokens):
        if tok.kind == "word":
            if tok.surface in FIRST_PERSON or tok.surface in SECOND_PERSON:
                hits.append(i)
            elif tok.surface in _NUMBER_WORDS or _object_item(tok.surface) is not None:
                hits.append(i)
        elif tok.kind == "number" and tok.value is not None:
            if tok.value == int(tok.value) and 1 <= int(tok.value) <= 10:
                hits.append(i)
    return hits


def extract_template(
    utterance: str,
    act: CoarseDialogueAct,
    scenario: Scenario,
    lexicon: Optional[PriceLexicon] = None,
    source_id: str = "",
) -> Template:
    """Replace the act's argument span with its typed placeholder.

    The span substituted for a price is the last detected occurrence of the
    act's price (the one the parser bound); earlier mentions stay literal.
    """
    tokens = tokenize(utterance)
    surface = _string_tokens(utterance)
    if act.price is not None and isinstance(scenario, CBScenario):
        lex = lexicon if lexicon is not None else PriceLexicon()
        matches = [
            i for i, price in detect_price_tokens(tokens, scenario, lex) if price == act.price
        ]
        if matches:
            surface[matches[-1]] = PRICE_SLOT
    elif act.split is not None and isinstance(scenario, DNScenario):
        hits = _dn_argument_indices(tokens)
        if hits:
            lo, hi = hits[0], hits[-1]
            surface = surface[:lo] + [SPLIT_SLOT] + surface[hi + 1 :]
    return Template(tuple(surface), source_id)


def tf_idf_vector(template: Template, idf: Mapping[str, float]) -> TfIdfVector:
    counts: dict[str, int] = {}
    for term in template.terms():
        counts[term] = counts.get(term, 0) + 1
    vec = {}
    for term, tf in counts.items():
        weight = tf * idf.get(term, 0.0)
        if weight != 0.0:
            vec[term] = weight
    return vec


def similarity(a: TfIdfVector, b: TfIdfVector) -> float:
    if len(b) < len(a):
        a, b = b, a
    return sum(w * b[t] for t, w in a.items() if t in b)


@dataclass
class GeneratorConfig:
    k: int = 10
    smoothing: float = 0.1
    length_normalize: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


class RetrievalIndex:
    """Candidate store with its idf table and response-template trigram LM."""

    VERSION = 1

    def __init__(
        self,
        candidates: Sequence[Candidate],
        idf: Mapping[str, float],
        lm: TrigramLM,
    ):
        self.candidates = list(candidates)
        self.idf = dict(idf)
        self.lm = lm
        self.vectors = [tf_idf_vector(c.context_template, self.idf) for c in self.candidates]
        self._by_pair: dict[tuple[str, str], list[int]] = {}
        self._by_intent: dict[str, list[int]] = {}
        for i, cand in enumerate(self.candidates):
            pair = (cand.context_intent.value, cand.response_intent.value)
            self._by_pair.setdefault(pair, []).append(i)
            self._by_intent.setdefault(cand.response_intent.value, []).append(i)

    def __len__(self) -> int:
        return len(self.candidates)

    def candidate_ids(self, response_intent: Intent, context_intent: Optional[Intent]) -> list[int]:
        if context_intent is not None:
            ids = self._by_pair.get((context_intent.value, response_intent.value), [])
            if ids:
                return ids
        return self._by_intent.get(response_intent.value, [])

    def to_payload(self) -> dict:
        return {
            "version": self.VERSION,
            "idf": {k: self.idf[k] for k in sorted(self.idf)},
            "candidates": [
                {
                    "context_tokens": list(c.context_template.tokens),
                    "context_intent": c.context_intent.value,
                    "response_tokens": list(c.response_template.tokens),
                    "response_intent": c.response_intent.value,
                    "source_id": c.source_id,
                }
                for c in self.candidates
            ],
            "lm": self.lm.to_payload(),
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "RetrievalIndex":
        if payload.get("version") != cls.VERSION:
            raise ValueError(f"unsupported index version {payload.get('version')!r}")
        candidates = [
            Candidate(
                context_template=Template(tuple(c["context_tokens"]), c["source_id"]),
                context_intent=Intent(c["context_intent"]),
                response_template=Template(tuple(c["response_tokens"]), c["source_id"]),
                response_intent=Intent(c["response_intent"]),
                source_id=c["source_id"],
                seq=i,
            )
            for i, c in enumerate(payload["candidates"])
        ]
        lm = TrigramLM.from_payload(payload["lm"])
        return cls(candidates, payload["idf"], lm)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_payload(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RetrievalIndex":
        return cls.from_payload(json.loads(Path(path).read_text(encoding="utf-8")))


def build_index(
    parsed_dialogues: Sequence,
    lexicon: PriceLexicon,
    config: Optional[GeneratorConfig] = None,
) -> RetrievalIndex:
    """One candidate per adjacent (message, message) event pair."""
    config = config or GeneratorConfig()
    candidates: list[Candidate] = []
    for d_idx, dialogue in enumerate(parsed_dialogues):
        events = dialogue.record.events
        acts = [act for _, act in dialogue.turns]
        for i in range(1, len(events)):
            if events[i - 1].kind != EventKind.MESSAGE or events[i].kind != EventKind.MESSAGE:
                continue
            source = f"{d_idx}:{i}"
            ctx_t = extract_template(
                events[i - 1].text, acts[i - 1], dialogue.scenario, lexicon, source
            )
            resp_t = extract_template(
                events[i].text, acts[i], dialogue.scenario, lexicon, source
            )
            candidates.append(
                Candidate(ctx_t, acts[i - 1].intent, resp_t, acts[i].intent, source, len(candidates))
            )
    n = len(candidates)
    df: dict[str, int] = {}
    for cand in candidates:
        for term in set(cand.context_template.terms()):
            df[term] = df.get(term, 0) + 1
    idf = {term: math.log(n / count) for term, count in df.items()} if n else {}
    lm = TrigramLM(smoothing=config.smoothing)
    lm.fit(cand.response_template.terms() for cand in candidates)
    return RetrievalIndex(candidates, idf, lm)


def retrieve(
    index: RetrievalIndex,
    response_act: CoarseDialogueAct,
    context_act: Optional[CoarseDialogueAct],
    context_template: Optional[Template],
    require_placeholder: bool = False,
) -> list[Candidate]:
    """Same-intent candidates ranked by context similarity (ties by source order)."""
    if len(index) == 0:
        raise GenerationError("retrieval index is empty")
    ctx_intent = context_act.intent if context_act is not None else None
    ids = index.candidate_ids(response_act.intent, ctx_intent)
    if require_placeholder:
        slot = PRICE_SLOT if response_act.price is not None else SPLIT_SLOT
        ids = [i for i in ids if slot in index.candidates[i].response_template.tokens]
    if not ids:
        raise GenerationError(f"no candidates for intent {response_act.intent.value!r}")
    query = (
        tf_idf_vector(context_template, index.idf) if context_template is not None else {}
    )
    scored = [(-similarity(query, index.vectors[i]), index.candidates[i].seq, i) for i in ids]
    scored.sort()
    return [index.candidates[i] for _, _, i in scored]


def lm_logprob(lm: TrigramLM, template: Template, length_normalize: bool = True) -> float:
    return lm.logprob(template.terms(), normalize=length_normalize)


def sample_response(
    ranked: Sequence[Candidate],
    lm: TrigramLM,
    config: GeneratorConfig,
    rng: np.random.Generator,
) -> Candidate:
    """Sample from the top K by softmax of (length-normalized) LM scores."""
    if not ranked:
        raise GenerationError("nothing to sample from")
    top = list(ranked[: config.k])
    if len(top) == 1:
        return top[0]
    scores = np.array(
        [lm_logprob(lm, c.response_template, config.length_normalize) for c in top]
    )
    scores -= scores.max()
    probs = np.exp(scores)
    probs /= probs.sum()
    return top[int(rng.choice(len(top), p=probs))]


def format_price(price: Money) -> str:
    """Dollar rendering at cent precision with a bare amount when whole."""
    text = f"{price:.2f}"
    if text.endswith(".00"):
        text = text[:-3]
    return f"${text}"


def _split_phrase(split: Split, scenario: DNScenario, role: Role) -> str:
    complete = split.completed(scenario, remainder_to=role.partner)

    def side(who: Role) -> str:
        parts = []
        for item in ITEMS:
            n = complete.count_for(who, item)
            if n > 0:
                parts.append(f"{n} {item}{'s' if n > 1 else ''}")
        return " and ".join(parts) if parts else "nothing"

    return f"i take {side(role)} , you take {side(role.partner)}"


def lexicalize(
    template: Template,
    act: CoarseDialogueAct,
    scenario: Scenario,
    role: Role,
) -> str:
    """Fill the template's placeholders from the act's arguments."""
    slots = template.placeholders
    if act.price is not None:
        if slots != [PRICE_SLOT]:
            raise ValueError(f"template {template.render()!r} does not fit a priced act")
        filler = format_price(act.price)
        return " ".join(filler if t == PRICE_SLOT else t for t in template.tokens)
    if act.split is not None:
        if slots != [SPLIT_SLOT]:
            raise ValueError(f"template {template.render()!r} does not fit a split act")
        assert isinstance(scenario, DNScenario)
        filler = _split_phrase(act.split, scenario, role)
        return " ".join(filler if t == SPLIT_SLOT else t for t in template.tokens)
    if slots:
        raise ValueError(f"template {template.render()!r} has unfilled placeholders")
    return template.render()


# Minimal per-intent phrasings used when no retrieved candidate survives the
# re-parse guard. Chosen to parse back to their intent in any consistent
# context.
FALLBACK_TEMPLATES: dict[Intent, Template] = {
    Intent.GREET: Template(("hello",)),
    Intent.INQUIRE: Template(("is", "it", "still", "available", "?")),
    Intent.INFORM: Template(("it", "is", "in", "good", "condition")),
    Intent.PROPOSE: Template(("how", "about", PRICE_SLOT, "?")),
    Intent.COUNTER: Template(("how", "about", PRICE_SLOT, "?")),
    Intent.AGREE: Template(("okay", ",", "deal")),
    Intent.DISAGREE: Template(("no", ",", "i", "can't", "do", "that")),
    Intent.UNKNOWN: Template(("well", "then",)),
}

FALLBACK_DN_TEMPLATES: dict[Intent, Template] = {
    **FALLBACK_TEMPLATES,
    Intent.PROPOSE: Template((SPLIT_SLOT,)),
    Intent.COUNTER: Template((SPLIT_SLOT,)),
}


def _acts_match(requested: CoarseDialogueAct, reparsed: CoarseDialogueAct, scenario, role) -> bool:
    if requested.intent != reparsed.intent:
        return False
    if requested.price is not None:
        if reparsed.price is None or not isinstance(scenario, CBScenario):
            return False
        want = bin_price(normalize_price(role, scenario, requested.price))
        got = bin_price(normalize_price(role, scenario, reparsed.price))
        return want == got
    return True


def realize(
    index: RetrievalIndex,
    act: CoarseDialogueAct,
    context_act: Optional[CoarseDialogueAct],
    context_template: Optional[Template],
    parse_context: ParseContext,
    lexicon: PriceLexicon,
    config: GeneratorConfig,
    rng: np.random.Generator,
) -> str:
    """Generate an utterance for ``act`` that re-parses to the same act.

    Samples from the top K; candidates whose lexicalization drifts under
    re-parse are skipped in ranked order, ending at a canonical fallback
    phrase.
    """
    scenario = parse_context.scenario
    role = parse_context.speaker
    needs_slot = act.argument is not None

    def check(text: str) -> bool:
        event = DialogueEvent(len(parse_context.prior_events), role, EventKind.MESSAGE, text=text)
        reparsed = parse_utterance(event, parse_context, lexicon)
        return _acts_match(act, reparsed, scenario, role)

    try:
        ranked = retrieve(index, act, context_act, context_template, require_placeholder=needs_slot)
    except GenerationError:
        ranked = []
    if ranked:
        chosen = sample_response(ranked, index.lm, config, rng)
        ordering = [chosen] + [c for c in ranked if c.seq != chosen.seq]
        for candidate in ordering:
            try:
                text = lexicalize(candidate.response_template, act, scenario, role)
            except ValueError:
                continue
            if check(text):
                return text
    table = FALLBACK_DN_TEMPLATES if isinstance(scenario, DNScenario) else FALLBACK_TEMPLATES
    fallback = table.get(act.intent)
    if fallback is None:
        raise GenerationError(f"no way to realize intent {act.intent.value!r}")
    return lexicalize(fallback, act, scenario, role)
