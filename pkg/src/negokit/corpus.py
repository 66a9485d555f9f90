"""Corpus ingestion, scenario generation, statistics and parsed export.

The canonical on-disk format is a JSON array of dialogue records. A
tolerant importer maps the published bargaining dataset's layout onto the
same records, skipping (and reporting) anything it cannot read.
"""
from __future__ import annotations

import json
import logging
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
    money,
)
from .parser import ParseContext, PriceLexicon, build_price_lexicon, parse_utterance, tokenize

logger = logging.getLogger(__name__)

DEFAULT_MULTIPLIERS = (Decimal("0.5"), Decimal("0.7"), Decimal("0.9"))
CATEGORIES = ("housing", "furniture", "cars", "bikes", "phones", "electronics")


class CorpusFormatError(ValueError):
    def __init__(self, message: str, record_index: Optional[int] = None):
        prefix = f"record {record_index}: " if record_index is not None else ""
        super().__init__(prefix + message)
        self.record_index = record_index


@dataclass(frozen=True)
class OutcomeRecord:
    agreement: bool
    final_price: Optional[Money] = None
    final_split: Optional[Split] = None


@dataclass(frozen=True)
class DialogueRecord:
    scenario: Scenario
    events: tuple[DialogueEvent, ...]
    outcome: Optional[OutcomeRecord] = None


@dataclass(frozen=True)
class ParsedDialogue:
    """A record with its acts, one per event, in order."""

    record: DialogueRecord
    acts: tuple[CoarseDialogueAct, ...]

    @property
    def scenario(self) -> Scenario:
        return self.record.scenario

    @property
    def turns(self) -> tuple[tuple[Role, CoarseDialogueAct], ...]:
        return tuple((e.role, a) for e, a in zip(self.record.events, self.acts))


@dataclass(frozen=True)
class LoadResult:
    records: tuple[DialogueRecord, ...]
    skipped: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class CorpusStats:
    num_dialogues: int
    avg_turns: float
    avg_tokens_per_turn: float
    vocab_size: int
    vocab_size_excluding_numbers: int


# ---------------------------------------------------------------------------
# Canonical JSON schema
# ---------------------------------------------------------------------------


def _scenario_to_json(scenario: Scenario) -> dict:
    if isinstance(scenario, CBScenario):
        return {
            "kind": "cb",
            "category": scenario.category,
            "title": scenario.title,
            "description": scenario.description,
            "listing_price": float(scenario.listing_price),
            "buyer_target": float(scenario.buyer_target),
        }
    return {
        "kind": "dn",
        "counts": dict(scenario.counts),
        "values": {role.value: dict(vals) for role, vals in scenario.values.items()},
    }


def _split_to_json(split: Split) -> dict:
    return {role.value: dict(items) for role, items in split.allocation.items()}


def _split_from_json(payload: dict) -> Split:
    return Split({Role(role): items for role, items in payload.items()})


def _event_to_json(event: DialogueEvent) -> dict:
    out: dict = {"turn": event.turn, "role": event.role.value, "kind": event.kind.value}
    if event.text is not None:
        out["text"] = event.text
    if event.price is not None:
        out["price"] = float(event.price)
    if event.split is not None:
        out["split"] = _split_to_json(event.split)
    return out


def record_to_json(record: DialogueRecord) -> dict:
    out: dict = {
        "scenario": _scenario_to_json(record.scenario),
        "events": [_event_to_json(e) for e in record.events],
    }
    if record.outcome is not None:
        o: dict = {"agreement": record.outcome.agreement}
        if record.outcome.final_price is not None:
            o["final_price"] = float(record.outcome.final_price)
        if record.outcome.final_split is not None:
            o["final_split"] = _split_to_json(record.outcome.final_split)
        out["outcome"] = o
    return out


def _record_from_json(payload: dict, index: int) -> DialogueRecord:
    try:
        sc = payload["scenario"]
        kind = sc.get("kind", "cb")
        if kind == "cb":
            scenario: Scenario = CBScenario(
                category=sc["category"],
                title=sc["title"],
                description=sc["description"],
                listing_price=money(sc["listing_price"]),
                buyer_target=money(sc["buyer_target"]),
            )
        elif kind == "dn":
            scenario = DNScenario(
                counts=sc["counts"],
                values={Role(r): v for r, v in sc["values"].items()},
            )
        else:
            raise CorpusFormatError(f"unknown scenario kind {kind!r}", index)
        events = []
        for ev in payload["events"]:
            events.append(
                DialogueEvent(
                    turn=int(ev["turn"]),
                    role=Role(ev["role"]),
                    kind=EventKind(ev["kind"]),
                    text=ev.get("text"),
                    price=money(ev["price"]) if "price" in ev else None,
                    split=_split_from_json(ev["split"]) if "split" in ev else None,
                )
            )
        outcome = None
        if "outcome" in payload:
            o = payload["outcome"]
            outcome = OutcomeRecord(
                agreement=bool(o["agreement"]),
                final_price=money(o["final_price"]) if "final_price" in o else None,
                final_split=_split_from_json(o["final_split"]) if "final_split" in o else None,
            )
        return DialogueRecord(scenario, tuple(events), outcome)
    except CorpusFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(str(exc), index) from exc


def _record_from_cocoa(payload: dict, index: int) -> DialogueRecord:
    """Best-effort mapping of the published dataset's example layout."""
    try:
        kbs = payload["scenario"]["kbs"]
        listing = target = None
        title = description = ""
        category = payload["scenario"].get("category", "unknown")
        agent_roles: dict[int, Role] = {}
        for agent_idx, kb in enumerate(kbs):
            personal = kb.get("personal", {})
            item = kb.get("item", {})
            role_name = str(personal.get("Role", "")).lower()
            if role_name in ("buyer", "seller"):
                agent_roles[agent_idx] = Role(role_name)
            if role_name == "buyer" and "Target" in personal:
                target = money(personal["Target"])
            if "Price" in item and item["Price"] is not None:
                listing = money(item["Price"])
            if item.get("Title"):
                title = str(item["Title"])
            desc = item.get("Description")
            if isinstance(desc, list):
                description = " ".join(str(d) for d in desc)
            elif desc:
                description = str(desc)
        if listing is None or target is None:
            raise CorpusFormatError("missing listing or target price", index)
        scenario = CBScenario(category, title, description, listing, target)
        events = []
        for ev in payload["events"]:
            agent = int(ev.get("agent", 0))
            role = agent_roles.get(agent, Role.BUYER if agent == 0 else Role.SELLER)
            action = str(ev.get("action", "")).lower()
            data = ev.get("data")
            if action == "message" and isinstance(data, str):
                events.append(DialogueEvent(len(events), role, EventKind.MESSAGE, text=data))
            elif action == "offer" and isinstance(data, dict) and "price" in data:
                events.append(
                    DialogueEvent(len(events), role, EventKind.OFFER, price=money(data["price"]))
                )
            elif action in ("accept", "reject", "quit"):
                events.append(DialogueEvent(len(events), role, EventKind(action)))
            # other actions (typing, join, ...) are dropped
        outcome = None
        raw_outcome = payload.get("outcome")
        if isinstance(raw_outcome, dict):
            offer = raw_outcome.get("offer")
            agreement = bool(raw_outcome.get("reward", 0))
            price = None
            if isinstance(offer, dict) and offer.get("price") is not None:
                price = money(offer["price"])
            outcome = OutcomeRecord(agreement, price if agreement else None)
        return DialogueRecord(scenario, tuple(events), outcome)
    except CorpusFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorpusFormatError(str(exc), index) from exc


def load_corpus(path: Union[str, Path], format: str = "canonical") -> LoadResult:
    """Read a corpus file; canonical mode is strict, cocoa-import skips and logs."""
    if format not in ("canonical", "cocoa-import"):
        raise ValueError(f"unknown corpus format {format!r}")
    raw = Path(path).read_text(encoding="utf-8")
    payload = json.loads(raw)
    if not isinstance(payload, list):
        raise CorpusFormatError("corpus file must contain a JSON array")
    records: list[DialogueRecord] = []
    skipped: list[tuple[int, str]] = []
    for i, entry in enumerate(payload):
        if format == "canonical":
            records.append(_record_from_json(entry, i))
        else:
            try:
                records.append(_record_from_cocoa(entry, i))
            except CorpusFormatError as exc:
                logger.warning("skipping record %d: %s", i, exc)
                skipped.append((i, str(exc)))
    return LoadResult(tuple(records), tuple(skipped))


def save_corpus(records: Sequence[DialogueRecord], path: Union[str, Path]) -> None:
    blob = json.dumps([record_to_json(r) for r in records], sort_keys=True, indent=1)
    Path(path).write_text(blob, encoding="utf-8")


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Posting:
    category: str
    title: str
    description: str
    listing_price: Money


def generate_scenarios(
    posting: Posting, multipliers: Sequence[Union[Decimal, float]] = DEFAULT_MULTIPLIERS
) -> list[CBScenario]:
    """One scenario per target multiplier of the listing price."""
    if posting.listing_price <= 0:
        raise ValueError("listing price must be positive")
    scenarios = []
    for m in multipliers:
        m = Decimal(str(m))
        if not (0 < m < 1):
            raise ValueError(f"target multiplier must be in (0, 1), got {m}")
        scenarios.append(
            CBScenario(
                category=posting.category,
                title=posting.title,
                description=posting.description,
                listing_price=posting.listing_price,
                buyer_target=money(posting.listing_price * m),
            )
        )
    return scenarios


# ---------------------------------------------------------------------------
# Statistics and parsed export
# ---------------------------------------------------------------------------


def corpus_stats(records: Sequence[DialogueRecord]) -> CorpusStats:
    """Turn, token and vocabulary statistics (punctuation is not vocabulary)."""
    if not records:
        raise ValueError("empty corpus")
    total_events = 0
    total_tokens = 0
    vocab: set[str] = set()
    vocab_words: set[str] = set()
    for record in records:
        total_events += len(record.events)
        for event in record.events:
            if event.kind != EventKind.MESSAGE:
                continue
            for tok in tokenize(event.text or ""):
                if tok.kind == "punctuation":
                    total_tokens += 1
                    continue
                total_tokens += 1
                vocab.add(tok.surface)
                if tok.kind == "word":
                    vocab_words.add(tok.surface)
    return CorpusStats(
        num_dialogues=len(records),
        avg_turns=total_events / len(records),
        avg_tokens_per_turn=total_tokens / total_events if total_events else 0.0,
        vocab_size=len(vocab),
        vocab_size_excluding_numbers=len(vocab_words),
    )


def parse_corpus(
    records: Sequence[DialogueRecord], lexicon: PriceLexicon
) -> list[ParsedDialogue]:
    """Annotate every event with its coarse dialogue act."""
    parsed = []
    for record in records:
        acts: list[CoarseDialogueAct] = []
        for i, event in enumerate(record.events):
            ctx = ParseContext(
                scenario=record.scenario,
                speaker=event.role,
                prior_events=tuple(record.events[:i]),
                prior_acts=tuple(acts),
            )
            acts.append(parse_utterance(event, ctx, lexicon))
        parsed.append(ParsedDialogue(record, tuple(acts)))
    return parsed


def lexicon_from_records(records: Sequence[DialogueRecord]) -> PriceLexicon:
    texts = [
        event.text
        for record in records
        if isinstance(record.scenario, CBScenario)
        for event in record.events
        if event.kind == EventKind.MESSAGE and event.text
    ]
    return build_price_lexicon(texts)


def _act_to_json(act: CoarseDialogueAct) -> dict:
    out: dict = {"intent": act.intent.value}
    if act.price is not None:
        out["price"] = float(act.price)
    if act.split is not None:
        out["split"] = _split_to_json(act.split)
    return out


def export_parsed(
    records: Sequence[DialogueRecord],
    lexicon: PriceLexicon,
    path: Optional[Union[str, Path]] = None,
) -> str:
    """Deterministic, byte-stable JSON of the corpus with per-event acts."""
    parsed = parse_corpus(records, lexicon)
    payload = []
    for dialogue in parsed:
        entry = record_to_json(dialogue.record)
        for ev_json, act in zip(entry["events"], dialogue.acts):
            ev_json["act"] = _act_to_json(act)
        payload.append(entry)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    if path is not None:
        Path(path).write_text(blob, encoding="utf-8")
    return blob
