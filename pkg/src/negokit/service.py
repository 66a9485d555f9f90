"""Session service: live human-vs-bot dialogues behind a small API surface.

Sessions are independent and internally serialized; terminal transcripts
append to a JSON-lines file per day so they can be re-ingested as corpus
data.
"""
from __future__ import annotations

import datetime as _dt
import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import (
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DialogueState,
    DialogueStatus,
    EventKind,
    Intent,
    Role,
    Scenario,
    money,
)
from .corpus import DialogueRecord, OutcomeRecord, record_to_json
from .generator import extract_template, realize
from .parser import ParseContext, canonical_act, parse_utterance
from .rewards import outcome_from_state
from .simulator import AgentSpec, EngineArtifacts, EpisodeConfig, _Runtime, _sanitize
from .synth import synth_dialogues
from .corpus import generate_scenarios
from .synth import synth_postings

BOT_KINDS = ("hybrid", "sl_act", "rl_act")


class ServiceError(Exception):
    pass


class UnknownBotError(ServiceError):
    pass


class SessionNotFoundError(ServiceError):
    pass


class NotYourTurnError(ServiceError):
    pass


class SessionFinishedError(ServiceError):
    pass


class SessionActiveError(ServiceError):
    pass


class BadEventError(ServiceError):
    pass


@dataclass
class Session:
    id: str
    state: DialogueState
    human_role: Role
    bot_kind: str
    bot: _Runtime
    rng: np.random.Generator
    created_at: str
    survey: Optional[int] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def bot_role(self) -> Role:
        return self.human_role.partner


class SessionService:
    """Owns live sessions and drives the bot side of each dialogue."""

    def __init__(
        self,
        artifacts: EngineArtifacts,
        episode_config: Optional[EpisodeConfig] = None,
        store_dir: Optional[Union[str, Path]] = None,
        seed: int = 0,
    ):
        self.artifacts = artifacts
        self.episode_config = episode_config or EpisodeConfig()
        self.store_dir = Path(store_dir) if store_dir else None
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self._seed = seed
        self._counter = 0

    # -- session lifecycle -------------------------------------------------

    def create_session(
        self,
        bot_kind: str = "hybrid",
        human_role: Union[Role, str] = Role.BUYER,
        scenario: Optional[Scenario] = None,
        seed: Optional[int] = None,
    ) -> Session:
        if bot_kind not in BOT_KINDS:
            raise UnknownBotError(f"unknown bot kind {bot_kind!r}")
        human_role = Role(human_role)
        with self._registry_lock:
            self._counter += 1
            n = self._counter
        if seed is None:
            seed = self._seed + n
        if scenario is None:
            posting = synth_postings(seed, 1)[0]
            scenario = generate_scenarios(posting, [np.random.default_rng(seed).choice(
                ["0.5", "0.7", "0.9"])])[0]
        if human_role not in scenario.roles:
            raise UnknownBotError(f"role {human_role.value!r} does not fit the scenario")
        bot_spec = AgentSpec(bot_kind, human_role.partner, self.artifacts)
        deadline = max(2, min(14, self.episode_config.max_turns - 6))
        session = Session(
            id=uuid.uuid4().hex,
            state=DialogueState(scenario),
            human_role=human_role,
            bot_kind=bot_kind,
            bot=_Runtime(bot_spec, deadline),
            rng=np.random.default_rng(seed),
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        )
        with self._registry_lock:
            self._sessions[session.id] = session
        with session.lock:
            self._run_bot_turns(session)
        return session

    def get_session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFoundError(session_id) from None

    # -- event handling ----------------------------------------------------

    def post_event(
        self,
        session_id: str,
        kind: Union[EventKind, str],
        text: Optional[str] = None,
        price: Optional[float] = None,
    ) -> list[DialogueEvent]:
        """Apply a human event; returns the bot's reply events."""
        session = self.get_session(session_id)
        with session.lock:
            state = session.state
            if state.is_terminal:
                raise SessionFinishedError("dialogue already finished")
            if state.next_role(first=state.scenario.roles[0]) != session.human_role:
                raise NotYourTurnError("it is not your turn")
            kind = EventKind(kind)
            try:
                event = DialogueEvent(
                    turn=len(state.events),
                    role=session.human_role,
                    kind=kind,
                    text=text,
                    price=money(price) if price is not None else None,
                )
            except ValueError as exc:
                raise BadEventError(str(exc)) from exc
            ctx = ParseContext.from_state(state, session.human_role)
            act = parse_utterance(event, ctx, self.artifacts.lexicon)
            session.state = state.with_event(event, act)
            before = len(session.state.events)
            self._run_bot_turns(session)
            replies = list(session.state.events[before:])
            if session.state.is_terminal:
                self._persist(session)
            return replies

    def _run_bot_turns(self, session: Session) -> None:
        """Let the bot act while it holds the floor and the dialogue lives."""
        state = session.state
        while (
            not state.is_terminal
            and len(state.events) < self.episode_config.max_turns
            and state.next_role(first=state.scenario.roles[0]) == session.bot_role
        ):
            ctx = ParseContext.from_state(state, session.bot_role)
            act = _sanitize(session.bot.next_act(state, session.rng), state, ctx)
            turn = len(state.events)
            if act.intent == Intent.OFFER:
                event = DialogueEvent(turn, session.bot_role, EventKind.OFFER, price=act.price, split=act.split)
            elif act.intent == Intent.ACCEPT:
                event = DialogueEvent(turn, session.bot_role, EventKind.ACCEPT)
            elif act.intent == Intent.REJECT:
                event = DialogueEvent(turn, session.bot_role, EventKind.REJECT)
            elif act.intent == Intent.QUIT:
                event = DialogueEvent(turn, session.bot_role, EventKind.QUIT)
            else:
                context_act = None
                context_template = None
                if state.events and state.events[-1].kind == EventKind.MESSAGE:
                    context_act = state.acts[-1]
                    context_template = extract_template(
                        state.events[-1].text, context_act, state.scenario, self.artifacts.lexicon
                    )
                text = realize(
                    self.artifacts.index,
                    act,
                    context_act,
                    context_template,
                    ctx,
                    self.artifacts.lexicon,
                    self.artifacts.gen_config,
                    session.rng,
                )
                event = DialogueEvent(turn, session.bot_role, EventKind.MESSAGE, text=text)
            recorded = parse_utterance(event, ctx, self.artifacts.lexicon)
            state = state.with_event(event, recorded)
            session.bot.observe(recorded)
            break  # one bot turn per human event keeps alternation explicit
        if not state.is_terminal and len(state.events) >= self.episode_config.max_turns:
            state = state.finished_without_agreement()
        session.state = state

    # -- survey and persistence ---------------------------------------------

    def submit_survey(self, session_id: str, score: int) -> None:
        session = self.get_session(session_id)
        with session.lock:
            if not session.state.is_terminal:
                raise SessionActiveError("survey opens after the dialogue ends")
            if not isinstance(score, int) or not 1 <= score <= 5:
                raise BadEventError("survey score must be an integer in [1, 5]")
            session.survey = score
            self._persist(session)

    def to_record(self, session: Session) -> DialogueRecord:
        state = session.state
        outcome = None
        if state.is_terminal:
            o = outcome_from_state(state)
            outcome = OutcomeRecord(o.agreement, o.final_price, o.final_split)
        return DialogueRecord(state.scenario, tuple(state.events), outcome)

    def _persist(self, session: Session) -> None:
        if self.store_dir is None:
            return
        self.store_dir.mkdir(parents=True, exist_ok=True)
        day = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%d")
        path = self.store_dir / f"transcripts-{day}.jsonl"
        payload = record_to_json(self.to_record(session))
        payload["session_id"] = session.id
        payload["bot_kind"] = session.bot_kind
        payload["human_role"] = session.human_role.value
        payload["survey"] = session.survey
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True) + "\n")


def default_artifacts(seed: int = 7, n_dialogues: int = 200, smoothing: float = 0.01) -> EngineArtifacts:
    """Train engine artifacts from the bundled synthetic corpus."""
    from .simulator import train_sl

    return train_sl(synth_dialogues(seed, n_dialogues), smoothing=smoothing)
