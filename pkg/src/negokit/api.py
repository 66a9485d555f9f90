"""HTTP surface: pydantic schemas and the FastAPI app over SessionService."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .core import (
    CBScenario,
    DialogueEvent,
    DialogueStatus,
    DNScenario,
    PendingOfferError,
    DialogueError,
    Role,
    Scenario,
    money,
)
from .rewards import outcome_from_state
from .service import (
    BadEventError,
    NotYourTurnError,
    ServiceError,
    Session,
    SessionActiveError,
    SessionFinishedError,
    SessionNotFoundError,
    SessionService,
    UnknownBotError,
)


class ScenarioIn(BaseModel):
    kind: str = "cb"
    category: str = "electronics"
    title: str = "item"
    description: str = ""
    listing_price: float
    buyer_target: float


class CreateSessionRequest(BaseModel):
    bot_kind: str = "hybrid"
    human_role: str = "buyer"
    scenario: Optional[ScenarioIn] = None
    seed: Optional[int] = None


class ScenarioView(BaseModel):
    kind: str
    category: str
    title: str
    description: str
    listing_price: float
    buyer_target: Optional[float] = None  # hidden from the seller


class EventView(BaseModel):
    turn: int
    role: str
    kind: str
    text: Optional[str] = None
    price: Optional[float] = None


class OutcomeView(BaseModel):
    agreement: bool
    final_price: Optional[float] = None
    utilities: dict[str, float]
    num_turns: int


class PendingOfferView(BaseModel):
    role: str
    price: Optional[float] = None


class StateView(BaseModel):
    session_id: str
    status: str
    your_role: str
    your_turn: bool
    events: list[EventView]
    pending_offer: Optional[PendingOfferView] = None
    outcome: Optional[OutcomeView] = None
    survey: Optional[int] = None


class SessionCreated(BaseModel):
    session_id: str
    scenario_view: ScenarioView
    state: StateView


class PostEventRequest(BaseModel):
    kind: str
    text: Optional[str] = None
    price: Optional[float] = None


class PostEventResponse(BaseModel):
    bot_events: list[EventView]
    state: StateView


class SurveyRequest(BaseModel):
    score: int


class SurveyResponse(BaseModel):
    ok: bool = True


def scenario_view(scenario: Scenario, viewer: Role) -> ScenarioView:
    if isinstance(scenario, CBScenario):
        return ScenarioView(
            kind="cb",
            category=scenario.category,
            title=scenario.title,
            description=scenario.description,
            listing_price=float(scenario.listing_price),
            buyer_target=float(scenario.buyer_target) if viewer == Role.BUYER else None,
        )
    return ScenarioView(
        kind="dn", category="division", title="item division", description="",
        listing_price=0.0, buyer_target=None,
    )


def _event_view(event: DialogueEvent) -> EventView:
    return EventView(
        turn=event.turn,
        role=event.role.value,
        kind=event.kind.value,
        text=event.text,
        price=float(event.price) if event.price is not None else None,
    )


def state_view(session: Session) -> StateView:
    state = session.state
    outcome = None
    if state.is_terminal:
        o = outcome_from_state(state)
        outcome = OutcomeView(
            agreement=o.agreement,
            final_price=float(o.final_price) if o.final_price is not None else None,
            utilities={role.value: u for role, u in o.utilities.items()},
            num_turns=o.num_turns,
        )
    pending = None
    if state.pending_offer is not None:
        role, value = state.pending_offer
        pending = PendingOfferView(
            role=role.value, price=float(value) if not isinstance(value, dict) else None
        )
    your_turn = (
        not state.is_terminal
        and state.next_role(first=state.scenario.roles[0]) == session.human_role
    )
    return StateView(
        session_id=session.id,
        status=state.status.value,
        your_role=session.human_role.value,
        your_turn=your_turn,
        events=[_event_view(e) for e in state.events],
        pending_offer=pending,
        outcome=outcome,
        survey=session.survey,
    )


def _scenario_from_request(payload: Optional[ScenarioIn]) -> Optional[Scenario]:
    if payload is None:
        return None
    if payload.kind != "cb":
        raise HTTPException(status_code=400, detail="only cb scenarios are supported here")
    try:
        return CBScenario(
            category=payload.category,
            title=payload.title,
            description=payload.description,
            listing_price=money(payload.listing_price),
            buyer_target=money(payload.buyer_target),
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app(service: SessionService, static_dir: Optional[Union[str, Path]] = None) -> FastAPI:
    app = FastAPI(title="negokit", version="0.1.0")

    @app.post("/sessions", response_model=SessionCreated)
    def create_session(request: CreateSessionRequest) -> SessionCreated:
        scenario = _scenario_from_request(request.scenario)
        try:
            session = service.create_session(
                bot_kind=request.bot_kind,
                human_role=request.human_role,
                scenario=scenario,
                seed=request.seed,
            )
        except UnknownBotError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SessionCreated(
            session_id=session.id,
            scenario_view=scenario_view(session.state.scenario, session.human_role),
            state=state_view(session),
        )

    @app.get("/sessions/{session_id}", response_model=StateView)
    def get_session(session_id: str) -> StateView:
        try:
            session = service.get_session(session_id)
        except SessionNotFoundError as exc:
            raise HTTPException(status_code=404, detail="unknown session") from exc
        return state_view(session)

    @app.post("/sessions/{session_id}/events", response_model=PostEventResponse)
    def post_event(session_id: str, request: PostEventRequest) -> PostEventResponse:
        try:
            session = service.get_session(session_id)
            replies = service.post_event(
                session_id, kind=request.kind, text=request.text, price=request.price
            )
        except SessionNotFoundError as exc:
            raise HTTPException(status_code=404, detail="unknown session") from exc
        except (NotYourTurnError, SessionFinishedError) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except PendingOfferError as exc:
            raise HTTPException(status_code=422, detail="answer the offer first") from exc
        except (BadEventError, DialogueError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return PostEventResponse(
            bot_events=[_event_view(e) for e in replies], state=state_view(session)
        )

    @app.post("/sessions/{session_id}/survey", response_model=SurveyResponse)
    def submit_survey(session_id: str, request: SurveyRequest) -> SurveyResponse:
        try:
            service.submit_survey(session_id, request.score)
        except SessionNotFoundError as exc:
            raise HTTPException(status_code=404, detail="unknown session") from exc
        except SessionActiveError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except BadEventError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return SurveyResponse()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
