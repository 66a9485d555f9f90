"""Domain types shared by every module, plus the price arithmetic.

Prices are exact cent-quantized ``Decimal`` values; normalized prices are
floats on a role-relative scale where the agent's target maps to 1 and its
bottomline to 0. All types here are immutable values and safe to share.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from typing import Mapping, Optional, Sequence, Union

CENT = Decimal("0.01")
ITEMS = ("book", "hat", "ball")

SELLER_BOTTOMLINE_FRACTION = Decimal("0.7")

BIN_MIN = Decimal("-2.00")
BIN_MAX = Decimal("2.00")
# 401 two-decimal bins from -2.00 to 2.00 inclusive.
BIN_VALUES: tuple[Decimal, ...] = tuple(
    (BIN_MIN + CENT * i).quantize(CENT) for i in range(401)
)

Money = Decimal


class DialogueError(ValueError):
    """Base class for dialogue-state violations."""


class TurnOrderError(DialogueError):
    """Raised when the same role acts twice in a row."""


class PendingOfferError(DialogueError):
    """Raised when a pending offer is not answered with accept/reject."""


class TerminalDialogueError(DialogueError):
    """Raised when an event is appended to a finished dialogue."""


def money(value: Union[int, float, str, Decimal]) -> Money:
    """Quantize a dollar amount to cents (half away from zero); must be >= 0."""
    try:
        amount = Decimal(str(value)).quantize(CENT, rounding=ROUND_HALF_UP)
    except InvalidOperation as exc:
        raise ValueError(f"not a money amount: {value!r}") from exc
    if amount < 0:
        raise ValueError(f"money must be non-negative, got {value}")
    return amount


class Role(str, enum.Enum):
    BUYER = "buyer"
    SELLER = "seller"
    AGENT_A = "agent_a"
    AGENT_B = "agent_b"

    @property
    def partner(self) -> "Role":
        return _PARTNER[self]


_PARTNER = {
    Role.BUYER: Role.SELLER,
    Role.SELLER: Role.BUYER,
    Role.AGENT_A: Role.AGENT_B,
    Role.AGENT_B: Role.AGENT_A,
}

CB_ROLES = (Role.BUYER, Role.SELLER)
DN_ROLES = (Role.AGENT_A, Role.AGENT_B)


class Intent(str, enum.Enum):
    GREET = "greet"
    INQUIRE = "inquire"
    INFORM = "inform"
    PROPOSE = "propose"
    COUNTER = "counter"
    AGREE = "agree"
    DISAGREE = "disagree"
    OFFER = "offer"
    ACCEPT = "accept"
    REJECT = "reject"
    QUIT = "quit"
    UNKNOWN = "unknown"

    @property
    def takes_argument(self) -> bool:
        return self in _PRICED_INTENTS

    @property
    def is_structural(self) -> bool:
        return self in (Intent.OFFER, Intent.ACCEPT, Intent.REJECT, Intent.QUIT)


_PRICED_INTENTS = (Intent.PROPOSE, Intent.COUNTER, Intent.OFFER)


class EventKind(str, enum.Enum):
    MESSAGE = "message"
    OFFER = "offer"
    ACCEPT = "accept"
    REJECT = "reject"
    QUIT = "quit"


class DialogueStatus(str, enum.Enum):
    ACTIVE = "active"
    AGREED = "agreed"
    NO_AGREEMENT = "no_agreement"


@dataclass(frozen=True)
class CBScenario:
    """An item posting with public listing price and the buyer's private target."""

    category: str
    title: str
    description: str
    listing_price: Money
    buyer_target: Money

    def __post_init__(self):
        object.__setattr__(self, "listing_price", money(self.listing_price))
        object.__setattr__(self, "buyer_target", money(self.buyer_target))
        if not (0 < self.buyer_target < self.listing_price):
            raise ValueError(
                f"need 0 < buyer_target < listing_price, got "
                f"{self.buyer_target} / {self.listing_price}"
            )

    @property
    def roles(self) -> tuple[Role, Role]:
        return CB_ROLES

    @property
    def seller_bottomline(self) -> Money:
        return money(self.listing_price * SELLER_BOTTOMLINE_FRACTION)


@dataclass(frozen=True)
class DNScenario:
    """Item counts to divide, with each agent's private per-item values."""

    counts: Mapping[str, int]
    values: Mapping[Role, Mapping[str, int]]

    def __post_init__(self):
        counts = {item: int(self.counts[item]) for item in ITEMS}
        object.__setattr__(self, "counts", counts)
        if any(not 1 <= c <= 4 for c in counts.values()):
            raise ValueError(f"item counts must be in [1, 4], got {counts}")
        values = {}
        for role in DN_ROLES:
            if role not in self.values:
                raise ValueError(f"missing values for {role.value}")
            vals = {item: int(self.values[role].get(item, 0)) for item in ITEMS}
            if any(v < 0 for v in vals.values()):
                raise ValueError(f"negative item value for {role.value}")
            total = sum(vals[item] * counts[item] for item in ITEMS)
            if total != 10:
                raise ValueError(
                    f"values for {role.value} must satisfy sum(value*count) == 10, got {total}"
                )
            values[role] = vals
        object.__setattr__(self, "values", values)

    @property
    def roles(self) -> tuple[Role, Role]:
        return DN_ROLES


Scenario = Union[CBScenario, DNScenario]


@dataclass(frozen=True)
class Split:
    """A (possibly partial) allocation of items to the two agents."""

    allocation: Mapping[Role, Mapping[str, int]]

    def __post_init__(self):
        alloc = {}
        for role, items in self.allocation.items():
            role = Role(role)
            cleaned = {item: int(n) for item, n in items.items() if int(n) > 0}
            for item in cleaned:
                if item not in ITEMS:
                    raise ValueError(f"unknown item {item!r}")
            if cleaned:
                alloc[role] = cleaned
        object.__setattr__(self, "allocation", alloc)

    def count_for(self, role: Role, item: str) -> int:
        return int(self.allocation.get(role, {}).get(item, 0))

    def is_empty(self) -> bool:
        return not self.allocation

    def validate_against(self, scenario: DNScenario) -> None:
        for item in ITEMS:
            claimed = sum(self.count_for(role, item) for role in DN_ROLES)
            if claimed > scenario.counts[item]:
                raise ValueError(f"split claims {claimed} {item}(s), only {scenario.counts[item]} exist")

    def is_complete(self, scenario: DNScenario) -> bool:
        return all(
            sum(self.count_for(role, item) for role in DN_ROLES) == scenario.counts[item]
            for item in ITEMS
        )

    def completed(self, scenario: DNScenario, remainder_to: Role) -> "Split":
        """Give every unclaimed unit to ``remainder_to``; result is complete."""
        self.validate_against(scenario)
        alloc = {role: dict(items) for role, items in self.allocation.items()}
        for item in ITEMS:
            claimed = sum(self.count_for(role, item) for role in DN_ROLES)
            rest = scenario.counts[item] - claimed
            if rest > 0:
                alloc.setdefault(remainder_to, {})
                alloc[remainder_to][item] = alloc[remainder_to].get(item, 0) + rest
        return Split(alloc)


@dataclass(frozen=True)
class CoarseDialogueAct:
    """An intent plus its typed argument: a price (CB) or a split (DN)."""

    intent: Intent
    price: Optional[Money] = None
    split: Optional[Split] = None

    def __post_init__(self):
        if self.price is not None:
            object.__setattr__(self, "price", money(self.price))
            if not self.intent.takes_argument:
                raise ValueError(f"{self.intent.value} carries no price argument")
        if self.split is not None and not self.intent.takes_argument:
            raise ValueError(f"{self.intent.value} carries no split argument")
        if self.price is not None and self.split is not None:
            raise ValueError("an act carries a price or a split, never both")

    @property
    def argument(self) -> Union[Money, Split, None]:
        return self.price if self.price is not None else self.split

    def __str__(self) -> str:
        if self.price is not None:
            return f"{self.intent.value}({self.price})"
        if self.split is not None:
            return f"{self.intent.value}({dict(self.split.allocation)})"
        return self.intent.value


@dataclass(frozen=True)
class DialogueEvent:
    """One observable move: a free-text message or a structural action."""

    turn: int
    role: Role
    kind: EventKind
    text: Optional[str] = None
    price: Optional[Money] = None
    split: Optional[Split] = None

    def __post_init__(self):
        if self.price is not None:
            object.__setattr__(self, "price", money(self.price))
        if self.kind == EventKind.MESSAGE and self.text is None:
            raise ValueError("message events need text")
        if self.kind == EventKind.OFFER and self.price is None and self.split is None:
            raise ValueError("offer events need a price or a split")


@dataclass(frozen=True)
class DialogueState:
    """Event history with parsed acts, current proposals and terminal status.

    States are persistent values: ``with_event`` returns a new state and
    enforces turn alternation, the offer lifecycle and status transitions.
    """

    scenario: Scenario
    events: tuple[DialogueEvent, ...] = ()
    acts: tuple[CoarseDialogueAct, ...] = ()
    status: DialogueStatus = DialogueStatus.ACTIVE
    proposals: Mapping[Role, Union[Money, Split, None]] = field(default_factory=dict)
    pending_offer: Optional[tuple[Role, Union[Money, Split]]] = None
    final_price: Optional[Money] = None
    final_split: Optional[Split] = None

    @property
    def is_terminal(self) -> bool:
        return self.status != DialogueStatus.ACTIVE

    @property
    def num_turns(self) -> int:
        return len(self.events)

    def next_role(self, first: Optional[Role] = None) -> Optional[Role]:
        """Whose turn it is; ``first`` wins on an empty dialogue."""
        if self.events:
            return self.events[-1].role.partner
        return first

    def latest_proposal(self, role: Role) -> Union[Money, Split, None]:
        return self.proposals.get(role)

    def latest_table_price(self) -> Optional[Money]:
        """The most recent price put on the table by either side."""
        for act in reversed(self.acts):
            if act.price is not None:
                return act.price
        return None

    def with_event(self, event: DialogueEvent, act: CoarseDialogueAct) -> "DialogueState":
        if self.is_terminal:
            raise TerminalDialogueError("dialogue already finished")
        if event.turn != len(self.events):
            raise DialogueError(f"expected turn {len(self.events)}, got {event.turn}")
        if self.events and event.role == self.events[-1].role:
            raise TurnOrderError(f"{event.role.value} may not act twice in a row")
        if self.pending_offer is not None and event.kind in (EventKind.MESSAGE, EventKind.OFFER):
            raise PendingOfferError("answer the offer first")

        status = self.status
        pending = self.pending_offer
        final_price, final_split = self.final_price, self.final_split
        proposals = dict(self.proposals)

        if event.kind == EventKind.OFFER:
            pending = (event.role, event.price if event.price is not None else event.split)
        elif event.kind == EventKind.ACCEPT:
            if pending is None:
                raise DialogueError("accept requires a pending offer")
            status = DialogueStatus.AGREED
            offered = pending[1]
            if isinstance(offered, Split):
                final_split = offered
            else:
                final_price = offered
            pending = None
        elif event.kind == EventKind.REJECT:
            if pending is None:
                raise DialogueError("reject requires a pending offer")
            status = DialogueStatus.NO_AGREEMENT
            pending = None
        elif event.kind == EventKind.QUIT:
            status = DialogueStatus.NO_AGREEMENT

        if act.intent in _PRICED_INTENTS and act.argument is not None:
            proposals[event.role] = act.argument

        return replace(
            self,
            events=self.events + (event,),
            acts=self.acts + (act,),
            status=status,
            proposals=proposals,
            pending_offer=pending,
            final_price=final_price,
            final_split=final_split,
        )

    def finished_without_agreement(self) -> "DialogueState":
        """Close an active dialogue as no-agreement (turn cap reached)."""
        if self.is_terminal:
            return self
        return replace(self, status=DialogueStatus.NO_AGREEMENT, pending_offer=None)


@dataclass(frozen=True)
class Outcome:
    agreement: bool
    final_price: Optional[Money]
    final_split: Optional[Split]
    utilities: Mapping[Role, float]
    num_turns: int

    def __post_init__(self):
        if not self.agreement and (self.final_price is not None or self.final_split is not None):
            raise ValueError("no-agreement outcomes carry no final price/split")


def utility(role: Role, scenario: CBScenario, final_price: Money) -> float:
    """Linear task score: 1 at own target, 0 at the listing/target midpoint.

    Buyer and seller scores are exact negatives of each other (zero-sum).
    """
    listing, target = scenario.listing_price, scenario.buyer_target
    if listing == target:
        raise ValueError("degenerate midpoint")
    price = money(final_price)
    half_range = (listing - target) / 2
    midpoint = (listing + target) / 2
    if role == Role.BUYER:
        return float((midpoint - price) / half_range)
    if role == Role.SELLER:
        return float((price - midpoint) / half_range)
    raise ValueError(f"utility is defined for buyer/seller, got {role.value}")


def dn_utility(role: Role, scenario: DNScenario, split: Split) -> int:
    """Total value of the items allocated to ``role``; requires a complete split."""
    if role not in DN_ROLES:
        raise ValueError(f"dn_utility is defined for agent_a/agent_b, got {role.value}")
    if not split.is_complete(scenario):
        raise ValueError("split is incomplete")
    return sum(scenario.values[role][item] * split.count_for(role, item) for item in ITEMS)


def _scale(role: Role, scenario: CBScenario) -> tuple[Money, Money]:
    """(bottomline, target) for the role's normalized price scale."""
    if role == Role.BUYER:
        return scenario.listing_price, scenario.buyer_target
    if role == Role.SELLER:
        return scenario.seller_bottomline, scenario.listing_price
    raise ValueError(f"price normalization is defined for buyer/seller, got {role.value}")


def normalize_price(role: Role, scenario: CBScenario, price: Money) -> float:
    """Map a price to the role-relative scale: target -> 1, bottomline -> 0."""
    bottom, target = _scale(role, scenario)
    if bottom == target:
        raise ValueError("degenerate scale: bottomline equals target")
    return float((money(price) - bottom) / (target - bottom))


def bin_price(norm: float) -> Decimal:
    """Clamp a normalized price to [-2, 2], then round to the two-decimal bin."""
    norm = float(norm)
    if not math.isfinite(norm):
        raise ValueError(f"cannot bin non-finite value {norm!r}")
    clamped = min(max(norm, float(BIN_MIN)), float(BIN_MAX))
    binned = Decimal(repr(clamped)).quantize(CENT, rounding=ROUND_HALF_UP)
    binned = min(max(binned, BIN_MIN), BIN_MAX)
    if binned == 0:
        return Decimal("0.00")
    return binned


def denormalize_price(role: Role, scenario: CBScenario, binned: Union[Decimal, float]) -> Money:
    """Exact linear inverse of ``normalize_price``, rounded to cents, floored at $0."""
    bottom, target = _scale(role, scenario)
    n = Decimal(str(binned))
    raw = bottom + n * (target - bottom)
    if raw < 0:
        raw = Decimal(0)
    return money(raw)
