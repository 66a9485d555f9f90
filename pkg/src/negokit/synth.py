"""Seeded synthetic postings and bargaining dialogues for desk-scale runs.

The dialogue scripts follow the observed flow of real bargaining chats
(greetings, a little probing, proposals converging by splitting the
difference, then a structural offer). Price mentions are dollar-marked
often enough that the bare mentions are always detectable through the
neighbor lexicon, and one deterministic anchor dialogue guarantees every
bare-price context is covered regardless of the seed.
"""
from __future__ import annotations

import random
from decimal import Decimal
from typing import Optional, Sequence

from .core import (
    CBScenario,
    DialogueEvent,
    EventKind,
    Money,
    Role,
    money,
)
from .corpus import CATEGORIES, DialogueRecord, OutcomeRecord, Posting, generate_scenarios

_TITLES = {
    "housing": ("studio apartment", "sunny loft", "cozy cottage"),
    "furniture": ("wooden dresser", "leather couch", "oak dining table"),
    "cars": ("honda sedan", "pickup truck", "classic coupe"),
    "bikes": ("road bike", "mountain bike", "cruiser bicycle"),
    "phones": ("smartphone", "android phone", "flip phone"),
    "electronics": ("bluetooth speaker", "flat screen tv", "gaming console"),
}

_DESCRIPTIONS = (
    "barely used and works great",
    "in great condition , comes from a smoke free home",
    "well maintained , selling because we are moving",
    "works perfectly , minor cosmetic wear",
)

_PRICE_RANGES = {
    "housing": (800, 3500),
    "furniture": (40, 400),
    "cars": (1500, 9000),
    "bikes": (60, 600),
    "phones": (80, 900),
    "electronics": (50, 700),
}

# Bare prices are only detectable when their neighbors were seen next to a
# dollar-marked price, so every context here also occurs dollar-marked in
# the anchor dialogue below.
_PRICE_LINES = (
    "i think {p} is fair for this",
    "how about {p} ?",
    "will you do {p} and pick it up",
    "i can do {p} today",
    "i could go {p} maybe",
    "my best is {p} for this",
)

_BUYER_GREETS = (
    "hello , do you still have the {item} ?",
    "hi there , is the {item} still available ?",
    "hey , i saw your listing for the {item}",
)
_SELLER_GREETS = (
    "hello , yes the {item} is still available",
    "hi , yes it is still here",
    "hey there , it sure is",
)
_INQUIRES = (
    "what condition is it in ?",
    "how old is it ?",
    "does everything work well ?",
    "why are you selling it ?",
    "any scratches or problems with it ?",
)
_INFORMS = (
    "it is in great condition and works like a champ",
    "just a couple of years old and barely used",
    "everything works perfectly , you will love it",
    "it has been well taken care of",
)
_CHITCHAT = (
    "i am just looking around for something like this",
    "well , let me think about it for a second",
    "my daughter would really like this",
)
_AGREES = (
    "okay , that sounds like a deal !",
    "deal !",
    "okay sounds good to me",
    "sure , that works for me",
    "great thanks !",
)
_DISAGREES = (
    "no , that is too low for me",
    "i can't go that low",
    "sorry , that is way too high for me",
)

_ANCHOR_LINES = (
    (Role.BUYER, "i think {p0} is fair for this"),
    (Role.SELLER, "how about {p1} ?"),
    (Role.BUYER, "will you do {p2} and pick it up"),
    (Role.SELLER, "i can do {p3} today"),
    (Role.BUYER, "i could go {p4} maybe"),
    (Role.SELLER, "my best is {p5} for this"),
)


def synth_postings(seed: int, n: int) -> list[Posting]:
    """Deterministic postings cycling through the six categories."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    postings = []
    for i in range(n):
        category = CATEGORIES[i % len(CATEGORIES)]
        lo, hi = _PRICE_RANGES[category]
        price = money(rng.randrange(lo, hi + 1))
        title = rng.choice(_TITLES[category])
        postings.append(Posting(category, title, rng.choice(_DESCRIPTIONS), price))
    return postings


def _render_price(price: Money, rng: random.Random, dollar_rate: float = 0.6) -> str:
    text = f"{price:.2f}"
    if text.endswith(".00"):
        text = text[:-3]
    return f"${text}" if rng.random() < dollar_rate else text


def _midpoint(a: Money, b: Money) -> Money:
    return money(Decimal(int((a + b) / 2)))


def _anchor_dialogue() -> DialogueRecord:
    """Covers every bare-price context with a dollar-marked instance."""
    scenario = generate_scenarios(
        Posting("electronics", "flat screen tv", "barely used and works great", money(300)),
        [Decimal("0.7")],
    )[0]
    prices = [money(p) for p in (210, 280, 240, 260, 250, 255)]
    events = [
        DialogueEvent(0, Role.BUYER, EventKind.MESSAGE, text="hello , do you still have the flat screen tv ?"),
        DialogueEvent(1, Role.SELLER, EventKind.MESSAGE, text="hello , yes the flat screen tv is still available"),
    ]
    for i, (role, line) in enumerate(_ANCHOR_LINES):
        text = line.format(**{f"p{i}": f"${prices[i]:.2f}".replace(".00", "")})
        events.append(DialogueEvent(len(events), role, EventKind.MESSAGE, text=text))
    events.append(DialogueEvent(len(events), Role.BUYER, EventKind.MESSAGE, text="okay , that sounds like a deal !"))
    events.append(DialogueEvent(len(events), Role.SELLER, EventKind.MESSAGE, text="great thanks !"))
    events.append(DialogueEvent(len(events), Role.BUYER, EventKind.OFFER, price=prices[-1]))
    events.append(DialogueEvent(len(events), Role.SELLER, EventKind.ACCEPT))
    return DialogueRecord(scenario, tuple(events), OutcomeRecord(True, prices[-1]))


def _one_dialogue(rng: random.Random, posting: Posting) -> DialogueRecord:
    multiplier = rng.choice((Decimal("0.5"), Decimal("0.7"), Decimal("0.9")))
    scenario = generate_scenarios(posting, [multiplier])[0]
    listing, target = scenario.listing_price, scenario.buyer_target
    item = posting.title

    events: list[DialogueEvent] = []

    def say(role: Role, text: str) -> None:
        events.append(DialogueEvent(len(events), role, EventKind.MESSAGE, text=text))

    say(Role.BUYER, rng.choice(_BUYER_GREETS).format(item=item))
    say(Role.SELLER, rng.choice(_SELLER_GREETS).format(item=item))
    for _ in range(rng.choice((0, 1, 1, 2))):
        say(Role.BUYER, rng.choice(_INQUIRES))
        say(Role.SELLER, rng.choice(_INFORMS))
    if rng.random() < 0.1:
        say(Role.BUYER, rng.choice(_CHITCHAT))
        say(Role.SELLER, "well , let me see what i can do")

    # Proposal phase: the buyer opens near the target, then the two sides
    # split the difference for a few rounds.
    opening = money(Decimal(int(target)))
    say(Role.BUYER, rng.choice(_PRICE_LINES).format(p=_render_price(opening, rng)))
    prices = [opening]
    stance = {Role.BUYER: opening, Role.SELLER: listing}
    current = Role.SELLER
    for _ in range(rng.randrange(1, 4)):
        counter = _midpoint(stance[current], stance[current.partner])
        if counter == prices[-1]:
            break
        stance[current] = counter
        say(current, rng.choice(_PRICE_LINES).format(p=_render_price(counter, rng)))
        prices.append(counter)
        current = current.partner

    final = prices[-1]
    ending = rng.random()
    if ending < 0.08:
        # Lowball offer gets rejected.
        lowball = money(Decimal(int(min(target, listing * Decimal("0.6")))))
        say(current, rng.choice(_DISAGREES))
        events.append(DialogueEvent(len(events), current.partner, EventKind.OFFER, price=lowball))
        events.append(DialogueEvent(len(events), current, EventKind.REJECT))
        return DialogueRecord(scenario, tuple(events), OutcomeRecord(False))
    if ending < 0.12:
        say(current, rng.choice(_DISAGREES))
        events.append(DialogueEvent(len(events), current.partner, EventKind.QUIT))
        return DialogueRecord(scenario, tuple(events), OutcomeRecord(False))

    say(current, rng.choice(_AGREES))
    say(current.partner, rng.choice(_AGREES))
    events.append(DialogueEvent(len(events), current, EventKind.OFFER, price=final))
    events.append(DialogueEvent(len(events), current.partner, EventKind.ACCEPT))
    return DialogueRecord(scenario, tuple(events), OutcomeRecord(True, final))


def synth_dialogues(seed: int, n: int, include_anchor: bool = True) -> list[DialogueRecord]:
    """A deterministic synthetic bargaining corpus of ``n`` dialogues."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    postings = synth_postings(seed + 1, max(n, 6))
    records = [_anchor_dialogue()] if include_anchor else []
    while len(records) < n:
        records.append(_one_dialogue(rng, postings[rng.randrange(len(postings))]))
    return records
