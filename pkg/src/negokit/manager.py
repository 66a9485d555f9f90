"""Dialogue management: choosing the next coarse dialogue act.

Two policies are provided. The learned policy is an autoregressive
log-linear softmax over act tokens (intent symbols, price bins, split
triples) conditioned on the two previous tokens, the acting role and the
sign of the current price gap; it supports exact maximum-likelihood
fitting from counts and REINFORCE updates. The hybrid policy predicts the
next intent with a trigram model over intent sequences and fills in
arguments with bargaining rules.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    BIN_VALUES,
    CBScenario,
    CoarseDialogueAct,
    DialogueState,
    DNScenario,
    Intent,
    ITEMS,
    Money,
    Role,
    Scenario,
    Split,
    bin_price,
    denormalize_price,
    dn_utility,
    money,
    normalize_price,
)
from .lm import TrigramLM

logger = logging.getLogger(__name__)

S_START = "<s>"
S_END = "</s>"
YOU = "<you>"
THEM = "<them>"

NEG_INF = -1e9  # finite stand-in for log(0); keeps weights serializable

MAX_ACT_TOKENS = 4  # emitted tokens per act (holder marker excluded)


def _price_token(binned: Decimal) -> str:
    return f"price:{binned}"


def _split_token(item: str, count: int, holder: str) -> str:
    return f"split:{item}:{count}:{'you' if holder == YOU else 'them'}"


class Vocab:
    """Fixed, closed act-token vocabulary with stable integer ids."""

    def __init__(self):
        tokens = [S_START, S_END, YOU, THEM]
        tokens += [intent.value for intent in Intent]
        tokens += [_price_token(b) for b in BIN_VALUES]
        tokens += [
            _split_token(item, count, holder)
            for item in ITEMS
            for count in range(5)
            for holder in (YOU, THEM)
        ]
        self.tokens: tuple[str, ...] = tuple(tokens)
        self.ids: dict[str, int] = {tok: i for i, tok in enumerate(tokens)}
        self.intent_ids: dict[Intent, int] = {i: self.ids[i.value] for i in Intent}

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.ids[token]

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]


VOCAB = Vocab()


def act_to_tokens(
    act: CoarseDialogueAct, holder: str, perspective: Role, scenario: Scenario
) -> list[str]:
    """Serialize an act as [holder, intent, argument tokens].

    Prices are binned on the perspective agent's normalized scale; splits
    are written as the speaker's per-item counts (the partner side is the
    complement).
    """
    tokens = [holder, act.intent.value]
    if act.price is not None:
        assert isinstance(scenario, CBScenario)
        binned = bin_price(normalize_price(perspective, scenario, act.price))
        tokens.append(_price_token(binned))
    elif act.split is not None:
        assert isinstance(scenario, DNScenario)
        speaker = perspective if holder == YOU else perspective.partner
        complete = act.split.completed(scenario, remainder_to=speaker.partner)
        for item in ITEMS:
            tokens.append(_split_token(item, complete.count_for(speaker, item), holder))
    return tokens


def tokens_to_act(
    tokens: Sequence[str], perspective: Role, scenario: Scenario
) -> CoarseDialogueAct:
    """Inverse of ``act_to_tokens`` up to binning; raises on malformed input."""
    if len(tokens) < 2 or tokens[0] not in (YOU, THEM):
        raise ValueError(f"unparseable act tokens: {list(tokens)}")
    holder = tokens[0]
    try:
        intent = Intent(tokens[1])
    except ValueError:
        raise ValueError(f"unparseable act tokens: {list(tokens)}") from None
    body = tokens[2:]
    if not intent.takes_argument:
        if body:
            raise ValueError(f"{intent.value} takes no argument tokens")
        return CoarseDialogueAct(intent)
    if isinstance(scenario, CBScenario):
        if len(body) != 1 or not body[0].startswith("price:"):
            raise ValueError(f"unparseable act tokens: {list(tokens)}")
        binned = Decimal(body[0].split(":", 1)[1])
        return CoarseDialogueAct(intent, price=denormalize_price(perspective, scenario, binned))
    # DN: one split token per item, in canonical item order
    if len(body) != len(ITEMS):
        raise ValueError(f"unparseable act tokens: {list(tokens)}")
    speaker = perspective if holder == YOU else perspective.partner
    counts: dict[str, int] = {}
    expected_holder = "you" if holder == YOU else "them"
    for item, tok in zip(ITEMS, body):
        parts = tok.split(":")
        if len(parts) != 4 or parts[0] != "split" or parts[1] != item or parts[3] != expected_holder:
            raise ValueError(f"unparseable act tokens: {list(tokens)}")
        counts[item] = int(parts[2])
    split = Split({speaker: counts}).completed(scenario, remainder_to=speaker.partner)
    return CoarseDialogueAct(intent, split=split)


class TokenStream:
    """Flattened act-token history with the running context features."""

    def __init__(self, perspective: Role, scenario: Scenario):
        self.perspective = perspective
        self.scenario = scenario
        self.tokens: list[str] = [S_START]
        self.holder: Optional[str] = None
        self.own_bin: Optional[Decimal] = None
        self.partner_bin: Optional[Decimal] = None

    @property
    def gap_sign(self) -> str:
        if self.own_bin is None or self.partner_bin is None:
            return "na"
        if self.own_bin < self.partner_bin:
            return "lt"
        if self.own_bin > self.partner_bin:
            return "gt"
        return "eq"

    def context_key(self) -> str:
        prev1 = self.tokens[-1]
        prev2 = self.tokens[-2] if len(self.tokens) >= 2 else S_START
        return f"{prev2} {prev1} {self.perspective.value} {self.gap_sign}"

    def append(self, token: str) -> None:
        if token in (YOU, THEM):
            self.holder = token
        elif token.startswith("price:"):
            binned = Decimal(token.split(":", 1)[1])
            if self.holder == YOU:
                self.own_bin = binned
            else:
                self.partner_bin = binned
        self.tokens.append(token)

    def extend_with_act(self, role: Role, act: CoarseDialogueAct) -> list[str]:
        holder = YOU if role == self.perspective else THEM
        toks = act_to_tokens(act, holder, self.perspective, self.scenario)
        for tok in toks:
            self.append(tok)
        return toks


def encode_dialogue_pairs(
    scenario: Scenario,
    turns: Sequence[tuple[Role, CoarseDialogueAct]],
    perspective: Role,
) -> list[tuple[str, int]]:
    """(context key, target token id) training pairs for one dialogue."""
    stream = TokenStream(perspective, scenario)
    pairs: list[tuple[str, int]] = []
    for role, act in turns:
        holder = YOU if role == perspective else THEM
        for token in act_to_tokens(act, holder, perspective, scenario):
            pairs.append((stream.context_key(), VOCAB.id(token)))
            stream.append(token)
    pairs.append((stream.context_key(), VOCAB.id(S_END)))
    return pairs


ANY = "<any>"


def _coarse(token: str) -> str:
    if token.startswith("price:"):
        return "price:*"
    if token.startswith("split:"):
        return "split:*"
    return token


def context_levels(ctx: str) -> list[str]:
    """Backoff chain from the exact context to coarser histories.

    Order: exact, gap dropped, argument values coarsened (a price stays
    "some price"), second-previous token dropped, role-only marginal.
    Fitting accumulates counts at every level so inference can fall back
    when an exact context was never observed.
    """
    p2, p1, role, gap = ctx.split(" ")
    levels = [ctx, f"{p2} {p1} {role} na", f"{_coarse(p2)} {_coarse(p1)} {role} na"]
    levels.append(f"{ANY} {_coarse(p1)} {role} na")
    levels.append(f"{ANY} {ANY} {role} na")
    out: list[str] = []
    for level in levels:
        if level not in out:
            out.append(level)
    return out


@dataclass(frozen=True)
class Step:
    """One sampled policy action: context, chosen token, legal-move mask."""

    context: str
    token_id: int
    allowed: Optional[tuple[int, ...]] = None


class PolicyParams:
    """Log-linear next-token policy: p(token | ctx) = softmax(weights[ctx])."""

    VERSION = 1

    def __init__(self, weights: Optional[dict[str, np.ndarray]] = None):
        self.weights: dict[str, np.ndarray] = weights if weights is not None else {}

    def logits(self, ctx: str) -> np.ndarray:
        arr = self.weights.get(ctx)
        if arr is None:
            return np.zeros(len(VOCAB))
        return arr

    def probs(self, ctx: str, allowed: Optional[Sequence[int]] = None) -> np.ndarray:
        logits = self.logits(ctx)
        if allowed is not None:
            masked = np.full(len(VOCAB), -np.inf)
            idx = np.asarray(allowed, dtype=int)
            masked[idx] = logits[idx]
            logits = masked
        peak = logits.max()
        exps = np.exp(logits - peak)
        return exps / exps.sum()

    def resolve_context(self, ctx: str) -> str:
        """First backoff level with fitted weights; the exact key if none."""
        for level in context_levels(ctx):
            if level in self.weights:
                return level
        return ctx

    def copy(self) -> "PolicyParams":
        return PolicyParams({ctx: arr.copy() for ctx, arr in self.weights.items()})

    def fingerprint(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        for ctx in sorted(self.weights):
            digest.update(ctx.encode())
            digest.update(self.weights[ctx].tobytes())
        return digest.hexdigest()

    def to_payload(self) -> dict:
        out: dict[str, dict] = {}
        for ctx in sorted(self.weights):
            arr = self.weights[ctx]
            values, freq = np.unique(arr, return_counts=True)
            default = float(values[int(freq.argmax())])
            sparse = {
                str(i): float(v) for i, v in enumerate(arr.tolist()) if v != default
            }
            out[ctx] = {"d": default, "s": sparse}
        return {"version": self.VERSION, "vocab_size": len(VOCAB), "weights": out}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "PolicyParams":
        if payload.get("version") != cls.VERSION:
            raise ValueError(f"unsupported policy version {payload.get('version')!r}")
        if payload.get("vocab_size") != len(VOCAB):
            raise ValueError("policy was trained with a different vocabulary")
        weights = {}
        for ctx, entry in payload["weights"].items():
            arr = np.full(len(VOCAB), float(entry["d"]))
            for tid, value in entry["s"].items():
                arr[int(tid)] = float(value)
            weights[ctx] = arr
        return cls(weights)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_payload(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolicyParams":
        return cls.from_payload(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_pairs(pairs: Iterable[tuple[str, int]], smoothing: float = 0.0) -> PolicyParams:
    """Closed-form MLE: weights are log (count + smoothing) per context.

    At zero smoothing the policy's conditionals equal the empirical
    relative frequencies of each context exactly; unseen tokens get zero
    probability (a large negative weight).
    """
    counts: dict[str, np.ndarray] = {}
    n = 0
    for ctx, token_id in pairs:
        for level in context_levels(ctx):
            arr = counts.get(level)
            if arr is None:
                arr = np.zeros(len(VOCAB))
                counts[level] = arr
            arr[token_id] += 1
        n += 1
    if n == 0:
        raise ValueError("cannot fit a policy on an empty corpus")
    weights = {}
    for ctx, arr in counts.items():
        smoothed = arr + smoothing
        with np.errstate(divide="ignore"):
            logs = np.log(smoothed)
        logs[~np.isfinite(logs)] = NEG_INF
        weights[ctx] = logs
    return PolicyParams(weights)


def mle_fit(parsed_dialogues: Sequence, smoothing: float = 0.0) -> PolicyParams:
    """Fit the act policy on a parsed corpus, using both seats as perspectives."""
    if not parsed_dialogues:
        raise ValueError("cannot fit a policy on an empty corpus")

    def pair_stream():
        for dialogue in parsed_dialogues:
            for perspective in dialogue.scenario.roles:
                yield from encode_dialogue_pairs(dialogue.scenario, dialogue.turns, perspective)

    return fit_pairs(pair_stream(), smoothing)


def _intent_token_ids(intents: Sequence[Intent]) -> tuple[int, ...]:
    return tuple(VOCAB.intent_ids[i] for i in intents)


ALL_INTENT_IDS = _intent_token_ids(tuple(Intent))
PRICE_TOKEN_IDS = tuple(VOCAB.id(_price_token(b)) for b in BIN_VALUES)
_SPLIT_IDS_YOU = {
    item: tuple(VOCAB.id(_split_token(item, c, YOU)) for c in range(5)) for item in ITEMS
}


def policy_next_act(
    params: PolicyParams,
    scenario: Scenario,
    turns: Sequence[tuple[Role, CoarseDialogueAct]],
    perspective: Role,
    rng: np.random.Generator,
    mode: str = "sample",
    allowed_intents: Optional[Sequence[Intent]] = None,
) -> tuple[CoarseDialogueAct, list[Step]]:
    """Autoregressively emit the next act's tokens.

    Greedy mode takes the argmax (ties break toward the lowest token id);
    sampling draws from the softmax using only ``rng``. Every position is
    masked to the grammatically legal tokens (an intent first, then the
    argument tokens the intent calls for); the mask is recorded on each
    step so log-probabilities and gradients see the same distribution.
    Anything still malformed is repaired to an unknown act and logged.
    """
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    stream = TokenStream(perspective, scenario)
    for role, act in turns:
        stream.extend_with_act(role, act)
    stream.append(YOU)

    steps: list[Step] = []
    emitted: list[str] = []

    def draw(allowed: Optional[tuple[int, ...]]) -> str:
        ctx = params.resolve_context(stream.context_key())
        probs = params.probs(ctx, allowed)
        if mode == "greedy":
            token_id = int(np.argmax(probs))
        else:
            token_id = int(rng.choice(len(VOCAB), p=probs))
        steps.append(Step(ctx, token_id, allowed))
        token = VOCAB.token(token_id)
        stream.append(token)
        emitted.append(token)
        return token

    first_allowed = _intent_token_ids(allowed_intents) if allowed_intents else ALL_INTENT_IDS
    head = draw(first_allowed)
    try:
        intent = Intent(head)
    except ValueError:
        logger.debug("repaired non-intent emission %r to unknown", head)
        return CoarseDialogueAct(Intent.UNKNOWN), steps

    if intent.takes_argument:
        if isinstance(scenario, CBScenario):
            draw(PRICE_TOKEN_IDS)
        else:
            for item in ITEMS[: MAX_ACT_TOKENS - 1]:
                draw(_SPLIT_IDS_YOU[item])
    try:
        act = tokens_to_act([YOU, *emitted], perspective, scenario)
    except ValueError:
        logger.debug("repaired malformed act emission %r to unknown", emitted)
        return CoarseDialogueAct(Intent.UNKNOWN), steps
    return act, steps


def trajectory_logprob(params: PolicyParams, steps: Sequence[Step]) -> float:
    """Sum of log p(token | context) along a trajectory; finite or an error."""
    total = 0.0
    for step in steps:
        p = float(params.probs(step.context, step.allowed)[step.token_id])
        if p <= 0.0:
            raise ValueError(f"zero-probability action {step.token_id} in context {step.context!r}")
        total += math.log(p)
    return total


def trajectory_grad(params: PolicyParams, steps: Sequence[Step]) -> dict[str, np.ndarray]:
    """Gradient of ``trajectory_logprob`` with respect to the context weights."""
    grads: dict[str, np.ndarray] = {}
    for step in steps:
        probs = params.probs(step.context, step.allowed)
        g = grads.get(step.context)
        if g is None:
            g = np.zeros(len(VOCAB))
            grads[step.context] = g
        g -= probs
        g[step.token_id] += 1.0
    return grads


@dataclass
class TrainerConfig:
    """REINFORCE hyperparameters plus the running-mean baseline state."""

    learning_rate: float = 0.001
    episodes: int = 5000
    seed: int = 0
    validate_every: int = 250
    validation_episodes: int = 100
    baseline_value: float = 0.0
    baseline_count: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")

    @property
    def baseline(self) -> float:
        return self.baseline_value

    def observe_return(self, reward: float) -> None:
        self.baseline_count += 1
        self.baseline_value += (reward - self.baseline_value) / self.baseline_count


def reinforce_update(
    params: PolicyParams,
    steps: Sequence[Step],
    reward: float,
    config: TrainerConfig,
) -> PolicyParams:
    """Ascend (reward - baseline) * log p(trajectory); then update the baseline."""
    advantage = reward - config.baseline
    if advantage != 0.0 and steps:
        grads = trajectory_grad(params, steps)
        scale = config.learning_rate * advantage
        for ctx, grad in grads.items():
            update = scale * grad
            if not np.all(np.isfinite(update)):
                raise ArithmeticError("non-finite policy gradient; update aborted")
            base = params.weights.get(ctx)
            if base is None:
                base = np.zeros(len(VOCAB))
                params.weights[ctx] = base
            base += update
    config.observe_return(reward)
    return params


# ---------------------------------------------------------------------------
# Hybrid (rules + intent language model) policies
# ---------------------------------------------------------------------------

TEXT_INTENT_VALUES = [i.value for i in Intent]


@dataclass
class HybridConfig:
    """Hand-coded argument rules around a learned intent sequence model."""

    intent_lm: TrigramLM
    bottomline_fraction: Decimal = Decimal("0.7")
    deadline_turns: int = 14

    def __post_init__(self):
        f = Decimal(str(self.bottomline_fraction))
        if not (0 < f < 1):
            raise ValueError("bottomline_fraction must be in (0, 1)")
        self.bottomline_fraction = f


def bottomline(role: Role, scenario: CBScenario, fraction: Decimal) -> Money:
    return scenario.listing_price if role == Role.BUYER else money(scenario.listing_price * fraction)


def acceptable(role: Role, scenario: CBScenario, price: Money, fraction: Decimal) -> bool:
    """Not worse than the role's bottomline (non-strict at the boundary)."""
    limit = bottomline(role, scenario, fraction)
    return price <= limit if role == Role.BUYER else price >= limit


def split_the_difference(a: Money, b: Money) -> Money:
    return money((a + b) / 2)


def _clamp_to_band(role: Role, scenario: CBScenario, price: Money, fraction: Decimal) -> Money:
    limit = bottomline(role, scenario, fraction)
    return min(price, limit) if role == Role.BUYER else max(price, limit)


def _sample_intent(state: DialogueState, config: HybridConfig, rng: np.random.Generator) -> Intent:
    recent = [act.intent.value for act in state.acts[-2:]]
    while len(recent) < 2:
        recent.insert(0, "<s>")
    dist = config.intent_lm.distribution((recent[0], recent[1]), restrict=TEXT_INTENT_VALUES)
    values = list(dist)
    probs = np.array([dist[v] for v in values])
    probs = probs / probs.sum()
    choice = values[int(rng.choice(len(values), p=probs))]
    return Intent(choice)


def hybrid_next_act_cb(
    state: DialogueState, role: Role, config: HybridConfig, rng: np.random.Generator
) -> CoarseDialogueAct:
    """Intent from the trigram model, arguments by bargaining rules.

    Counters split the difference of the two current proposals; offers are
    answered by the bottomline rule; near the turn cap the agent pushes the
    dialogue to a close instead of chatting on.
    """
    scenario = state.scenario
    assert isinstance(scenario, CBScenario)
    fraction = config.bottomline_fraction

    pending = state.pending_offer
    if pending is not None and pending[0] != role:
        price = pending[1]
        assert isinstance(price, Money)
        if acceptable(role, scenario, price, fraction):
            return CoarseDialogueAct(Intent.ACCEPT)
        return CoarseDialogueAct(Intent.REJECT)

    own_target = scenario.buyer_target if role == Role.BUYER else scenario.listing_price
    own_latest = state.latest_proposal(role)
    partner_latest = state.latest_proposal(role.partner)
    table = state.latest_table_price()

    def counter_act() -> CoarseDialogueAct:
        if partner_latest is None or not isinstance(partner_latest, Money):
            return CoarseDialogueAct(Intent.PROPOSE, price=own_target)
        stance = own_latest if isinstance(own_latest, Money) else own_target
        price = split_the_difference(stance, partner_latest)
        return CoarseDialogueAct(Intent.COUNTER, price=_clamp_to_band(role, scenario, price, fraction))

    # Close out the dialogue when the turn budget is nearly spent.
    if len(state.events) >= config.deadline_turns:
        if isinstance(partner_latest, Money):
            if acceptable(role, scenario, partner_latest, fraction):
                return CoarseDialogueAct(Intent.OFFER, price=partner_latest)
            return counter_act()
        if isinstance(own_latest, Money):
            return CoarseDialogueAct(Intent.OFFER, price=own_latest)
        return CoarseDialogueAct(Intent.PROPOSE, price=own_target)

    # After the partner agrees, submit the price on the table.
    last_partner_intent = None
    for event, act in zip(reversed(state.events), reversed(state.acts)):
        if event.role != role:
            last_partner_intent = act.intent
            break
    if (
        last_partner_intent == Intent.AGREE
        and table is not None
        and acceptable(role, scenario, table, fraction)
    ):
        return CoarseDialogueAct(Intent.OFFER, price=table)

    intent = _sample_intent(state, config, rng)
    if intent == Intent.PROPOSE:
        return CoarseDialogueAct(Intent.PROPOSE, price=own_target)
    if intent == Intent.COUNTER:
        return counter_act()
    if intent == Intent.OFFER:
        if table is not None and acceptable(role, scenario, table, fraction):
            return CoarseDialogueAct(Intent.OFFER, price=table)
        return counter_act()
    if intent in (Intent.AGREE, Intent.ACCEPT):
        if table is not None and acceptable(role, scenario, table, fraction):
            return CoarseDialogueAct(Intent.AGREE)
        return counter_act()
    if intent in (Intent.REJECT, Intent.QUIT, Intent.DISAGREE):
        return CoarseDialogueAct(Intent.DISAGREE)
    return CoarseDialogueAct(intent)


@dataclass(frozen=True)
class PartnerEstimate:
    """Running estimate of the partner's per-item values, normalized to 10."""

    owner: Role
    weights: Mapping[str, float] = field(default_factory=lambda: {item: 1.0 for item in ITEMS})

    @property
    def est_values(self) -> dict[str, float]:
        total = sum(self.weights.values())
        if total <= 0:
            return {item: 10.0 / len(ITEMS) for item in ITEMS}
        return {item: 10.0 * self.weights[item] / total for item in ITEMS}

    @classmethod
    def uniform(cls, owner: Role) -> "PartnerEstimate":
        return cls(owner)

    @classmethod
    def from_values(cls, owner: Role, values: Mapping[str, float]) -> "PartnerEstimate":
        return cls(owner, {item: float(values.get(item, 0.0)) for item in ITEMS})


def update_partner_estimate(
    est: PartnerEstimate, partner_act: CoarseDialogueAct
) -> PartnerEstimate:
    """Items the partner asks for gain weight in proportion to the request."""
    if partner_act.split is None:
        return est
    partner = est.owner.partner
    weights = dict(est.weights)
    for item in ITEMS:
        requested = partner_act.split.count_for(partner, item)
        if requested > 0:
            weights[item] = weights.get(item, 0.0) + requested
    return PartnerEstimate(est.owner, weights)


def _split_value(role: Role, scenario: DNScenario, split: Split) -> int:
    complete = split.completed(scenario, remainder_to=role)
    return dn_utility(role, scenario, complete)


def concede_item(
    own_values: Mapping[str, int],
    est: PartnerEstimate,
    holdings: Mapping[str, int],
) -> Optional[str]:
    """The held item minimizing (own value - estimated partner value)."""
    est_values = est.est_values
    best: Optional[str] = None
    best_score = math.inf
    for item in ITEMS:
        if holdings.get(item, 0) <= 0:
            continue
        score = own_values[item] - est_values[item]
        if score < best_score:
            best, best_score = item, score
    return best


def hybrid_next_act_dn(
    state: DialogueState,
    role: Role,
    est: PartnerEstimate,
    target_value: int,
    config: HybridConfig,
    rng: np.random.Generator,
) -> CoarseDialogueAct:
    """Concession-based division policy around the intent sequence model."""
    scenario = state.scenario
    assert isinstance(scenario, DNScenario)
    own_values = scenario.values[role]

    def value_to_me(split: Split) -> int:
        return _split_value(role, scenario, split)

    partner_splits = [
        act.split
        for event, act in zip(state.events, state.acts)
        if event.role != role and act.split is not None
    ]
    partner_latest = partner_splits[-1] if partner_splits else None
    prev_partner_value = value_to_me(partner_splits[-2]) if len(partner_splits) > 1 else None

    pending = state.pending_offer
    if pending is not None and pending[0] != role:
        offered = pending[1]
        assert isinstance(offered, Split)
        v = value_to_me(offered)
        if v >= target_value or (prev_partner_value is not None and v >= prev_partner_value):
            return CoarseDialogueAct(Intent.ACCEPT)
        return CoarseDialogueAct(Intent.REJECT)

    own_latest = state.latest_proposal(role)
    if not isinstance(own_latest, Split):
        own_latest = None
    current = own_latest if own_latest is not None else Split({role: dict(scenario.counts)})

    # Accept a good partner proposal outright.
    if partner_latest is not None:
        v = value_to_me(partner_latest)
        if v >= target_value or (prev_partner_value is not None and v > prev_partner_value):
            last_partner_intent = None
            for event, act in zip(reversed(state.events), reversed(state.acts)):
                if event.role != role:
                    last_partner_intent = act.intent
                    break
            if last_partner_intent in (Intent.PROPOSE, Intent.COUNTER):
                return CoarseDialogueAct(Intent.AGREE)

    last_partner_intent = None
    for event, act in zip(reversed(state.events), reversed(state.acts)):
        if event.role != role:
            last_partner_intent = act.intent
            break
    if last_partner_intent == Intent.AGREE:
        return CoarseDialogueAct(Intent.OFFER, split=current.completed(scenario, role.partner))

    if len(state.events) >= config.deadline_turns:
        return CoarseDialogueAct(Intent.OFFER, split=current.completed(scenario, role.partner))

    intent = _sample_intent(state, config, rng)
    if intent in (Intent.GREET, Intent.INQUIRE, Intent.INFORM, Intent.UNKNOWN):
        return CoarseDialogueAct(intent)
    if intent == Intent.OFFER:
        return CoarseDialogueAct(Intent.OFFER, split=current.completed(scenario, role.partner))
    if intent in (Intent.AGREE, Intent.ACCEPT) and partner_latest is not None:
        if value_to_me(partner_latest) >= target_value:
            return CoarseDialogueAct(Intent.AGREE)

    # Disagreement path: concede the least-lopsided item, grab a freebie.
    holdings = {item: current.count_for(role, item) for item in ITEMS}
    item = concede_item(own_values, est, holdings)
    if item is None:
        return CoarseDialogueAct(Intent.OFFER, split=current.completed(scenario, role.partner))
    holdings[item] -= 1
    est_values = est.est_values
    complete = current.completed(scenario, remainder_to=role.partner)
    for candidate in ITEMS:
        if est_values[candidate] == 0.0 and complete.count_for(role.partner, candidate) > 0:
            holdings[candidate] = holdings.get(candidate, 0) + 1
            break
    proposal = Split({role: {k: v for k, v in holdings.items() if v > 0}})
    intent_out = Intent.COUNTER if partner_latest is not None else Intent.PROPOSE
    return CoarseDialogueAct(intent_out, split=proposal)
