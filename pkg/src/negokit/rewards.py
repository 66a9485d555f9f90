"""Episode-level reward functions and batch outcome metrics."""
from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .core import (
    CBScenario,
    DialogueState,
    DialogueStatus,
    DNScenario,
    EventKind,
    Outcome,
    Role,
    dn_utility,
    utility,
)

NO_AGREEMENT_REWARD = -1.0


class RewardKind(str, enum.Enum):
    UTILITY = "utility"
    FAIRNESS = "fairness"
    LENGTH = "length"


def outcome_from_state(state: DialogueState) -> Outcome:
    """Summarize a finished dialogue; utilities are zero without agreement."""
    if not state.is_terminal:
        raise ValueError("dialogue is not terminal")
    agreed = state.status == DialogueStatus.AGREED
    utilities: dict[Role, float] = {}
    if agreed:
        if isinstance(state.scenario, CBScenario):
            for role in state.scenario.roles:
                utilities[role] = utility(role, state.scenario, state.final_price)
        else:
            for role in state.scenario.roles:
                utilities[role] = float(dn_utility(role, state.scenario, state.final_split))
    else:
        utilities = {role: 0.0 for role in state.scenario.roles}
    return Outcome(
        agreement=agreed,
        final_price=state.final_price if agreed else None,
        final_split=state.final_split if agreed else None,
        utilities=utilities,
        num_turns=len(state.events),
    )


def episode_reward(
    kind: RewardKind,
    outcome: Outcome,
    dialogue: DialogueState,
    perspective: Role,
    signed_fairness: bool = False,
) -> float:
    """Reward of a finished episode; -1 for every kind without agreement."""
    if not dialogue.is_terminal:
        raise ValueError("dialogue is not terminal")
    if not outcome.agreement:
        return NO_AGREEMENT_REWARD
    if kind == RewardKind.UTILITY:
        return float(outcome.utilities[perspective])
    if kind == RewardKind.FAIRNESS:
        u_self = outcome.utilities[perspective]
        u_other = outcome.utilities[perspective.partner]
        diff = u_self - u_other
        return float(diff) if signed_fairness else -abs(float(diff))
    if kind == RewardKind.LENGTH:
        return float(len(dialogue.events))
    raise ValueError(f"unknown reward kind {kind!r}")


@dataclass(frozen=True)
class EpisodeMetrics:
    agreement_rate: float
    avg_turns: float
    avg_utility: Mapping[Role, float]
    distinct_utterance_ratio: float
    top_sentence_concentration: float
    num_episodes: int

    def to_dict(self) -> dict:
        return {
            "agreement_rate": self.agreement_rate,
            "avg_turns": self.avg_turns,
            "avg_utility": {role.value: u for role, u in self.avg_utility.items()},
            "distinct_utterance_ratio": self.distinct_utterance_ratio,
            "top_sentence_concentration": self.top_sentence_concentration,
            "num_episodes": self.num_episodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def compute_metrics(episodes: Sequence[tuple[DialogueState, Outcome]]) -> EpisodeMetrics:
    """Aggregate agreement, length, utility and repetition statistics.

    Average utilities are taken over agreed episodes; the concentration is
    the share of all utterances covered by the three most frequent ones.
    """
    if not episodes:
        raise ValueError("no episodes to aggregate")
    agreed = [o for _, o in episodes if o.agreement]
    roles = episodes[0][0].scenario.roles
    avg_utility = {
        role: (sum(o.utilities[role] for o in agreed) / len(agreed)) if agreed else 0.0
        for role in roles
    }
    utterances = [
        event.text
        for state, _ in episodes
        for event in state.events
        if event.kind == EventKind.MESSAGE
    ]
    if utterances:
        counts = Counter(utterances)
        distinct_ratio = len(counts) / len(utterances)
        top3 = sum(c for _, c in counts.most_common(3))
        concentration = top3 / len(utterances)
    else:
        distinct_ratio = 0.0
        concentration = 0.0
    return EpisodeMetrics(
        agreement_rate=len(agreed) / len(episodes),
        avg_turns=sum(len(s.events) for s, _ in episodes) / len(episodes),
        avg_utility=avg_utility,
        distinct_utterance_ratio=distinct_ratio,
        top_sentence_concentration=concentration,
        num_episodes=len(episodes),
    )


def metrics_to_csv(rows: Mapping[str, EpisodeMetrics]) -> str:
    """One labeled row per configuration."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        [
            "config",
            "num_episodes",
            "agreement_rate",
            "avg_turns",
            "distinct_utterance_ratio",
            "top_sentence_concentration",
            "avg_utility_by_role",
        ]
    )
    for label in sorted(rows):
        m = rows[label]
        util = ";".join(f"{role.value}={m.avg_utility[role]:.4f}" for role in m.avg_utility)
        writer.writerow(
            [
                label,
                m.num_episodes,
                f"{m.agreement_rate:.4f}",
                f"{m.avg_turns:.4f}",
                f"{m.distinct_utterance_ratio:.4f}",
                f"{m.top_sentence_concentration:.4f}",
                util,
            ]
        )
    return buf.getvalue()
