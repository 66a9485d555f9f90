"""negokit: a modular negotiation dialogue engine.

Parser (rules) -> manager (learned or hybrid act policy) -> generator
(retrieval), with self-play training loops, a session service and a CLI.
"""

__version__ = "0.1.0"

from .core import (
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DialogueState,
    DialogueStatus,
    DNScenario,
    EventKind,
    Intent,
    Outcome,
    Role,
    Split,
    bin_price,
    denormalize_price,
    dn_utility,
    money,
    normalize_price,
    utility,
)

__all__ = [
    "CBScenario",
    "CoarseDialogueAct",
    "DialogueEvent",
    "DialogueState",
    "DialogueStatus",
    "DNScenario",
    "EventKind",
    "Intent",
    "Outcome",
    "Role",
    "Split",
    "bin_price",
    "denormalize_price",
    "dn_utility",
    "money",
    "normalize_price",
    "utility",
]
