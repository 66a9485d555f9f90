"""Episode execution and the training loops (supervised fit, RL fine-tuning)."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DialogueState,
    DNScenario,
    EventKind,
    Intent,
    Role,
    Scenario,
)
from .corpus import DialogueRecord, ParsedDialogue, lexicon_from_records, parse_corpus
from .generator import (
    GenerationError,
    GeneratorConfig,
    RetrievalIndex,
    build_index,
    extract_template,
    realize,
)
from .lm import TrigramLM
from .manager import (
    HybridConfig,
    PartnerEstimate,
    PolicyParams,
    Step,
    TrainerConfig,
    encode_dialogue_pairs,
    hybrid_next_act_cb,
    hybrid_next_act_dn,
    mle_fit,
    policy_next_act,
    reinforce_update,
    update_partner_estimate,
)
from .parser import ParseContext, PriceLexicon, canonical_act, parse_utterance
from .rewards import EpisodeMetrics, RewardKind, compute_metrics, episode_reward, outcome_from_state

logger = logging.getLogger(__name__)

AGENT_KINDS = ("sl_act", "rl_act", "hybrid")


@dataclass
class EpisodeConfig:
    max_turns: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.max_turns < 2:
            raise ValueError("max_turns must be >= 2")


@dataclass
class EngineArtifacts:
    """Everything a trained agent needs: lexicon, policy, index, intent model."""

    lexicon: PriceLexicon
    params: PolicyParams
    index: RetrievalIndex
    intent_lm: TrigramLM
    gen_config: GeneratorConfig = field(default_factory=GeneratorConfig)

    def save(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.lexicon.save(directory / "lexicon.json")
        self.params.save(directory / "policy.json")
        self.index.save(directory / "index.json")
        (directory / "intent_lm.json").write_text(self.intent_lm.to_json(), encoding="utf-8")
        meta = {
            "k": self.gen_config.k,
            "smoothing": self.gen_config.smoothing,
            "length_normalize": self.gen_config.length_normalize,
        }
        (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "EngineArtifacts":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
        return cls(
            lexicon=PriceLexicon.load(directory / "lexicon.json"),
            params=PolicyParams.load(directory / "policy.json"),
            index=RetrievalIndex.load(directory / "index.json"),
            intent_lm=TrigramLM.from_json((directory / "intent_lm.json").read_text(encoding="utf-8")),
            gen_config=GeneratorConfig(
                k=meta["k"], smoothing=meta["smoothing"], length_normalize=meta["length_normalize"]
            ),
        )


@dataclass
class AgentSpec:
    """Declarative agent description; runtimes are built per episode."""

    kind: str
    role: Role
    artifacts: EngineArtifacts
    params: Optional[PolicyParams] = None
    reward_kind: Optional[RewardKind] = None
    mode: str = "sample"
    dn_target: int = 7
    collect_steps: bool = False

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind in ("sl_act", "rl_act") and self.params is None:
            self.params = self.artifacts.params

    def with_role(self, role: Role) -> "AgentSpec":
        return replace(self, role=role)


@dataclass
class EpisodeResult:
    state: DialogueState
    outcome: object
    steps: dict[Role, list[Step]]

    def transcript_text(self) -> str:
        lines = []
        for event, act in zip(self.state.events, self.state.acts):
            body = event.text if event.text is not None else ""
            if event.price is not None:
                body = f"{body} {event.price}".strip()
            lines.append(f"{event.turn}\t{event.role.value}\t{event.kind.value}\t{body}\t{act}")
        return "\n".join(lines)


class _Runtime:
    def __init__(self, spec: AgentSpec, deadline_turns: int):
        self.spec = spec
        self.steps: list[Step] = []
        self.hybrid_cfg: Optional[HybridConfig] = None
        self.estimate = PartnerEstimate.uniform(spec.role)
        if spec.kind == "hybrid":
            self.hybrid_cfg = HybridConfig(
                intent_lm=spec.artifacts.intent_lm, deadline_turns=deadline_turns
            )

    def next_act(self, state: DialogueState, rng: np.random.Generator) -> CoarseDialogueAct:
        spec = self.spec
        if spec.kind == "hybrid":
            if isinstance(state.scenario, CBScenario):
                return hybrid_next_act_cb(state, spec.role, self.hybrid_cfg, rng)
            return hybrid_next_act_dn(
                state, spec.role, self.estimate, spec.dn_target, self.hybrid_cfg, rng
            )
        allowed = None
        if state.pending_offer is not None and state.pending_offer[0] != spec.role:
            allowed = (Intent.ACCEPT, Intent.REJECT)
        turns = [(e.role, a) for e, a in zip(state.events, state.acts)]
        act, steps = policy_next_act(
            spec.params,
            state.scenario,
            turns,
            spec.role,
            rng,
            mode=spec.mode,
            allowed_intents=allowed,
        )
        if spec.collect_steps:
            self.steps.extend(steps)
        return act

    def observe(self, partner_act: CoarseDialogueAct) -> None:
        if partner_act.split is not None:
            self.estimate = update_partner_estimate(self.estimate, partner_act)


def _sanitize(act: CoarseDialogueAct, state: DialogueState, ctx: ParseContext) -> CoarseDialogueAct:
    """Repair structurally impossible acts, align intents with the parser."""
    if act.intent in (Intent.ACCEPT, Intent.REJECT) and state.pending_offer is None:
        act = CoarseDialogueAct(Intent.UNKNOWN)
    elif act.intent == Intent.OFFER and act.argument is None:
        act = CoarseDialogueAct(Intent.UNKNOWN)
    if act.intent.is_structural:
        return act
    return canonical_act(act, ctx)


def run_episode(
    agent_a: AgentSpec,
    agent_b: AgentSpec,
    scenario: Scenario,
    config: Optional[EpisodeConfig] = None,
) -> EpisodeResult:
    """Alternating self-play until a terminal action or the turn cap."""
    config = config or EpisodeConfig()
    if {agent_a.role, agent_b.role} != set(scenario.roles):
        raise ValueError("agents must cover the scenario's two roles")
    rng = np.random.default_rng(config.seed)
    deadline = max(2, min(14, config.max_turns - 6))
    runtimes = {spec.role: _Runtime(spec, deadline) for spec in (agent_a, agent_b)}
    state = DialogueState(scenario)
    current = scenario.roles[0]

    while not state.is_terminal and len(state.events) < config.max_turns:
        rt = runtimes[current]
        ctx = ParseContext.from_state(state, current)
        act = _sanitize(rt.next_act(state, rng), state, ctx)
        turn = len(state.events)

        if act.intent == Intent.OFFER:
            event = DialogueEvent(turn, current, EventKind.OFFER, price=act.price, split=act.split)
        elif act.intent == Intent.ACCEPT:
            event = DialogueEvent(turn, current, EventKind.ACCEPT)
        elif act.intent == Intent.REJECT:
            event = DialogueEvent(turn, current, EventKind.REJECT)
        elif act.intent == Intent.QUIT:
            event = DialogueEvent(turn, current, EventKind.QUIT)
        else:
            artifacts = rt.spec.artifacts
            context_act = None
            context_template = None
            if state.events and state.events[-1].kind == EventKind.MESSAGE:
                context_act = state.acts[-1]
                context_template = extract_template(
                    state.events[-1].text, context_act, scenario, artifacts.lexicon
                )
            text = realize(
                artifacts.index,
                act,
                context_act,
                context_template,
                ctx,
                artifacts.lexicon,
                artifacts.gen_config,
                rng,
            )
            event = DialogueEvent(turn, current, EventKind.MESSAGE, text=text)

        recorded = parse_utterance(event, ctx, rt.spec.artifacts.lexicon)
        state = state.with_event(event, recorded)
        runtimes[current.partner].observe(recorded)
        current = current.partner

    if not state.is_terminal:
        state = state.finished_without_agreement()
    outcome = outcome_from_state(state)
    return EpisodeResult(state, outcome, {role: rt.steps for role, rt in runtimes.items()})


# ---------------------------------------------------------------------------
# Training pipelines
# ---------------------------------------------------------------------------


def train_sl(
    records: Sequence[DialogueRecord],
    smoothing: float = 0.1,
    gen_config: Optional[GeneratorConfig] = None,
) -> EngineArtifacts:
    """Parse the corpus, fit the act policy, build the retrieval index."""
    if not records:
        raise ValueError("cannot train on an empty corpus")
    gen_config = gen_config or GeneratorConfig()
    lexicon = lexicon_from_records(records)
    parsed = parse_corpus(records, lexicon)
    params = mle_fit(parsed, smoothing=smoothing)
    index = build_index(parsed, lexicon, gen_config)
    intent_lm = TrigramLM(smoothing=0.1)
    intent_lm.fit([[act.intent.value for act in d.acts] for d in parsed])
    return EngineArtifacts(lexicon, params, index, intent_lm, gen_config)


def corpus_nll(params: PolicyParams, parsed: Sequence[ParsedDialogue]) -> float:
    """Mean negative log-likelihood of the corpus under the act policy."""
    import math

    total, n = 0.0, 0
    for dialogue in parsed:
        for perspective in dialogue.scenario.roles:
            for ctx, token_id in encode_dialogue_pairs(
                dialogue.scenario, dialogue.turns, perspective
            ):
                p = float(params.probs(ctx)[token_id])
                total += -math.log(p) if p > 0 else float("inf")
                n += 1
    return total / n if n else 0.0


@dataclass
class TrainingReport:
    reward_kind: str
    seed: int
    episodes: int
    reward_curve: list[float]
    validation_curve: list[tuple[int, float]]
    best_episode: int
    best_validation_reward: float
    config: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "reward_kind": self.reward_kind,
                "seed": self.seed,
                "episodes": self.episodes,
                "reward_curve": self.reward_curve,
                "validation_curve": self.validation_curve,
                "best_episode": self.best_episode,
                "best_validation_reward": self.best_validation_reward,
                "config": self.config,
            },
            sort_keys=True,
        )

    def curve_csv(self) -> str:
        lines = ["episode,reward"]
        lines += [f"{i},{r}" for i, r in enumerate(self.reward_curve)]
        return "\n".join(lines) + "\n"


def _mean_reward(
    params: PolicyParams,
    partner: AgentSpec,
    reward_kind: RewardKind,
    scenarios: Sequence[Scenario],
    learner_role: Role,
    artifacts: EngineArtifacts,
    episode_config: EpisodeConfig,
    n_episodes: int,
    seed: int,
) -> float:
    total = 0.0
    rng = np.random.default_rng(seed)
    learner = AgentSpec("rl_act", learner_role, artifacts, params=params, reward_kind=reward_kind)
    for i in range(n_episodes):
        scenario = scenarios[i % len(scenarios)]
        cfg = replace(episode_config, seed=int(rng.integers(2**31)))
        result = run_episode(learner, partner, scenario, cfg)
        total += episode_reward(reward_kind, result.outcome, result.state, learner_role)
    return total / n_episodes


def train_rl(
    initial: PolicyParams,
    partner: AgentSpec,
    reward_kind: RewardKind,
    trainer: TrainerConfig,
    scenarios: Sequence[Scenario],
    artifacts: EngineArtifacts,
    learner_role: Role = Role.BUYER,
    episode_config: Optional[EpisodeConfig] = None,
) -> tuple[PolicyParams, TrainingReport]:
    """REINFORCE against a frozen partner; keeps the best validation checkpoint."""
    if not scenarios:
        raise ValueError("need at least one training scenario")
    episode_config = episode_config or EpisodeConfig()
    params = initial.copy()
    master = np.random.default_rng(trainer.seed)
    curve: list[float] = []
    validation: list[tuple[int, float]] = []
    best = params.copy()
    best_reward = -float("inf")
    best_episode = 0
    val_seed = trainer.seed + 7777

    def validate(episode_idx: int, current: PolicyParams) -> None:
        nonlocal best, best_reward, best_episode
        mean = _mean_reward(
            current,
            partner,
            reward_kind,
            scenarios,
            learner_role,
            artifacts,
            episode_config,
            trainer.validation_episodes,
            val_seed,
        )
        validation.append((episode_idx, mean))
        if mean > best_reward:
            best, best_reward, best_episode = current.copy(), mean, episode_idx

    for episode in range(trainer.episodes):
        scenario = scenarios[int(master.integers(len(scenarios)))]
        cfg = replace(episode_config, seed=int(master.integers(2**31)))
        learner = AgentSpec(
            "rl_act",
            learner_role,
            artifacts,
            params=params,
            reward_kind=reward_kind,
            mode="sample",
            collect_steps=True,
        )
        result = run_episode(learner, partner, scenario, cfg)
        reward = episode_reward(reward_kind, result.outcome, result.state, learner_role)
        curve.append(reward)
        try:
            reinforce_update(params, result.steps[learner_role], reward, trainer)
        except ArithmeticError as exc:
            logger.warning("stopping RL at episode %d: %s", episode, exc)
            break
        if (episode + 1) % trainer.validate_every == 0:
            validate(episode + 1, params)

    validate(len(curve), params)
    report = TrainingReport(
        reward_kind=reward_kind.value,
        seed=trainer.seed,
        episodes=len(curve),
        reward_curve=curve,
        validation_curve=validation,
        best_episode=best_episode,
        best_validation_reward=best_reward,
        config={
            "learning_rate": trainer.learning_rate,
            "max_turns": episode_config.max_turns,
            "validate_every": trainer.validate_every,
            "validation_episodes": trainer.validation_episodes,
            "learner_role": learner_role.value,
        },
    )
    return best, report


def evaluate_batch(
    agent_a: AgentSpec,
    agent_b: AgentSpec,
    n_episodes: int,
    seed: int,
    scenarios: Sequence[Scenario],
    episode_config: Optional[EpisodeConfig] = None,
) -> list[EpisodeResult]:
    """A seeded batch of self-play episodes (deterministic given the seed)."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if not scenarios:
        raise ValueError("need at least one scenario")
    episode_config = episode_config or EpisodeConfig()
    rng = np.random.default_rng(seed)
    results = []
    for i in range(n_episodes):
        scenario = scenarios[i % len(scenarios)]
        cfg = replace(episode_config, seed=int(rng.integers(2**31)))
        results.append(run_episode(agent_a, agent_b, scenario, cfg))
    return results


def evaluate(
    agent_a: AgentSpec,
    agent_b: AgentSpec,
    n_episodes: int,
    seed: int,
    scenarios: Sequence[Scenario],
    episode_config: Optional[EpisodeConfig] = None,
) -> EpisodeMetrics:
    results = evaluate_batch(agent_a, agent_b, n_episodes, seed, scenarios, episode_config)
    return compute_metrics([(r.state, r.outcome) for r in results])
