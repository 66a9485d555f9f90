import pytest

from negokit.core import (
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DialogueState,
    EventKind,
    Intent,
    Role,
    money,
    utility,
)
from negokit.rewards import (
    EpisodeMetrics,
    RewardKind,
    compute_metrics,
    episode_reward,
    metrics_to_csv,
    outcome_from_state,
)


def finished_dialogue(final_price=None, events_text=("hi", "hello"), quit_=False):
    scenario = CBScenario("electronics", "tv", "", money(275), money(192))
    state = DialogueState(scenario)
    roles = [Role.BUYER, Role.SELLER]
    for i, text in enumerate(events_text):
        state = state.with_event(
            DialogueEvent(i, roles[i % 2], EventKind.MESSAGE, text=text),
            CoarseDialogueAct(Intent.UNKNOWN),
        )
    n = len(state.events)
    offerer = roles[n % 2]
    if final_price is not None:
        state = state.with_event(
            DialogueEvent(n, offerer, EventKind.OFFER, price=money(final_price)),
            CoarseDialogueAct(Intent.OFFER, price=money(final_price)),
        )
        state = state.with_event(
            DialogueEvent(n + 1, offerer.partner, EventKind.ACCEPT),
            CoarseDialogueAct(Intent.ACCEPT),
        )
    elif quit_:
        state = state.with_event(
            DialogueEvent(n, offerer, EventKind.QUIT), CoarseDialogueAct(Intent.QUIT)
        )
    else:
        state = state.finished_without_agreement()
    return state


class TestEpisodeReward:
    def test_no_agreement_is_minus_one_for_every_kind(self):
        state = finished_dialogue(quit_=True)
        outcome = outcome_from_state(state)
        for kind in RewardKind:
            assert episode_reward(kind, outcome, state, Role.BUYER) == -1.0
            assert episode_reward(kind, outcome, state, Role.SELLER) == -1.0

    def test_utility_reward_matches_core(self):
        state = finished_dialogue(final_price=225)
        outcome = outcome_from_state(state)
        expected = utility(Role.BUYER, state.scenario, money(225))
        assert episode_reward(RewardKind.UTILITY, outcome, state, Role.BUYER) == pytest.approx(expected)
        assert expected == pytest.approx(8.5 / 41.5)

    def test_utility_reward_antisymmetric(self):
        state = finished_dialogue(final_price=210)
        outcome = outcome_from_state(state)
        b = episode_reward(RewardKind.UTILITY, outcome, state, Role.BUYER)
        s = episode_reward(RewardKind.UTILITY, outcome, state, Role.SELLER)
        assert b + s == pytest.approx(0.0, abs=1e-9)

    def test_fairness_is_negative_absolute_difference(self):
        state = finished_dialogue(final_price=225)
        outcome = outcome_from_state(state)
        u = outcome.utilities
        expected = -abs(u[Role.BUYER] - u[Role.SELLER])
        got = episode_reward(RewardKind.FAIRNESS, outcome, state, Role.BUYER)
        assert got == pytest.approx(expected)
        assert got <= 0.0
        assert got == episode_reward(RewardKind.FAIRNESS, outcome, state, Role.SELLER)

    def test_fairness_zero_at_midpoint(self):
        state = finished_dialogue(final_price="233.50")
        outcome = outcome_from_state(state)
        assert episode_reward(RewardKind.FAIRNESS, outcome, state, Role.BUYER) == pytest.approx(0.0)

    def test_signed_fairness_flag(self):
        state = finished_dialogue(final_price=225)
        outcome = outcome_from_state(state)
        signed = episode_reward(RewardKind.FAIRNESS, outcome, state, Role.BUYER, signed_fairness=True)
        u = outcome.utilities
        assert signed == pytest.approx(u[Role.BUYER] - u[Role.SELLER])

    def test_length_counts_all_events(self):
        state = finished_dialogue(final_price=225, events_text=("a", "b", "c", "d"))
        outcome = outcome_from_state(state)
        assert episode_reward(RewardKind.LENGTH, outcome, state, Role.BUYER) == 6.0

    def test_non_terminal_rejected(self):
        scenario = CBScenario("electronics", "tv", "", money(275), money(192))
        state = DialogueState(scenario)
        terminal = finished_dialogue(final_price=225)
        outcome = outcome_from_state(terminal)
        with pytest.raises(ValueError):
            episode_reward(RewardKind.UTILITY, outcome, state, Role.BUYER)


class TestOutcome:
    def test_agreed_outcome(self):
        state = finished_dialogue(final_price=225)
        outcome = outcome_from_state(state)
        assert outcome.agreement
        assert outcome.final_price == money(225)
        assert outcome.num_turns == len(state.events)

    def test_no_agreement_outcome_has_no_price(self):
        state = finished_dialogue(quit_=True)
        outcome = outcome_from_state(state)
        assert not outcome.agreement
        assert outcome.final_price is None
        assert outcome.utilities == {Role.BUYER: 0.0, Role.SELLER: 0.0}


class TestMetrics:
    def test_single_agreed_episode(self):
        state = finished_dialogue(final_price=225)
        metrics = compute_metrics([(state, outcome_from_state(state))])
        assert metrics.agreement_rate == 1.0
        assert metrics.avg_turns == len(state.events)

    def test_repeating_bot_has_full_concentration(self):
        state = finished_dialogue(final_price=225, events_text=("same line",) * 6)
        metrics = compute_metrics([(state, outcome_from_state(state))])
        assert metrics.top_sentence_concentration == 1.0
        assert metrics.distinct_utterance_ratio == pytest.approx(1 / 6)

    def test_hand_built_batch(self):
        episodes = []
        for price, texts in [(225, ("a", "b")), (None, ("c", "d", "e", "f")), (200, ("a", "g"))]:
            state = finished_dialogue(final_price=price, events_text=texts)
            episodes.append((state, outcome_from_state(state)))
        metrics = compute_metrics(episodes)
        assert metrics.agreement_rate == pytest.approx(2 / 3)
        assert metrics.avg_turns == pytest.approx((4 + 4 + 4) / 3)
        agreed_utils = [
            utility(Role.BUYER, episodes[0][0].scenario, money(225)),
            utility(Role.BUYER, episodes[0][0].scenario, money(200)),
        ]
        assert metrics.avg_utility[Role.BUYER] == pytest.approx(sum(agreed_utils) / 2)
        # utterances: a,b,c,d,e,f,a,g -> top3 = a(2), b(1), c(1)
        assert metrics.top_sentence_concentration == pytest.approx(4 / 8)
        assert metrics.distinct_utterance_ratio == pytest.approx(7 / 8)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([])

    def test_csv_export(self):
        state = finished_dialogue(final_price=225)
        metrics = compute_metrics([(state, outcome_from_state(state))])
        text = metrics_to_csv({"run": metrics})
        lines = text.strip().splitlines()
        assert lines[0].startswith("config,")
        assert lines[1].startswith("run,")

    def test_json_export(self):
        state = finished_dialogue(final_price=225)
        metrics = compute_metrics([(state, outcome_from_state(state))])
        assert '"agreement_rate": 1.0' in metrics.to_json()
