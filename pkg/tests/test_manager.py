import math
from decimal import Decimal

import numpy as np
import pytest

from negokit.core import (
    BIN_VALUES,
    CBScenario,
    CoarseDialogueAct,
    DialogueEvent,
    DialogueState,
    DNScenario,
    EventKind,
    Intent,
    Role,
    Split,
    bin_price,
    money,
    normalize_price,
)
from negokit.lm import TrigramLM
from negokit.manager import (
    HybridConfig,
    PartnerEstimate,
    PolicyParams,
    Step,
    TrainerConfig,
    VOCAB,
    YOU,
    THEM,
    act_to_tokens,
    concede_item,
    context_levels,
    encode_dialogue_pairs,
    fit_pairs,
    hybrid_next_act_cb,
    hybrid_next_act_dn,
    mle_fit,
    policy_next_act,
    reinforce_update,
    tokens_to_act,
    trajectory_grad,
    trajectory_logprob,
    update_partner_estimate,
)


def cb(listing=275, target=192):
    return CBScenario("electronics", "tv", "", money(listing), money(target))


def dn():
    return DNScenario(
        {"book": 1, "hat": 2, "ball": 1},
        {
            Role.AGENT_A: {"book": 6, "hat": 1, "ball": 2},
            Role.AGENT_B: {"book": 2, "hat": 3, "ball": 2},
        },
    )


class FakeDialogue:
    def __init__(self, scenario, turns):
        self.scenario = scenario
        self.turns = turns


class TestActTokens:
    def test_offer_serialization(self):
        s = cb()
        price = money("225.20")  # buyer bin 0.60
        toks = act_to_tokens(CoarseDialogueAct(Intent.OFFER, price=price), YOU, Role.BUYER, s)
        assert toks == [YOU, "offer", "price:0.60"]

    def test_no_argument_act(self):
        toks = act_to_tokens(CoarseDialogueAct(Intent.GREET), YOU, Role.BUYER, cb())
        assert toks == [YOU, "greet"]

    def test_round_trip_all_bins_and_intents(self):
        s = cb()
        for intent in (Intent.PROPOSE, Intent.COUNTER, Intent.OFFER):
            for binned in BIN_VALUES:
                toks = [THEM, intent.value, f"price:{binned}"]
                act = tokens_to_act(toks, Role.SELLER, s)
                assert act.intent == intent
                back = bin_price(normalize_price(Role.SELLER, s, act.price))
                assert back == binned

    def test_dn_split_round_trip(self):
        s = dn()
        split = Split({Role.AGENT_A: {"book": 1, "ball": 1}, Role.AGENT_B: {"hat": 2}})
        toks = act_to_tokens(CoarseDialogueAct(Intent.PROPOSE, split=split), YOU, Role.AGENT_A, s)
        act = tokens_to_act(toks, Role.AGENT_A, s)
        assert act.intent == Intent.PROPOSE
        assert act.split.allocation == split.allocation

    def test_malformed_tokens_error(self):
        with pytest.raises(ValueError, match="unparseable"):
            tokens_to_act(["greet"], Role.BUYER, cb())
        with pytest.raises(ValueError, match="unparseable"):
            tokens_to_act([YOU, "propose", "greet"], Role.BUYER, cb())
        with pytest.raises(ValueError):
            tokens_to_act([YOU, "greet", "price:0.50"], Role.BUYER, cb())


def trigram_counts(pairs):
    counts = {}
    for ctx, tok in pairs:
        counts.setdefault(ctx, {}).setdefault(tok, 0)
        counts[ctx][tok] += 1
    return counts


class TestMleFit:
    def dialogue(self, intents, scenario=None):
        scenario = scenario or cb()
        roles = scenario.roles
        turns = tuple(
            (roles[i % 2], CoarseDialogueAct(Intent(i_name))) for i, i_name in enumerate(intents)
        )
        return FakeDialogue(scenario, turns)

    def test_deterministic_sequence_probability_one(self):
        d = self.dialogue(["greet", "greet", "inquire"])
        params = mle_fit([d, d, d], smoothing=0.0)
        pairs = encode_dialogue_pairs(d.scenario, d.turns, Role.BUYER)
        first_ctx = pairs[0][0]
        assert params.probs(first_ctx)[pairs[0][1]] == pytest.approx(1.0)

    def test_matches_relative_frequencies_exactly(self):
        dialogues = [
            self.dialogue(["greet", "greet", "inquire", "inform"]),
            self.dialogue(["greet", "inquire", "inform", "agree"]),
            self.dialogue(["greet", "greet", "agree", "agree"]),
        ]
        params = mle_fit(dialogues, smoothing=0.0)
        pairs = []
        for d in dialogues:
            for perspective in d.scenario.roles:
                pairs.extend(encode_dialogue_pairs(d.scenario, d.turns, perspective))
        for ctx, by_tok in trigram_counts(pairs).items():
            total = sum(by_tok.values())
            probs = params.probs(ctx)
            for tok, count in by_tok.items():
                assert probs[tok] == pytest.approx(count / total, abs=1e-12)
            # unseen tokens get exactly zero at zero smoothing
            seen = set(by_tok)
            assert sum(probs[t] for t in range(len(VOCAB)) if t not in seen) == pytest.approx(0.0)

    def test_normalization(self):
        d = self.dialogue(["greet", "inquire", "inform"])
        for lam in (0.0, 0.1, 1.0):
            params = mle_fit([d], smoothing=lam)
            for ctx in params.weights:
                assert params.probs(ctx).sum() == pytest.approx(1.0, abs=1e-9)

    def test_laplace_smoothing_counts(self):
        d = self.dialogue(["greet", "greet"])
        lam = 0.5
        params = mle_fit([d], smoothing=lam)
        pairs = encode_dialogue_pairs(d.scenario, d.turns, Role.BUYER)
        ctx, tok = pairs[1]
        counts = trigram_counts(
            p for persp in d.scenario.roles for p in encode_dialogue_pairs(d.scenario, d.turns, persp)
        )[ctx]
        total = sum(counts.values())
        expected = (counts[tok] + lam) / (total + lam * len(VOCAB))
        assert params.probs(ctx)[tok] == pytest.approx(expected, rel=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            mle_fit([], smoothing=0.0)

    def test_backoff_levels_are_fit(self):
        d = self.dialogue(["greet", "greet"])
        params = mle_fit([d], smoothing=0.0)
        assert any(ctx.startswith("<any> <any>") for ctx in params.weights)


class TestPolicyNextAct:
    def fitted(self):
        turns = tuple(
            (role, CoarseDialogueAct(intent))
            for role, intent in [
                (Role.BUYER, Intent.GREET),
                (Role.SELLER, Intent.GREET),
                (Role.BUYER, Intent.INQUIRE),
                (Role.SELLER, Intent.INFORM),
            ]
        )
        return mle_fit([FakeDialogue(cb(), turns)], smoothing=0.0), turns

    def test_deterministic_given_seed(self):
        params, turns = self.fitted()
        acts = set()
        for _ in range(3):
            rng = np.random.default_rng(99)
            act, _steps = policy_next_act(params, cb(), turns[:1], Role.SELLER, rng)
            acts.add(str(act))
        assert len(acts) == 1

    def test_greedy_follows_counts(self):
        params, turns = self.fitted()
        rng = np.random.default_rng(0)
        act, _ = policy_next_act(params, cb(), turns[:1], Role.SELLER, rng, mode="greedy")
        assert act.intent == Intent.GREET

    def test_mass_one_act_always_emitted(self):
        params, turns = self.fitted()
        for seed in range(5):
            act, _ = policy_next_act(
                params, cb(), turns[:1], Role.SELLER, np.random.default_rng(seed)
            )
            assert act.intent == Intent.GREET

    def test_allowed_intents_mask(self):
        params, turns = self.fitted()
        act, steps = policy_next_act(
            params,
            cb(),
            turns,
            Role.BUYER,
            np.random.default_rng(1),
            allowed_intents=(Intent.ACCEPT, Intent.REJECT),
        )
        assert act.intent in (Intent.ACCEPT, Intent.REJECT)
        assert steps[0].allowed is not None

    def test_unknown_mode_rejected(self):
        params, turns = self.fitted()
        with pytest.raises(ValueError):
            policy_next_act(params, cb(), turns, Role.BUYER, np.random.default_rng(0), mode="magic")


class TestTrajectoryLogprob:
    def test_forced_token_is_free(self):
        params = PolicyParams({"a b buyer na": np.array([0.0] * len(VOCAB))})
        params.weights["a b buyer na"][3] = 50.0
        steps = [Step("a b buyer na", 3)]
        assert trajectory_logprob(params, steps) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_cost(self):
        params = PolicyParams()
        steps = [Step("x y buyer na", 1), Step("x y buyer na", 2)]
        assert trajectory_logprob(params, steps) == pytest.approx(-2 * math.log(len(VOCAB)))

    def test_matches_bruteforce_product(self):
        rng = np.random.default_rng(5)
        ctxs = ["c1 x buyer na", "c2 x buyer na"]
        params = PolicyParams({c: rng.normal(size=len(VOCAB)) for c in ctxs})
        steps = [Step(ctxs[0], 7), Step(ctxs[1], 9), Step(ctxs[0], 7)]
        expected = 1.0
        for step in steps:
            w = params.weights[step.context]
            expected *= float(np.exp(w[step.token_id]) / np.exp(w).sum())
        assert trajectory_logprob(params, steps) == pytest.approx(math.log(expected))

    def test_zero_probability_is_an_error(self):
        params = PolicyParams({"a b buyer na": np.full(len(VOCAB), 0.0)})
        params.weights["a b buyer na"][5] = -1e9
        with pytest.raises(ValueError, match="zero-probability"):
            trajectory_logprob(params, [Step("a b buyer na", 5)])


class TestReinforce:
    def test_zero_advantage_is_a_no_op(self):
        rng = np.random.default_rng(0)
        params = PolicyParams({"c x buyer na": rng.normal(size=len(VOCAB))})
        before = params.weights["c x buyer na"].copy()
        config = TrainerConfig(learning_rate=0.5, baseline_value=1.0, baseline_count=3)
        reinforce_update(params, [Step("c x buyer na", 2)], 1.0, config)
        assert np.array_equal(params.weights["c x buyer na"], before)

    def test_rewarded_trajectory_gains_probability(self):
        rng = np.random.default_rng(1)
        params = PolicyParams({"c x buyer na": rng.normal(size=len(VOCAB))})
        steps = [Step("c x buyer na", 4)]
        before = trajectory_logprob(params, steps)
        config = TrainerConfig(learning_rate=0.1)
        reinforce_update(params, steps, 1.0, config)
        assert trajectory_logprob(params, steps) > before

    def test_baseline_running_mean(self):
        config = TrainerConfig()
        params = PolicyParams()
        for reward in (1.0, 2.0, 3.0):
            reinforce_update(params, [], reward, config)
        assert config.baseline == pytest.approx(2.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        rel_errs = []
        for _ in range(20):
            ctx = "g h buyer na"
            params = PolicyParams({ctx: rng.normal(scale=0.5, size=len(VOCAB))})
            tok = int(rng.integers(len(VOCAB)))
            allowed = None
            if rng.random() < 0.3:
                allowed = tuple(sorted(set([tok] + list(rng.integers(0, len(VOCAB), size=5)))))
            steps = [Step(ctx, tok, allowed)]
            grad = trajectory_grad(params, steps)[ctx]
            for idx in rng.integers(0, len(VOCAB), size=3):
                idx = int(idx)
                h = 1e-5
                params.weights[ctx][idx] += h
                up = trajectory_logprob(params, steps)
                params.weights[ctx][idx] -= 2 * h
                down = trajectory_logprob(params, steps)
                params.weights[ctx][idx] += h
                fd = (up - down) / (2 * h)
                denom = max(abs(grad[idx]), abs(fd), 1e-8)
                rel_errs.append(abs(grad[idx] - fd) / denom)
        assert max(rel_errs) < 1e-4

    def test_nonfinite_gradient_aborts(self):
        params = PolicyParams({"c x buyer na": np.zeros(len(VOCAB))})
        config = TrainerConfig(learning_rate=0.1)
        config.baseline_value = -np.inf
        with pytest.raises(ArithmeticError):
            reinforce_update(params, [Step("c x buyer na", 1)], 1.0, config)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        params = PolicyParams(
            {
                "a b buyer na": rng.normal(size=len(VOCAB)),
                "c d seller gt": np.log(np.arange(1, len(VOCAB) + 1, dtype=float)),
            }
        )
        path = tmp_path / "policy.json"
        params.save(path)
        loaded = PolicyParams.load(path)
        assert set(loaded.weights) == set(params.weights)
        for ctx in params.weights:
            assert np.array_equal(loaded.weights[ctx], params.weights[ctx])
        assert loaded.fingerprint() == params.fingerprint()

    def test_training_reproducibility(self):
        def train():
            turns = tuple(
                (role, CoarseDialogueAct(intent))
                for role, intent in [
                    (Role.BUYER, Intent.GREET),
                    (Role.SELLER, Intent.GREET),
                    (Role.BUYER, Intent.AGREE),
                ]
            )
            params = mle_fit([FakeDialogue(cb(), turns)], smoothing=0.1)
            config = TrainerConfig(learning_rate=0.05, seed=5)
            rng = np.random.default_rng(5)
            for _ in range(20):
                act, steps = policy_next_act(params, cb(), turns[:2], Role.BUYER, rng)
                reinforce_update(params, steps, float(act.intent == Intent.AGREE), config)
            return params.fingerprint()

        assert train() == train()


class TestHybridCb:
    def make_state(self, turns):
        state = DialogueState(cb())
        for i, (role, act, kind, price) in enumerate(turns):
            event = DialogueEvent(
                i, role, kind, text="x" if kind == EventKind.MESSAGE else None, price=price
            )
            state = state.with_event(event, act)
        return state

    def config(self):
        lm = TrigramLM(smoothing=0.1)
        lm.fit([["greet", "greet", "propose", "counter", "counter", "agree", "agree", "offer", "accept"]])
        return HybridConfig(intent_lm=lm)

    def test_split_the_difference(self):
        turns = [
            (Role.BUYER, CoarseDialogueAct(Intent.PROPOSE, price=money(150)), EventKind.MESSAGE, None),
            (Role.SELLER, CoarseDialogueAct(Intent.COUNTER, price=money(245)), EventKind.MESSAGE, None),
        ]
        state = self.make_state(turns)
        rng = np.random.default_rng(0)
        acts = {hybrid_next_act_cb(state, Role.SELLER, self.config(), np.random.default_rng(s)) for s in range(40)}
        counters = [a for a in acts if a.intent == Intent.COUNTER]
        assert counters, "expected at least one counter across seeds"
        assert all(a.price == Decimal("197.50") for a in counters)

    def test_counter_without_partner_proposal_falls_back_to_target(self):
        state = self.make_state([
            (Role.BUYER, CoarseDialogueAct(Intent.GREET), EventKind.MESSAGE, None),
        ])
        for seed in range(40):
            act = hybrid_next_act_cb(state, Role.SELLER, self.config(), np.random.default_rng(seed))
            if act.intent == Intent.PROPOSE:
                assert act.price == Decimal("275.00")
                break
        else:
            pytest.fail("never proposed")

    def test_pending_offer_below_bottomline_rejected(self):
        state = self.make_state([
            (Role.BUYER, CoarseDialogueAct(Intent.OFFER, price=money(150)), EventKind.OFFER, money(150)),
        ])
        act = hybrid_next_act_cb(state, Role.SELLER, self.config(), np.random.default_rng(0))
        assert act.intent == Intent.REJECT

    def test_pending_offer_at_bottomline_accepted(self):
        state = self.make_state([
            (Role.BUYER, CoarseDialogueAct(Intent.OFFER, price=money("192.50")), EventKind.OFFER, money("192.50")),
        ])
        act = hybrid_next_act_cb(state, Role.SELLER, self.config(), np.random.default_rng(0))
        assert act.intent == Intent.ACCEPT

    def test_pending_offer_above_bottomline_accepted(self):
        state = self.make_state([
            (Role.BUYER, CoarseDialogueAct(Intent.OFFER, price=money(225)), EventKind.OFFER, money(225)),
        ])
        act = hybrid_next_act_cb(state, Role.SELLER, self.config(), np.random.default_rng(0))
        assert act.intent == Intent.ACCEPT

    def test_buyer_accepts_anything_at_or_below_listing(self):
        state = self.make_state([
            (Role.SELLER, CoarseDialogueAct(Intent.OFFER, price=money(275)), EventKind.OFFER, money(275)),
        ])
        act = hybrid_next_act_cb(state, Role.BUYER, self.config(), np.random.default_rng(0))
        assert act.intent == Intent.ACCEPT


class TestPartnerEstimate:
    def test_initial_uniform(self):
        est = PartnerEstimate.uniform(Role.AGENT_A)
        assert est.est_values == pytest.approx({"book": 10 / 3, "hat": 10 / 3, "ball": 10 / 3})

    def test_requests_increase_estimate(self):
        est = PartnerEstimate.uniform(Role.AGENT_A)
        ball_split = Split({Role.AGENT_B: {"ball": 1}})
        act = CoarseDialogueAct(Intent.PROPOSE, split=ball_split)
        est = update_partner_estimate(est, act)
        est = update_partner_estimate(est, act)
        values = est.est_values
        assert values["ball"] > values["book"]
        assert values["ball"] > values["hat"]

    def test_always_sums_to_ten(self):
        rng = np.random.default_rng(0)
        est = PartnerEstimate.uniform(Role.AGENT_A)
        for _ in range(20):
            item = ["book", "hat", "ball"][int(rng.integers(3))]
            act = CoarseDialogueAct(Intent.PROPOSE, split=Split({Role.AGENT_B: {item: 1}}))
            est = update_partner_estimate(est, act)
            assert sum(est.est_values.values()) == pytest.approx(10.0)


class TestHybridDn:
    def test_concession_picks_argmin(self):
        own = {"book": 6, "hat": 1, "ball": 2}
        est = PartnerEstimate.from_values(Role.AGENT_A, {"book": 2, "hat": 3, "ball": 2})
        holdings = {"book": 1, "hat": 2, "ball": 1}
        assert concede_item(own, est, holdings) == "hat"

    def test_concession_skips_items_not_held(self):
        own = {"book": 6, "hat": 1, "ball": 2}
        est = PartnerEstimate.from_values(Role.AGENT_A, {"book": 2, "hat": 3, "ball": 2})
        assert concede_item(own, est, {"book": 1, "hat": 0, "ball": 1}) == "ball"

    def test_zero_estimate_item_claimed(self):
        scenario = DNScenario(
            {"book": 1, "hat": 2, "ball": 1},
            {
                Role.AGENT_A: {"book": 6, "hat": 1, "ball": 2},
                Role.AGENT_B: {"book": 2, "hat": 4, "ball": 0},
            },
        )
        state = DialogueState(scenario)
        split = Split({Role.AGENT_A: {"hat": 2}, Role.AGENT_B: {"book": 1, "ball": 1}})
        state = state.with_event(
            DialogueEvent(0, Role.AGENT_A, EventKind.MESSAGE, text="x"),
            CoarseDialogueAct(Intent.PROPOSE, split=Split({Role.AGENT_A: {"hat": 1}})),
        )
        est = PartnerEstimate.from_values(Role.AGENT_B, {"book": 5, "hat": 5, "ball": 0})
        lm = TrigramLM(0.1)
        lm.fit([["propose", "counter", "agree"]])
        config = HybridConfig(intent_lm=lm)
        for seed in range(30):
            act = hybrid_next_act_dn(state, Role.AGENT_B, est, 9, config, np.random.default_rng(seed))
            if act.intent in (Intent.PROPOSE, Intent.COUNTER) and act.split is not None:
                assert act.split.count_for(Role.AGENT_B, "ball") >= 1
                return
        pytest.fail("never proposed a split")

    def test_accepts_offer_meeting_target(self):
        scenario = DNScenario(
            {"book": 1, "hat": 2, "ball": 1},
            {
                Role.AGENT_A: {"book": 6, "hat": 1, "ball": 2},
                Role.AGENT_B: {"book": 2, "hat": 3, "ball": 2},
            },
        )
        state = DialogueState(scenario)
        offered = Split({Role.AGENT_B: {"book": 1, "hat": 2}, Role.AGENT_A: {"ball": 1}})
        state = state.with_event(
            DialogueEvent(0, Role.AGENT_A, EventKind.OFFER, split=offered),
            CoarseDialogueAct(Intent.OFFER, split=offered),
        )
        lm = TrigramLM(0.1)
        lm.fit([["propose", "agree"]])
        config = HybridConfig(intent_lm=lm)
        act = hybrid_next_act_dn(state, Role.AGENT_B, PartnerEstimate.uniform(Role.AGENT_B), 8, config, np.random.default_rng(0))
        assert act.intent == Intent.ACCEPT  # worth 2+6=8 >= target 8

    def test_rejects_offer_below_threshold(self):
        scenario = DNScenario(
            {"book": 1, "hat": 2, "ball": 1},
            {
                Role.AGENT_A: {"book": 6, "hat": 1, "ball": 2},
                Role.AGENT_B: {"book": 2, "hat": 3, "ball": 2},
            },
        )
        state = DialogueState(scenario)
        offered = Split({Role.AGENT_A: {"book": 1, "hat": 2, "ball": 1}})
        state = state.with_event(
            DialogueEvent(0, Role.AGENT_A, EventKind.OFFER, split=offered),
            CoarseDialogueAct(Intent.OFFER, split=offered),
        )
        lm = TrigramLM(0.1)
        lm.fit([["propose", "agree"]])
        config = HybridConfig(intent_lm=lm)
        act = hybrid_next_act_dn(state, Role.AGENT_B, PartnerEstimate.uniform(Role.AGENT_B), 7, config, np.random.default_rng(0))
        assert act.intent == Intent.REJECT


class TestContextLevels:
    def test_exact_comes_first_and_marginal_last(self):
        levels = context_levels("price:0.60 <you> buyer gt")
        assert levels[0] == "price:0.60 <you> buyer gt"
        assert "price:* <you> buyer na" in levels
        assert levels[-1] == "<any> <any> buyer na"

    def test_na_context_not_duplicated(self):
        levels = context_levels("greet <you> buyer na")
        assert len(levels) == len(set(levels))
