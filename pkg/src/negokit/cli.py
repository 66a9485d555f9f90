"""Command-line interface: training, self-play, evaluation, chat and serving."""
from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .core import EventKind, Role, money
from .corpus import corpus_stats, load_corpus, save_corpus, export_parsed
from .generator import GeneratorConfig
from .manager import TrainerConfig
from .rewards import RewardKind, compute_metrics, metrics_to_csv
from .simulator import (
    AgentSpec,
    EngineArtifacts,
    EpisodeConfig,
    evaluate_batch,
    train_rl,
    train_sl,
)
from .synth import synth_dialogues


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _trainer_config(cfg: dict, seed: int, **overrides) -> TrainerConfig:
    fields = dict(cfg.get("trainer", {}))
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields.setdefault("seed", seed)
    return TrainerConfig(**fields)


def _generator_config(cfg: dict) -> GeneratorConfig:
    return GeneratorConfig(**cfg.get("generator", {}))


def _episode_config(cfg: dict, seed: int) -> EpisodeConfig:
    fields = dict(cfg.get("episode", {}))
    fields.setdefault("seed", seed)
    return EpisodeConfig(**fields)


def _records(corpus: Optional[str], synth: int, seed: int, fmt: str = "canonical"):
    if corpus:
        result = load_corpus(corpus, format=fmt)
        if result.skipped:
            click.echo(f"skipped {len(result.skipped)} records", err=True)
        return list(result.records)
    return synth_dialogues(seed, synth)


def _common(f):
    f = click.option("--seed", type=int, default=7, show_default=True)(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True), default=None)(f)
    return f


@click.group()
def main():
    """Negotiation dialogue engine."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["canonical", "cocoa-import"]), default="cocoa-import")
@click.option("--output", "output_path", required=True, type=click.Path())
@_common
def ingest(input_path, fmt, output_path, seed, config_path):
    """Convert a corpus file to the canonical format."""
    result = load_corpus(input_path, format=fmt)
    save_corpus(result.records, output_path)
    click.echo(f"wrote {len(result.records)} records to {output_path}")
    if result.skipped:
        click.echo(f"skipped {len(result.skipped)}:", err=True)
        for idx, reason in result.skipped[:20]:
            click.echo(f"  record {idx}: {reason}", err=True)


@main.command()
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--format", "fmt", type=click.Choice(["canonical", "cocoa-import"]), default="canonical")
@click.option("--synth", type=int, default=200, show_default=True, help="synthetic corpus size when no file is given")
@_common
def stats(corpus, fmt, synth, seed, config_path):
    """Corpus statistics (turns, tokens, vocabulary)."""
    records = _records(corpus, synth, seed, fmt)
    s = corpus_stats(records)
    click.echo(json.dumps({
        "num_dialogues": s.num_dialogues,
        "avg_turns": round(s.avg_turns, 3),
        "avg_tokens_per_turn": round(s.avg_tokens_per_turn, 3),
        "vocab_size": s.vocab_size,
        "vocab_size_excluding_numbers": s.vocab_size_excluding_numbers,
    }, indent=2, sort_keys=True))


@main.command("train-sl")
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--format", "fmt", type=click.Choice(["canonical", "cocoa-import"]), default="canonical")
@click.option("--synth", type=int, default=200, show_default=True)
@click.option("--smoothing", type=float, default=0.01, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--export-parsed", "parsed_path", type=click.Path(), default=None)
@_common
def train_sl_cmd(corpus, fmt, synth, smoothing, out_dir, parsed_path, seed, config_path):
    """Fit lexicon, act policy and retrieval index from a corpus."""
    cfg = _load_config(config_path)
    records = _records(corpus, synth, seed, fmt)
    artifacts = train_sl(records, smoothing=smoothing, gen_config=_generator_config(cfg))
    artifacts.save(out_dir)
    if parsed_path:
        export_parsed(records, artifacts.lexicon, parsed_path)
    click.echo(f"trained on {len(records)} dialogues; artifacts in {out_dir}")


@main.command("train-rl")
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True))
@click.option("--reward", type=click.Choice([k.value for k in RewardKind]), required=True)
@click.option("--episodes", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--learner-role", type=click.Choice(["buyer", "seller"]), default="buyer")
@click.option("--corpus", type=click.Path(exists=True), default=None, help="scenario source")
@click.option("--synth", type=int, default=200, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
@_common
def train_rl_cmd(artifacts_dir, reward, episodes, learning_rate, learner_role, corpus, synth,
                 out_dir, report_path, seed, config_path):
    """Fine-tune the act policy with REINFORCE against a frozen partner."""
    cfg = _load_config(config_path)
    artifacts = EngineArtifacts.load(artifacts_dir)
    records = _records(corpus, synth, seed)
    scenarios = [r.scenario for r in records]
    learner = Role(learner_role)
    partner = AgentSpec("sl_act", learner.partner, artifacts)
    trainer = _trainer_config(cfg, seed, episodes=episodes, learning_rate=learning_rate)
    params, report = train_rl(
        artifacts.params, partner, RewardKind(reward), trainer, scenarios, artifacts,
        learner_role=learner, episode_config=_episode_config(cfg, seed),
    )
    out = Path(out_dir)
    tuned = EngineArtifacts(artifacts.lexicon, params, artifacts.index, artifacts.intent_lm, artifacts.gen_config)
    tuned.save(out)
    if report_path:
        Path(report_path).write_text(report.to_json(), encoding="utf-8")
        Path(report_path).with_suffix(".csv").write_text(report.curve_csv(), encoding="utf-8")
    click.echo(
        f"trained {report.episodes} episodes; best validation reward "
        f"{report.best_validation_reward:.4f} at episode {report.best_episode}; saved to {out_dir}"
    )


def _agent(kind: str, role: Role, artifacts: EngineArtifacts) -> AgentSpec:
    return AgentSpec(kind, role, artifacts)


@main.command()
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--agent-a", type=click.Choice(["sl_act", "rl_act", "hybrid"]), default="sl_act")
@click.option("--agent-b", type=click.Choice(["sl_act", "rl_act", "hybrid"]), default="sl_act")
@click.option("--transcripts", "transcripts_path", type=click.Path(), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None, help="scenario source")
@click.option("--synth", type=int, default=50, show_default=True)
@_common
def selfplay(artifacts_dir, n, agent_a, agent_b, transcripts_path, corpus, synth, seed, config_path):
    """Run bot-bot episodes and print per-episode outcomes."""
    cfg = _load_config(config_path)
    artifacts = EngineArtifacts.load(artifacts_dir)
    records = _records(corpus, synth, seed)
    scenarios = [r.scenario for r in records]
    roles = scenarios[0].roles
    results = evaluate_batch(
        _agent(agent_a, roles[0], artifacts),
        _agent(agent_b, roles[1], artifacts),
        n, seed, scenarios, _episode_config(cfg, seed),
    )
    for i, result in enumerate(results):
        o = result.outcome
        price = f" at {o.final_price}" if o.final_price is not None else ""
        click.echo(f"episode {i}: {'agreed' + price if o.agreement else 'no agreement'} in {o.num_turns} turns")
    if transcripts_path:
        from .corpus import DialogueRecord, OutcomeRecord

        out_records = []
        for result in results:
            o = result.outcome
            out_records.append(DialogueRecord(
                result.state.scenario, tuple(result.state.events),
                OutcomeRecord(o.agreement, o.final_price, o.final_split),
            ))
        save_corpus(out_records, transcripts_path)
        click.echo(f"wrote transcripts to {transcripts_path}")


@main.command("eval")
@click.option("--artifacts", "artifacts_dir", required=True, type=click.Path(exists=True))
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--agent-a", type=click.Choice(["sl_act", "rl_act", "hybrid"]), default="sl_act")
@click.option("--agent-b", type=click.Choice(["sl_act", "rl_act", "hybrid"]), default="sl_act")
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--synth", type=int, default=100, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@_common
def eval_cmd(artifacts_dir, n, agent_a, agent_b, corpus, synth, csv_path, seed, config_path):
    """Aggregate metrics over a seeded batch of self-play episodes."""
    cfg = _load_config(config_path)
    artifacts = EngineArtifacts.load(artifacts_dir)
    records = _records(corpus, synth, seed)
    scenarios = [r.scenario for r in records]
    roles = scenarios[0].roles
    results = evaluate_batch(
        _agent(agent_a, roles[0], artifacts),
        _agent(agent_b, roles[1], artifacts),
        n, seed, scenarios, _episode_config(cfg, seed),
    )
    metrics = compute_metrics([(r.state, r.outcome) for r in results])
    click.echo(metrics.to_json())
    if csv_path:
        Path(csv_path).write_text(metrics_to_csv({f"{agent_a}-vs-{agent_b}": metrics}), encoding="utf-8")


@main.command()
@click.option("--artifacts", "artifacts_dir", type=click.Path(exists=True), default=None)
@click.option("--bot", type=click.Choice(["hybrid", "sl_act", "rl_act"]), default="hybrid")
@click.option("--role", type=click.Choice(["buyer", "seller"]), default="buyer")
@click.option("--url", default=None, help="chat against a running server instead of in-process")
@_common
def chat(artifacts_dir, bot, role, url, seed, config_path):
    """Terminal chat against a bot. Commands: /offer P, /accept, /reject, /quit."""
    if url:
        client = _HttpChatClient(url)
    else:
        cfg = _load_config(config_path)
        if artifacts_dir:
            artifacts = EngineArtifacts.load(artifacts_dir)
        else:
            click.echo("no artifacts given; training on the synthetic corpus...", err=True)
            from .service import default_artifacts

            artifacts = default_artifacts(seed)
        from .service import SessionService

        client = _LocalChatClient(SessionService(artifacts, _episode_config(cfg, seed), seed=seed))
    view = client.create(bot, role, seed)
    _print_scenario(view)
    _print_new_events(view["state"], role)
    _chat_loop(client, role)


def _print_scenario(view: dict) -> None:
    sc = view["scenario_view"]
    click.echo(f"--- {sc['title']} ({sc['category']}) listed at ${sc['listing_price']}")
    if sc.get("buyer_target") is not None:
        click.echo(f"--- your target price: ${sc['buyer_target']}")
    if sc.get("description"):
        click.echo(f"--- {sc['description']}")


def _print_new_events(state: dict, role: str, start: int = 0) -> int:
    for event in state["events"][start:]:
        who = "you" if event["role"] == role else "bot"
        if event["kind"] == "message":
            click.echo(f"[{who}] {event['text']}")
        elif event["kind"] == "offer":
            click.echo(f"[{who}] OFFER ${event['price']}")
        else:
            click.echo(f"[{who}] {event['kind'].upper()}")
    return len(state["events"])


def _chat_loop(client, role: str) -> None:
    seen = len(client.state()["events"])
    while True:
        state = client.state()
        if state["status"] != "active":
            outcome = state.get("outcome") or {}
            if outcome.get("agreement"):
                click.echo(f"*** agreed at ${outcome['final_price']}; utilities {outcome['utilities']}")
            else:
                click.echo("*** no agreement")
            try:
                score = click.prompt("rate your partner 1-5 (0 to skip)", type=int, default=0)
            except (click.Abort, EOFError):
                return
            if 1 <= score <= 5:
                client.survey(score)
                click.echo("thanks!")
            return
        try:
            line = click.prompt("you", prompt_suffix="> ")
        except (click.Abort, EOFError):
            return
        line = line.strip()
        if not line:
            continue
        if line.startswith("/offer"):
            parts = line.split()
            if len(parts) != 2:
                click.echo("usage: /offer PRICE")
                continue
            reply = client.post("offer", price=float(parts[1]))
        elif line == "/accept":
            reply = client.post("accept")
        elif line == "/reject":
            reply = client.post("reject")
        elif line == "/quit":
            reply = client.post("quit")
        else:
            reply = client.post("message", text=line)
        if "error" in reply:
            click.echo(f"!! {reply['error']}")
            continue
        seen = _print_new_events(reply["state"], role, start=seen)


class _LocalChatClient:
    """Thin in-process client mirroring the HTTP payload shapes."""

    def __init__(self, service):
        from .api import scenario_view, state_view

        self._service = service
        self._scenario_view = scenario_view
        self._state_view = state_view
        self._session = None

    def create(self, bot: str, role: str, seed: int) -> dict:
        self._session = self._service.create_session(bot_kind=bot, human_role=role, seed=seed)
        return {
            "scenario_view": self._scenario_view(
                self._session.state.scenario, self._session.human_role
            ).model_dump(),
            "state": self.state(),
        }

    def state(self) -> dict:
        return self._state_view(self._session).model_dump()

    def post(self, kind: str, text: str = None, price: float = None) -> dict:
        from .service import ServiceError
        from .core import DialogueError

        try:
            self._service.post_event(self._session.id, kind=kind, text=text, price=price)
        except (ServiceError, DialogueError, ValueError) as exc:
            return {"error": str(exc), "state": self.state()}
        return {"state": self.state()}

    def survey(self, score: int) -> None:
        self._service.submit_survey(self._session.id, score)


class _HttpChatClient:
    def __init__(self, base_url: str):
        import httpx

        self._client = httpx.Client(base_url=base_url, timeout=30.0)
        self._sid = None

    def create(self, bot: str, role: str, seed: int) -> dict:
        resp = self._client.post(
            "/sessions", json={"bot_kind": bot, "human_role": role, "seed": seed}
        )
        resp.raise_for_status()
        payload = resp.json()
        self._sid = payload["session_id"]
        return payload

    def state(self) -> dict:
        resp = self._client.get(f"/sessions/{self._sid}")
        resp.raise_for_status()
        return resp.json()

    def post(self, kind: str, text: str = None, price: float = None) -> dict:
        resp = self._client.post(
            f"/sessions/{self._sid}/events", json={"kind": kind, "text": text, "price": price}
        )
        if resp.status_code >= 400:
            return {"error": resp.json().get("detail", "error"), "state": self.state()}
        return resp.json()

    def survey(self, score: int) -> None:
        self._client.post(f"/sessions/{self._sid}/survey", json={"score": score})


@main.command()
@click.option("--artifacts", "artifacts_dir", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "store_dir", type=click.Path(), default=None, help="transcript directory")
@click.option("--static", "static_dir", type=click.Path(), default=None, help="web UI bundle to serve at /ui")
@_common
def serve(artifacts_dir, port, host, store_dir, static_dir, seed, config_path):
    """Run the HTTP session service."""
    import uvicorn

    from .api import create_app
    from .service import SessionService, default_artifacts

    cfg = _load_config(config_path)
    if artifacts_dir:
        artifacts = EngineArtifacts.load(artifacts_dir)
    else:
        click.echo("no artifacts given; training on the synthetic corpus...", err=True)
        artifacts = default_artifacts(seed)
    service = SessionService(artifacts, _episode_config(cfg, seed), store_dir=store_dir, seed=seed)
    app = create_app(service, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
