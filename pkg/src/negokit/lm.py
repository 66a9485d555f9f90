"""Order-3 language model with Laplace smoothing over string tokens."""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from typing import Iterable, Mapping, Optional, Sequence

S_START = "<s>"
S_END = "</s>"
UNK = "<unk>"


class TrigramLM:
    """Counts-based trigram model; probabilities are Laplace-smoothed.

    p(w | u, v) = (c(u, v, w) + lam) / (c(u, v) + lam * V)
    with V the full vocabulary including the start, end and unk symbols.
    """

    def __init__(self, smoothing: float = 0.1):
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.smoothing = smoothing
        self.vocab: set[str] = {S_START, S_END, UNK}
        self.counts: dict[tuple[str, str], Counter] = defaultdict(Counter)
        self.context_totals: dict[tuple[str, str], int] = defaultdict(int)

    def fit(self, sequences: Iterable[Sequence[str]]) -> "TrigramLM":
        for seq in sequences:
            toks = [S_START, S_START, *seq, S_END]
            self.vocab.update(seq)
            for i in range(2, len(toks)):
                ctx = (toks[i - 2], toks[i - 1])
                self.counts[ctx][toks[i]] += 1
                self.context_totals[ctx] += 1
        return self

    def _map(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def prob(self, token: str, context: tuple[str, str]) -> float:
        ctx = (self._map(context[0]), self._map(context[1]))
        tok = self._map(token)
        lam = self.smoothing
        v = len(self.vocab)
        num = self.counts.get(ctx, {}).get(tok, 0) + lam
        den = self.context_totals.get(ctx, 0) + lam * v
        if den == 0:
            return 0.0
        return num / den

    def distribution(
        self, context: tuple[str, str], restrict: Optional[Sequence[str]] = None
    ) -> dict[str, float]:
        """Normalized next-token distribution over ``restrict`` (or the vocab)."""
        outcomes = list(restrict) if restrict is not None else sorted(self.vocab)
        raw = {tok: self.prob(tok, context) for tok in outcomes}
        total = sum(raw.values())
        if total <= 0:
            return {tok: 1.0 / len(outcomes) for tok in outcomes}
        return {tok: p / total for tok, p in raw.items()}

    def logprob(self, sequence: Sequence[str], normalize: bool = True) -> float:
        """Sequence log-probability; length-normalized by default."""
        toks = [S_START, S_START, *(self._map(t) for t in sequence), S_END]
        total = 0.0
        steps = 0
        for i in range(2, len(toks)):
            p = self.prob(toks[i], (toks[i - 2], toks[i - 1]))
            total += math.log(p) if p > 0 else -math.inf
            steps += 1
        if normalize and steps:
            return total / steps
        return total

    def to_payload(self) -> dict:
        return {
            "smoothing": self.smoothing,
            "vocab": sorted(self.vocab),
            "counts": {
                " ".join(ctx): dict(sorted(counter.items()))
                for ctx, counter in sorted(self.counts.items())
            },
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "TrigramLM":
        lm = cls(smoothing=payload["smoothing"])
        lm.vocab = set(payload["vocab"])
        for ctx_key, counter in payload["counts"].items():
            u, v = ctx_key.split(" ")
            lm.counts[(u, v)] = Counter(counter)
            lm.context_totals[(u, v)] = sum(counter.values())
        return lm

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "TrigramLM":
        return cls.from_payload(json.loads(blob))
