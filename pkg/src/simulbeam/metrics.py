"""Quality, latency, and compute measurement over session transcripts.

Latency is non-computation-aware: a token's delay is how much source time
had been consumed when it was emitted, so results are deterministic and
hardware-neutral. Compute is counted in decoder forward passes (one per
next-token query).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import exp, fsum, log
from typing import Sequence

from .core import SessionTranscript


@dataclass(frozen=True)
class LatencyInput:
    """Per-token emission delays for one utterance.

    ``delays_ms[i]`` is the source time consumed when output token ``i`` was
    emitted; every token of a commit inherits its event's timestamp.
    """

    delays_ms: tuple[float, ...]
    source_duration_ms: float
    ref_len: int

    def __post_init__(self) -> None:
        if self.source_duration_ms <= 0:
            raise ValueError("source_duration_ms must be positive")
        if self.ref_len < 1:
            raise ValueError("ref_len must be positive")
        last = 0.0
        for d in self.delays_ms:
            if d < last:
                raise ValueError("delays must be non-decreasing")
            if d > self.source_duration_ms:
                raise ValueError("a delay cannot exceed the source duration")
            last = d


def token_delays(transcript: SessionTranscript) -> tuple[float, ...]:
    """Flatten a commit stream into one delay per output token."""
    return tuple(
        event.source_consumed_ms for event in transcript.commits for _ in event.tokens
    )


def _lagging(inp: LatencyInput, rate_denominator: int) -> float:
    delays = inp.delays_ms
    if not delays:
        raise ValueError("cannot compute lagging without delays")
    total = inp.source_duration_ms
    step = total / rate_denominator
    tau = len(delays)
    for i, d in enumerate(delays):
        if d >= total:
            tau = i + 1
            break
    return fsum(delays[i] - i * step for i in range(tau)) / tau


def average_lagging(inp: LatencyInput) -> float:
    """Mean excess delay (ms) versus an ideal uniform emission rate.

    AL = (1/tau) * sum_{i=1..tau} [d_i - (i-1) * T / ref_len], where tau is
    the index of the first delay that reaches the source duration T (all of
    them, if none does). Offline output degenerates to T.
    """
    return _lagging(inp, inp.ref_len)


def laal(inp: LatencyInput) -> float:
    """Length-aware average lagging (ms).

    Same as :func:`average_lagging` but the ideal rate divides by
    ``max(|output|, ref_len)``, so over-generating cannot game the metric.
    Always >= the plain average lagging.
    """
    return _lagging(inp, max(len(inp.delays_ms), inp.ref_len))


def _ngram_counts(seq: Sequence[int], order: int) -> Counter:
    return Counter(tuple(seq[i : i + order]) for i in range(len(seq) - order + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence[int]],
    references: Sequence[Sequence[int]],
    max_order: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus BLEU over token ids, in [0, 100].

    Geometric mean of clipped n-gram precisions (n = 1..``max_order``) times
    the brevity penalty ``exp(min(0, 1 - r/c))``. Unsmoothed by default so
    tiny corpora stay hand-checkable: any zero precision yields 0.0. With
    ``smooth=True``, a zero match count for n >= 2 is floored at a precision
    of ``1 / (2 * total_ngrams)`` when the hypotheses contain any n-gram of
    that order.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must pair up one to one")
    if not hypotheses:
        raise ValueError("cannot score an empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    if hyp_len == 0:
        return 0.0
    log_precisions = []
    for n in range(1, max_order + 1):
        total = totals[n - 1]
        match = matches[n - 1]
        if total == 0:
            return 0.0
        if match == 0:
            if smooth and n >= 2:
                match_precision = 1.0 / (2.0 * total)
            else:
                return 0.0
        else:
            match_precision = match / total
        log_precisions.append(log(match_precision))
    brevity = exp(min(0.0, 1.0 - ref_len / hyp_len))
    return 100.0 * brevity * exp(fsum(log_precisions) / max_order)


def count_forward_passes(transcript: SessionTranscript) -> int:
    """Decoder forward passes consumed by a session (one per model query)."""
    return transcript.forward_passes


@dataclass(frozen=True)
class UtteranceReport:
    """Per-utterance metric row."""

    id: str
    bleu: float
    al_ms: float
    laal_ms: float
    forward_passes: int
    output_len: int
    ref_len: int


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level aggregates plus the per-utterance rows behind them.

    BLEU is corpus-level; AL/LAAL are averaged over utterances; forward
    passes are summed.
    """

    bleu: float
    al_ms: float
    laal_ms: float
    forward_passes: int
    utterances: tuple[UtteranceReport, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError("bleu must lie in [0, 100]")
        if self.laal_ms < self.al_ms - 1e-9:
            raise ValueError("laal_ms cannot be smaller than al_ms")
