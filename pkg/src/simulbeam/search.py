"""Streaming beam-search decoders and commit policies.

Three decoding strategies drive a :class:`~simulbeam.model.ModelSession`:

* :func:`standard_beam_search` completes a translation of everything read so
  far, re-scoring the forced prefix on every call. This is the full re-decode
  baseline for onlinized full-context models: simple, but it pays for the
  prefix again on each chunk and happily over-generates past reliable input.
* :func:`bwbs_block` is the conservative blockwise search: the moment any
  beam shows a repetition or an end token mid-source, the whole block is
  halted and the last two tokens are trimmed from every beam.
* :func:`ibwbs_block` relaxes that: only the offending beam is trimmed and
  moved to a stopped pool while the rest keep expanding. When no active beams
  remain, the best stopped hypothesis under length-normalized score becomes
  the sole survivor, which typically yields a longer reliable prefix from the
  same amount of source.

:func:`decode_session` runs one of these per block over a full utterance,
prunes to a single hypothesis in incremental mode, applies a hold-n or
local-agreement policy to decide how much of it to commit, and records the
commit stream with source timestamps.

On the final block the source is complete, so the stop heuristic no longer
signals missing context: EOS becomes a legitimate terminator, repetitions are
ignored, and decoding runs to completion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .core import (
    CommitEvent,
    Hypothesis,
    SearchConfig,
    SessionTranscript,
    StopReason,
    detect_stop,
    longest_common_prefix,
    max_output_tokens,
    normalized_score,
)
from .model import Block, ModelFactory, ModelSession


class Algorithm(enum.Enum):
    """Per-block decoding strategy."""

    BS = "bs"
    BWBS = "bwbs"
    IBWBS = "ibwbs"


class DecodeMode(enum.Enum):
    """INCREMENTAL emits an irrevocable commit stream; RETRANSLATION emits
    evolving full-hypothesis snapshots and never commits mid-stream."""

    INCREMENTAL = "incremental"
    RETRANSLATION = "retranslation"


class PolicyKind(enum.Enum):
    NONE = "none"
    HOLD = "hold"
    LOCAL_AGREEMENT = "la"


@dataclass(frozen=True)
class PolicyState:
    """Commit-policy state threaded through a session.

    ``history`` holds the most recent best outputs (local agreement only);
    ``committed`` is the prefix already shown, which only ever extends.
    """

    kind: PolicyKind = PolicyKind.NONE
    n: int = 0
    history: tuple[tuple[int, ...], ...] = ()
    committed: tuple[int, ...] = ()

    @staticmethod
    def none() -> PolicyState:
        return PolicyState(PolicyKind.NONE)

    @staticmethod
    def hold(n: int) -> PolicyState:
        """Withhold the last ``n`` tokens of each best output."""
        if n < 0:
            raise ValueError("hold-n requires n >= 0")
        return PolicyState(PolicyKind.HOLD, n=n)

    @staticmethod
    def local_agreement(n: int) -> PolicyState:
        """Commit the longest common prefix of the best outputs from ``n``
        consecutive input contexts."""
        if n < 1:
            raise ValueError("local agreement requires n >= 1")
        return PolicyState(PolicyKind.LOCAL_AGREEMENT, n=n)


def apply_policy(state: PolicyState, best: Hypothesis) -> tuple[PolicyState, tuple[int, ...]]:
    """Decide which new tokens to commit given the block's best hypothesis.

    Returns the updated state and the newly committed tokens (possibly
    empty). Commitment never retracts: the candidate prefix is compared
    against ``state.committed`` and only a proper extension is emitted.
    """
    tokens = best.tokens
    committed = state.committed
    if tokens[: len(committed)] != committed:
        raise ValueError("best hypothesis does not extend the committed prefix")
    history = state.history
    if state.kind is PolicyKind.NONE:
        candidate = tokens
    elif state.kind is PolicyKind.HOLD:
        candidate = tokens[: max(len(tokens) - state.n, 0)]
    else:
        outputs = history + (tokens,)
        if len(outputs) < state.n:
            candidate = committed
        else:
            candidate = outputs[-state.n]
            for other in outputs[-state.n + 1 :] if state.n > 1 else ():
                candidate = longest_common_prefix(candidate, other)
        history = outputs[-(state.n - 1) :] if state.n > 1 else ()
    new: tuple[int, ...] = ()
    if len(candidate) > len(committed) and candidate[: len(committed)] == committed:
        new = tuple(candidate[len(committed) :])
    return replace(state, history=history, committed=committed + new), new


@dataclass(frozen=True)
class BeamState:
    """Beams for one block: active hypotheses, the stopped pool, and the
    committed prefix every hypothesis extends."""

    active: tuple[Hypothesis, ...]
    stopped: tuple[Hypothesis, ...] = ()
    committed: tuple[int, ...] = ()


def _expand(active: Sequence[Hypothesis], session: ModelSession) -> list[Hypothesis]:
    """All single-token extensions of the active beams with finite scores.

    Zero-probability tokens are skipped: they can never belong to a valid
    hypothesis and would break score finiteness.
    """
    pool: list[Hypothesis] = []
    for hyp in active:
        logprobs = session.next_token_logprobs(hyp.tokens)
        for token, logprob in enumerate(logprobs):
            lp = float(logprob)
            if lp > -math.inf:
                pool.append(hyp.extended(token, lp))
    return pool


def _prune(pool: Iterable[Hypothesis], width: int) -> list[Hypothesis]:
    """Top ``width`` distinct candidates by cumulative score.

    Ties break on token order and duplicates merge, so replay is
    deterministic and beams that collapse onto the same prefix do not waste
    beam slots.
    """
    seen: dict[tuple[int, ...], Hypothesis] = {}
    for hyp in pool:
        seen.setdefault(hyp.tokens, hyp)
    ranked = sorted(seen.values(), key=lambda h: (-h.score, h.tokens))
    return ranked[:width]


def _selection_rank(hyp: Hypothesis, length_norm: bool) -> tuple:
    score = normalized_score(hyp) if length_norm else hyp.score
    # Empty candidates rank last (their conventional score of 0 would
    # otherwise beat every real hypothesis) yet stay selectable when alone.
    return (0 if hyp.tokens else 1, -score, -len(hyp.tokens), hyp.tokens)


def select_best(candidates: Sequence[Hypothesis], length_norm: bool = True) -> Hypothesis:
    """Best hypothesis by (length-normalized) score; longer wins ties, then
    token order. Non-empty candidates always outrank empty ones."""
    if not candidates:
        raise ValueError("cannot select from an empty candidate set")
    return min(candidates, key=lambda h: _selection_rank(h, length_norm))


def _trim_stop(hyp: Hypothesis, floor: int) -> Hypothesis:
    """Remove the last two tokens of a triggered beam, never cutting into
    the committed prefix."""
    return hyp.sliced(max(len(hyp.tokens) - 2, floor), stopped=True)


def _run_to_completion(
    seeds: Sequence[Hypothesis],
    session: ModelSession,
    cfg: SearchConfig,
    eos_id: int,
    max_total: int,
) -> tuple[list[Hypothesis], list[Hypothesis]]:
    """Beam search until every slot has accepted EOS or the length cap hits.

    Finished beams vacate their slot (the width shrinks; no refill), which
    keeps all strategies' final-block behavior identical. Returns
    ``(finished, still_active)``.
    """
    active = [h for h in seeds]
    finished: list[Hypothesis] = []
    width = cfg.beam_size
    while active and len(active[0].tokens) < max_total and width > 0:
        still: list[Hypothesis] = []
        for hyp in _prune(_expand(active, session), width):
            if hyp.tokens[-1] == eos_id:
                finished.append(replace(hyp, finished=True))
                width -= 1
            else:
                still.append(hyp)
        active = still
    return finished, active


def standard_beam_search(
    session: ModelSession,
    committed: Sequence[int],
    cfg: SearchConfig,
    eos_id: int,
    max_total: int,
) -> Hypothesis:
    """Classic beam search from a forced prefix to end-of-sequence.

    The forced prefix is re-scored against the current context, one query
    per position, so repeated calls over growing input pay the full
    re-decode cost. The stop heuristic is never applied: EOS is always a
    legitimate end here, and the search runs until every beam finishes or
    the length cap is reached. Returns the best finished hypothesis by
    normalized score, falling back to the best unfinished one at the cap.
    """
    prefix = Hypothesis()
    for position, token in enumerate(committed):
        logprobs = session.next_token_logprobs(tuple(committed[:position]))
        prefix = prefix.extended(int(token), float(logprobs[int(token)]))
    if len(prefix.tokens) >= max_total:
        return prefix
    finished, active = _run_to_completion([prefix], session, cfg, eos_id, max_total)
    if finished:
        return select_best(finished, cfg.length_norm)
    if active:
        return select_best(active, cfg.length_norm)
    return prefix


def bwbs_block(
    state: BeamState,
    session: ModelSession,
    cfg: SearchConfig,
    eos_id: int,
    max_total: int,
    final: bool = False,
) -> BeamState:
    """One block of the conservative blockwise search.

    All beams advance one token per step. The first step at which *any* beam
    shows a repetition or EOS ends the block: the last two tokens are removed
    from every beam (floored at the committed prefix) and the beams wait for
    more source. No pruning to a single hypothesis happens here, so snapshots
    may revise across blocks (re-translation semantics).

    With ``final=True`` the source is complete: the trigger is disabled and
    the block runs to completion; beams are returned best-first.
    """
    if not state.active:
        raise ValueError("bwbs_block requires at least one active hypothesis")
    floor = len(state.committed)
    if final:
        finished, leftover = _run_to_completion(state.active, session, cfg, eos_id, max_total)
        pool = finished or leftover or list(state.active)
        ranked = sorted(pool, key=lambda h: _selection_rank(h, cfg.length_norm))
        return BeamState(active=tuple(ranked), stopped=(), committed=state.committed)
    active = list(state.active)
    while active and len(active[0].tokens) < max_total:
        active = _prune(_expand(active, session), cfg.beam_size)
        if any(detect_stop(h, cfg, eos_id) is not StopReason.NONE for h in active):
            active = [_trim_stop(h, floor) for h in active]
            break
    return BeamState(active=tuple(active), stopped=(), committed=state.committed)


def ibwbs_block(
    state: BeamState,
    session: ModelSession,
    cfg: SearchConfig,
    eos_id: int,
    max_total: int,
    final: bool = False,
) -> BeamState:
    """One block of the incremental blockwise search.

    Beams stop individually: a beam showing a repetition or EOS loses its
    last two tokens, joins the stopped pool, and leaves the search for the
    rest of the block (the active width shrinks; no refill). When no active
    beams remain, or the length cap is reached (remaining beams then join the
    pool unmodified), the best stopped hypothesis under length-normalized
    score becomes the sole active hypothesis for the next block.

    With ``final=True`` EOS finishes beams instead of trimming them and
    repetitions are ignored; the stopped pool collects the finished beams.
    """
    if not state.active:
        raise ValueError("ibwbs_block requires at least one active hypothesis")
    floor = len(state.committed)
    if final:
        finished, leftover = _run_to_completion(state.active, session, cfg, eos_id, max_total)
        pool = finished or leftover or list(state.active)
        best = select_best(pool, cfg.length_norm)
        return BeamState(
            active=(best,), stopped=tuple(finished + leftover), committed=state.committed
        )
    active = list(state.active)
    stopped: list[Hypothesis] = []
    width = cfg.beam_size
    while active and len(active[0].tokens) < max_total and width > 0:
        still: list[Hypothesis] = []
        for hyp in _prune(_expand(active, session), width):
            if detect_stop(hyp, cfg, eos_id) is not StopReason.NONE:
                stopped.append(_trim_stop(hyp, floor))
                width -= 1
            else:
                still.append(hyp)
        active = still
    stopped.extend(active)  # length cap reached: survivors join unmodified
    best = select_best(stopped, cfg.length_norm)
    return BeamState(active=(best,), stopped=tuple(stopped), committed=state.committed)


_BLOCK_OPS: dict[Algorithm, Callable[..., BeamState]] = {
    Algorithm.BWBS: bwbs_block,
    Algorithm.IBWBS: ibwbs_block,
}


def _strip_eos(hyp: Hypothesis, eos_id: int) -> Hypothesis:
    if hyp.tokens and hyp.tokens[-1] == eos_id:
        return hyp.sliced(len(hyp.tokens) - 1, stopped=hyp.stopped)
    return hyp


def decode_session(
    model_factory: ModelFactory,
    blocks: Sequence[Block],
    eos_id: int,
    algo: Algorithm = Algorithm.IBWBS,
    policy: PolicyState | None = None,
    mode: DecodeMode = DecodeMode.INCREMENTAL,
    cfg: SearchConfig = SearchConfig(),
    snapshots: list[tuple[float, tuple[int, ...]]] | None = None,
) -> SessionTranscript:
    """Drive one full utterance through per-block decoding.

    Per block: ingest, decode with the selected strategy, then in
    INCREMENTAL mode prune to a single hypothesis, apply the commit policy,
    and record a commit stamped with the source time consumed so far. The
    policy-committed prefix (with its cached token log-probabilities) seeds
    the next block; tokens the policy held back are re-derived later, so
    they remain revisable. The final block bypasses the policy and commits
    everything, with EOS accepted as a legitimate end.

    In RETRANSLATION mode nothing is committed: each block appends a
    ``(source_ms, tokens)`` snapshot to ``snapshots`` (if given); the
    blockwise strategy carries its full multi-beam state across blocks.

    For ``algo=BS`` every block triggers a full re-decode from the committed
    prefix via :func:`standard_beam_search`.

    The emitted token stream never includes EOS.
    """
    blocks = list(blocks)
    if not blocks or not blocks[-1].is_final or any(b.is_final for b in blocks[:-1]):
        raise ValueError("the block stream must end with exactly one final block")
    policy_state = policy if policy is not None else PolicyState.none()
    if mode is DecodeMode.RETRANSLATION and policy_state.kind is not PolicyKind.NONE:
        raise ValueError("commit policies apply to incremental mode only")
    total_ms = sum(b.duration_ms for b in blocks)
    max_total = max_output_tokens(cfg, total_ms)
    session = model_factory()
    committed: tuple[int, ...] = ()
    carry: tuple[Hypothesis, ...] = (Hypothesis(),)
    commits: list[CommitEvent] = []
    last_best = Hypothesis()
    elapsed = 0.0
    for block in blocks:
        session.ingest_block(block)
        elapsed += block.duration_ms
        if algo is Algorithm.BS:
            best = standard_beam_search(session, committed, cfg, eos_id, max_total)
            beams: tuple[Hypothesis, ...] = (best,)
        else:
            out = _BLOCK_OPS[algo](
                BeamState(active=carry, committed=committed),
                session,
                cfg,
                eos_id,
                max_total,
                final=block.is_final,
            )
            beams = out.active
            best = select_best(beams, cfg.length_norm)
        visible = _strip_eos(best, eos_id)
        if mode is DecodeMode.INCREMENTAL:
            if block.is_final:
                new = visible.tokens[len(committed) :]
            else:
                policy_state, new = apply_policy(policy_state, visible)
            if new:
                commits.append(CommitEvent(tokens=tuple(new), source_consumed_ms=elapsed))
                committed = committed + tuple(new)
            carry = (visible.sliced(len(committed)),)
        else:
            if snapshots is not None:
                snapshots.append((elapsed, visible.tokens))
            last_best = visible
            carry = beams if algo is Algorithm.BWBS else (best,)
    final_output = committed if mode is DecodeMode.INCREMENTAL else last_best.tokens
    return SessionTranscript(
        commits=tuple(commits),
        final_output=final_output,
        source_duration_ms=total_ms,
        forward_passes=session.forward_pass_count(),
    )
