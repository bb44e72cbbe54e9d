"""Per-processor state machine of the reliability-estimation protocol.

Each round has three stages -- query, response, gossip -- and each stage has
send, receive, and compute steps.  A processor queries one random peer with a
test task per round, records the outcome (correct / incorrect / no answer),
and gossips its accumulated knowledge: one share message per round while
gathering, then exponentially growing profess multicasts once it holds, for
every peer, either enough correct results or evidence of a crash
("enlightened").  Hearing a profess makes the receiver enlightened too;
hearing one whose level has reached the halt threshold makes it compute the
final estimates and stop.  Levels double the profess fan-out each round and
double as priorities: a processor that hears a higher-priority profess resets
its own level, which keeps the total profess volume bounded.

The step functions below are transitions ``(state, inputs) -> outputs``
mutating only the given state; the engine owns each state and may run
different processors' transitions in parallel within one step as long as all
sends of a step are collected before any receive of the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .knowledge import RecordPool, empty_knowledge, merge_knowledge


def ceil_log2(n: int) -> int:
    """Exact integer ceiling of log2(n) for n >= 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return (n - 1).bit_length()


def request_cap(n: int) -> int:
    """Most task requests a worker serves per round.

    The nominal cap is ceil(log2(n)); the floor of 1 keeps the degenerate
    single-processor population able to serve its own query.
    """
    return max(1, ceil_log2(n))


def profess_fanout(level: int, n: int) -> int:
    """Number of destination draws for a profess at the given level.

    ``ceil(2**(level-1) * log2(n))``, at least 1.  Level 0 gives the
    half-log fan-out that seeds the multicast growth.
    """
    return max(1, math.ceil(2.0 ** (level - 1) * math.log2(n))) if n > 1 else 1


# --- messages ------------------------------------------------------------------


@dataclass(frozen=True)
class TaskRequest:
    src: int
    token: int


@dataclass(frozen=True)
class TaskResponse:
    correct: bool
    src: int


@dataclass(frozen=True, eq=False)
class Share:
    knowledge: np.ndarray
    level: int
    src: int


@dataclass(frozen=True, eq=False)
class Profess:
    """Only ever created by enlightened processors."""

    knowledge: np.ndarray
    level: int
    src: int


Message = Union[TaskRequest, TaskResponse, Share, Profess]

Priority = tuple[int, int]


def priority_less(a: Priority, b: Priority) -> bool:
    """Strict lexicographic order on (level, id) pairs."""
    return a < b


# --- processor state -----------------------------------------------------------


@dataclass
class ProcessorState:
    """Protocol state owned by one processor.

    ``known`` is the compressed knowledge vector (see :mod:`.knowledge`);
    ``estimates`` is populated exactly once, at halt.  ``level`` is 0
    whenever the processor is not enlightened.
    """

    id: int
    n: int
    round: int = 0
    level: int = 0
    enlightened: bool = False
    halted: bool = False
    known: np.ndarray = None
    estimates: Optional[np.ndarray] = None
    pending_query: Optional[tuple[int, int]] = None
    response_plan: list[tuple[int, bool]] = field(default_factory=list)

    def __post_init__(self):
        if self.known is None:
            self.known = empty_knowledge(self.n)

    def priority(self) -> Priority:
        return (self.level, self.id)


# --- query stage ---------------------------------------------------------------


def query_send(state: ProcessorState, rng: np.random.Generator) -> tuple[int, TaskRequest]:
    """Pick a uniform random peer (self allowed) and request a test task."""
    q = int(rng.integers(state.n))
    token = state.round
    state.pending_query = (q, token)
    return q, TaskRequest(src=state.id, token=token)


def query_compute(
    state: ProcessorState,
    requests: list[TaskRequest],
    rng: np.random.Generator,
    reliability_draw,
) -> list[tuple[int, bool]]:
    """Serve received task requests, at most ``request_cap(n)`` of them.

    When more requests arrive than the cap, a uniform subset of exactly the
    cap is served.  Each served request costs one fresh correctness draw via
    ``reliability_draw(worker_id)``.  Requests are served in requester-id
    order so the draw sequence is reproducible.
    """
    requesters = sorted(m.src for m in requests)
    cap = request_cap(state.n)
    if len(requesters) > cap:
        chosen = rng.choice(np.asarray(requesters, dtype=np.int64), size=cap,
                            replace=False)
        requesters = [int(x) for x in np.sort(chosen)]
    plan = [(requester, bool(reliability_draw(state.id))) for requester in requesters]
    state.response_plan = plan
    return plan


# --- response stage ------------------------------------------------------------


def response_receive(
    state: ProcessorState,
    response: Optional[TaskResponse],
    pool: RecordPool,
) -> tuple[int, int]:
    """Record this round's query outcome about the queried peer.

    Exactly one record is created: res 1 for a correct answer, 0 for an
    incorrect one, -1 when no response arrived (the peer is presumed
    crashed).  Returns ``(target, res)`` for the caller's bookkeeping.
    """
    q, _token = state.pending_query
    if response is None:
        res = -1
    elif response.correct:
        res = 1
    else:
        res = 0
    pool.add_record(creator=state.id, rnd=state.round, target=q, res=res)
    state.known[state.id] = state.round
    state.pending_query = None
    return q, res


def response_compute(state: ProcessorState, pool: RecordPool) -> bool:
    """Become enlightened once every peer is settled in local knowledge.

    Settled means: enough correct results (the pool's threshold) or any
    crash record.  Returns True when the flag flips this step.
    """
    if state.enlightened:
        return False
    if pool.satisfies(state.known):
        state.enlightened = True
        return True
    return False


# --- gossip stage --------------------------------------------------------------


def gossip_send(
    state: ProcessorState, rng: np.random.Generator
) -> list[tuple[int, Message]]:
    """Emit this round's gossip.

    Enlightened: profess the full knowledge to ``profess_fanout`` uniform
    draws (with replacement, deduplicated into a set of destinations), then
    raise the level.  Otherwise: share the full knowledge with one uniform
    peer.  Self-targeting is allowed everywhere and is what lets the last
    unhalted processor stop itself.
    """
    snapshot = state.known.copy()
    snapshot.setflags(write=False)
    if state.enlightened:
        k = profess_fanout(state.level, state.n)
        dests = np.unique(rng.integers(0, state.n, size=k))
        message = Profess(knowledge=snapshot, level=state.level, src=state.id)
        out = [(int(d), message) for d in dests]
        state.level += 1
        return out
    q = int(rng.integers(state.n))
    return [(q, Share(knowledge=snapshot, level=state.level, src=state.id))]


def gossip_receive(
    state: ProcessorState,
    inbox: list[Message],
    literal_level_reset: bool = False,
) -> tuple[bool, bool]:
    """Process received gossip flags: enlightenment and level reset.

    Any profess enlightens the receiver (its first own profess goes out next
    round, the send step of this one having passed).  The level resets to 0
    on a higher-priority profess; with ``literal_level_reset`` the comparison
    ranges over shares too, which is observationally identical because a
    share always carries level 0.  Returns (enlightened_now, level_reset).
    """
    enlightened_now = False
    if not state.enlightened and any(isinstance(m, Profess) for m in inbox):
        state.enlightened = True
        enlightened_now = True
    candidates = inbox if literal_level_reset else [
        m for m in inbox if isinstance(m, Profess)
    ]
    level_reset = False
    mine = state.priority()
    if any(priority_less(mine, (m.level, m.src)) for m in candidates):
        if state.level != 0:
            level_reset = True
        state.level = 0
    return enlightened_now, level_reset


def gossip_compute(
    state: ProcessorState,
    inbox: list[Message],
    pool: RecordPool,
) -> bool:
    """Merge received knowledge; halt if enough gossip circulated.

    Knowledge union is monotone.  A received profess whose level has reached
    ceil(log2(n)) triggers the final estimation over the merged knowledge
    and halts the processor; otherwise the round counter advances.  Returns
    True on halt.
    """
    vectors = [m.knowledge for m in inbox]
    state.known = merge_knowledge(state.known, vectors)
    threshold = ceil_log2(state.n)
    if any(isinstance(m, Profess) and m.level >= threshold for m in inbox):
        state.estimates = pool.estimate_all(state.known)
        state.halted = True
        return True
    state.round += 1
    return False
