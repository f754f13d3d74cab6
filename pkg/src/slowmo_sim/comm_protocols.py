"""Inner-loop communication protocols.

Every protocol consumes the workers' half-steps x - gamma*d for one round and
produces the post-communication states:

    allreduce       exact average of the half-steps every round
    local           no communication at all
    dpsgd           doubly-stochastic gossip with a symmetric one-peer matrix
    sgp             push-sum gossip (column-stochastic), de-biased z = x / w
    osgp            push-sum with non-blocking delayed messages and a
                    staleness bound; a worker that has gone ``staleness``
                    rounds without draining anything blocks until mail arrives
    double-average  local steps, then block-end averaging of both parameters
                    and momentum buffers

Push-sum kinds track a scalar weight w per worker; the de-biased iterate
z = x / w is what gradients are evaluated at and what gets averaged. Mass
conservation (sum of w plus in-flight payload weight equals m) is the
protocol's core invariant and is surfaced as a metric every round.

All cross-worker reductions accumulate in ascending worker rank so traces are
bit-reproducible; delivered messages drain in (send round, sender rank) order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .base_optimizers import OptimizerBuffers
from .errors import ConfigError, ProtocolError
from .numerics import STREAM_DELAY, rng_stream
from .topology import MixingMatrix, TopologySchedule, mixing_matrix, out_neighbor

PROTOCOL_NAMES = ("allreduce", "local", "dpsgd", "sgp", "osgp", "double-average")


@dataclass
class WorkerState:
    """One worker: parameters x, push-sum weight w, optimizer buffers."""

    x: np.ndarray
    buffers: OptimizerBuffers
    w: float = 1.0

    @property
    def z(self) -> np.ndarray:
        """De-biased iterate x / w (equals x whenever w == 1). Read-only."""
        if self.w <= 0.0:
            raise ProtocolError(f"push-sum weight underflow (w={self.w})")
        return self.x / self.w


@dataclass
class InFlightMessage:
    """A pre-scaled push-sum payload travelling between two workers."""

    sender: int
    receiver: int
    send_round: int
    deliver_round: int
    payload_x: np.ndarray
    payload_w: float


class MessageQueues:
    """Per-edge FIFO queues of in-flight messages."""

    def __init__(self):
        self._edges: dict[tuple[int, int], deque] = {}

    def send(self, msg: InFlightMessage) -> None:
        self._edges.setdefault((msg.sender, msg.receiver), deque()).append(msg)

    def _collect(self, ready) -> dict[int, list[InFlightMessage]]:
        picked = []
        for edge in sorted(self._edges):
            q = self._edges[edge]
            while q and ready(q[0]):
                picked.append(q.popleft())
        picked.sort(key=lambda m: (m.send_round, m.sender))
        inboxes: dict[int, list[InFlightMessage]] = {}
        for msg in picked:
            inboxes.setdefault(msg.receiver, []).append(msg)
        return inboxes

    def deliver(self, round_index: int) -> dict[int, list[InFlightMessage]]:
        """Pop everything scheduled for delivery at or before this round.

        Per receiver, messages arrive in (send_round, sender rank) order;
        per-edge FIFO order is preserved because delivery rounds are
        monotone along each edge.
        """
        return self._collect(lambda m: m.deliver_round <= round_index)

    def drain_all(self) -> dict[int, list[InFlightMessage]]:
        """Barrier: deliver every queued message regardless of schedule."""
        return self._collect(lambda m: True)

    def empty(self) -> bool:
        return all(len(q) == 0 for q in self._edges.values())

    def pending_sums(self, dimension: int) -> tuple[np.ndarray, float]:
        """(sum of payload_x, sum of payload_w) over all queued messages."""
        vec = np.zeros(dimension)
        mass = 0.0
        for edge in sorted(self._edges):
            for msg in self._edges[edge]:
                vec += msg.payload_x
                mass += msg.payload_w
        return vec, mass


@dataclass(frozen=True)
class DelayModel:
    """Message transit time in rounds.

    constant: always ``rounds``. geometric: (trials - 1) with success
    probability ``p``, capped at ``cap`` so delays stay bounded.
    """

    kind: str = "constant"
    rounds: int = 0
    p: float = 0.5
    cap: int = 8

    def __post_init__(self):
        if self.kind not in ("constant", "geometric"):
            raise ConfigError(f"unknown delay kind {self.kind!r}")
        if self.kind == "constant" and self.rounds < 0:
            raise ConfigError("constant delay must be >= 0")
        if self.kind == "geometric" and not (0.0 < self.p <= 1.0):
            raise ConfigError("geometric delay needs p in (0, 1]")
        if self.cap < 0:
            raise ConfigError("delay cap must be >= 0")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "constant":
            return self.rounds
        return int(min(rng.geometric(self.p) - 1, self.cap))


def exact_average(states: list[WorkerState]) -> np.ndarray:
    """(1/m) sum_i z_i, accumulated in ascending worker rank.

    Uses the de-biased iterate, which coincides with x whenever w == 1, so
    the same reduction serves plain and push-sum protocols.
    """
    total = states[0].z.copy()
    for s in states[1:]:
        total += s.z
    total /= len(states)
    return total


def _validate_columns(mixing: MixingMatrix) -> None:
    cols = mixing.matrix.sum(axis=0)
    if np.max(np.abs(cols - 1.0)) > 1e-12:
        raise ProtocolError("mixing matrix columns must sum to 1 within 1e-12")


def gossip_round(
    states: list[WorkerState], mixing: MixingMatrix, half_x: list[np.ndarray]
) -> list[WorkerState]:
    """One doubly-stochastic gossip round: x_i <- sum_j p[i,j] half_x[j]."""
    _validate_columns(mixing)
    rows = mixing.matrix.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > 1e-12:
        raise ProtocolError("doubly-stochastic gossip needs row sums 1 within 1e-12")
    p = mixing.matrix
    m = len(states)
    new_x = []
    for i in range(m):
        acc = None
        for j in range(m):
            if p[i, j] == 0.0:
                continue
            term = p[i, j] * half_x[j]
            acc = term if acc is None else acc + term
        new_x.append(acc if acc is not None else states[i].x.copy())
    for i in range(m):
        states[i].x = new_x[i]
    return states


def pushsum_round(
    states: list[WorkerState], mixing: MixingMatrix, half_x: list[np.ndarray]
) -> list[WorkerState]:
    """One synchronous push-sum round: mix x and w by the same column-stochastic matrix."""
    _validate_columns(mixing)
    p = mixing.matrix
    m = len(states)
    new_x, new_w = [], []
    for i in range(m):
        acc = None
        acc_w = 0.0
        for j in range(m):
            if p[i, j] == 0.0:
                continue
            term = p[i, j] * half_x[j]
            acc = term if acc is None else acc + term
            acc_w += p[i, j] * states[j].w
        new_x.append(acc if acc is not None else np.zeros_like(states[i].x))
        new_w.append(acc_w)
    for i in range(m):
        states[i].x = new_x[i]
        states[i].w = new_w[i]
    return states


def double_average(states: list[WorkerState]) -> list[WorkerState]:
    """Exact average of both parameters and momentum buffers across workers."""
    m = len(states)
    x_mean = states[0].x.copy()
    for s in states[1:]:
        x_mean += s.x
    x_mean /= m
    h_mean = states[0].buffers.h.copy()
    for s in states[1:]:
        h_mean += s.buffers.h
    h_mean /= m
    for s in states:
        s.x = x_mean.copy()
        s.buffers.h[:] = h_mean
    return states


def osgp_step(
    state: WorkerState,
    half_x: np.ndarray | None,
    p_self: float,
    inbox: list[InFlightMessage],
    count_since_last: int,
    staleness_limit: int,
) -> tuple[WorkerState, int, bool]:
    """One worker's OSGP bookkeeping after its (possible) send.

    ``half_x is None`` marks a worker whose clock is stalled this round: it
    took no gradient step and sent nothing, it only watches its inbox. An
    active worker keeps p_self of its own half-step (the rest is in flight),
    then drains whatever arrived. Returns (state, count_since_last, stalled):
    a drain resets the counter; an active worker that has waited
    ``staleness_limit`` rounds without receiving blocks.
    """
    if half_x is not None:
        state.x = p_self * half_x
        state.w = p_self * state.w
    received = False
    for msg in inbox:
        state.x += msg.payload_x
        state.w += msg.payload_w
        received = True
    if received:
        return state, 0, False
    if half_x is None:
        return state, count_since_last, True
    if count_since_last >= staleness_limit:
        return state, count_since_last, True
    return state, count_since_last + 1, False


class _ProtocolBase:
    """Kernel-facing adapter: one object per run, consulted every round."""

    name = "abstract"
    debias = False

    def __init__(self, m: int):
        self.m = m

    def active_workers(self) -> list[int]:
        return list(range(self.m))

    def apply_round(self, states, half_x: dict, round_index: int) -> None:
        raise NotImplementedError

    def end_block(self, states) -> None:
        """Called after the last inner round of each outer iteration."""

    def inflight_sums(self, dimension: int) -> tuple[np.ndarray, float]:
        return np.zeros(dimension), 0.0


class LocalProtocol(_ProtocolBase):
    name = "local"

    def apply_round(self, states, half_x, round_index):
        for i in range(self.m):
            states[i].x = half_x[i]


class AllReduceProtocol(_ProtocolBase):
    name = "allreduce"

    def apply_round(self, states, half_x, round_index):
        mean = half_x[0].copy()
        for i in range(1, self.m):
            mean += half_x[i]
        mean /= self.m
        for i in range(self.m):
            states[i].x = mean.copy()


class DoubleAverageProtocol(_ProtocolBase):
    name = "double-average"

    def apply_round(self, states, half_x, round_index):
        for i in range(self.m):
            states[i].x = half_x[i]

    def end_block(self, states):
        double_average(states)


class _MixingCache:
    def __init__(self, schedule: TopologySchedule, stochasticity: str):
        self.schedule = schedule
        self.stochasticity = stochasticity
        self._cache: dict[int, MixingMatrix] = {}

    def at(self, round_index: int) -> MixingMatrix:
        key = round_index % self.schedule.period
        if key not in self._cache:
            self._cache[key] = mixing_matrix(self.schedule, key, self.stochasticity)
        return self._cache[key]


class GossipProtocol(_ProtocolBase):
    name = "dpsgd"

    def __init__(self, m, schedule: TopologySchedule):
        super().__init__(m)
        self.mixing = _MixingCache(schedule, "doubly")

    def apply_round(self, states, half_x, round_index):
        half = [half_x[i] for i in range(self.m)]
        gossip_round(states, self.mixing.at(round_index), half)


class PushSumProtocol(_ProtocolBase):
    name = "sgp"
    debias = True

    def __init__(self, m, schedule: TopologySchedule):
        super().__init__(m)
        self.mixing = _MixingCache(schedule, "column")

    def apply_round(self, states, half_x, round_index):
        half = [half_x[i] for i in range(self.m)]
        pushsum_round(states, self.mixing.at(round_index), half)


class OverlapPushSumProtocol(_ProtocolBase):
    """Push-sum with delayed, non-blocking messages and a staleness bound."""

    name = "osgp"
    debias = True

    def __init__(self, m, schedule: TopologySchedule, staleness: int,
                 delay: DelayModel, seed: int):
        super().__init__(m)
        if staleness < 0:
            raise ConfigError("staleness bound must be >= 0")
        self.schedule = schedule
        self.staleness = staleness
        self.delay = delay
        self.mixing = _MixingCache(schedule, "column")
        self.queues = MessageQueues()
        self.count_since_last = [0] * m
        self.stalled = [False] * m
        self._delay_rng = rng_stream(seed, STREAM_DELAY, 0)
        self._last_sched: dict[tuple[int, int], int] = {}

    def active_workers(self):
        return [i for i in range(self.m) if not self.stalled[i]]

    def apply_round(self, states, half_x, round_index):
        m = self.m
        if m == 1:
            # no peers: degenerate synchronous case, never stalls
            if 0 in half_x:
                states[0].x = half_x[0]
            return
        if not half_x and self.queues.empty():
            raise ProtocolError(
                "every worker is stalled and no messages are in flight"
            )
        p = self.mixing.at(round_index).matrix
        # sends happen first, in ascending rank, so delay draws are ordered
        for i in sorted(half_x):
            nbr = out_neighbor(self.schedule, i, round_index)
            lag = self.delay.sample(self._delay_rng)
            deliver = round_index + lag
            edge = (i, nbr)
            prev = self._last_sched.get(edge, -1)
            if deliver < prev:
                deliver = prev  # clamp so per-edge delivery stays FIFO
            self._last_sched[edge] = deliver
            self.queues.send(
                InFlightMessage(
                    sender=i,
                    receiver=nbr,
                    send_round=round_index,
                    deliver_round=deliver,
                    payload_x=p[nbr, i] * half_x[i],
                    payload_w=p[nbr, i] * states[i].w,
                )
            )
        inboxes = self.queues.deliver(round_index)
        for i in range(m):
            _, count, stalled = osgp_step(
                states[i],
                half_x.get(i),
                p[i, i],
                inboxes.get(i, []),
                self.count_since_last[i],
                self.staleness,
            )
            self.count_since_last[i] = count
            self.stalled[i] = stalled

    def end_block(self, states):
        """Drain barrier: flush every queue before the block's exact average."""
        inboxes = self.queues.drain_all()
        for i in range(self.m):
            for msg in inboxes.get(i, []):
                states[i].x += msg.payload_x
                states[i].w += msg.payload_w
            self.count_since_last[i] = 0
            self.stalled[i] = False

    def inflight_sums(self, dimension):
        return self.queues.pending_sums(dimension)


def make_protocol(
    name: str,
    m: int,
    schedule: TopologySchedule | None = None,
    staleness: int = 4,
    delay: DelayModel | None = None,
    seed: int = 0,
) -> _ProtocolBase:
    if name == "local":
        return LocalProtocol(m)
    if name == "allreduce":
        return AllReduceProtocol(m)
    if name == "double-average":
        return DoubleAverageProtocol(m)
    if schedule is None:
        raise ConfigError(f"protocol {name!r} needs a topology schedule")
    if name == "dpsgd":
        return GossipProtocol(m, schedule)
    if name == "sgp":
        return PushSumProtocol(m, schedule)
    if name == "osgp":
        return OverlapPushSumProtocol(
            m, schedule, staleness, delay or DelayModel(), seed
        )
    raise ConfigError(f"unknown protocol {name!r}")
