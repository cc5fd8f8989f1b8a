"""Agent-based belief spread with delayed retraction.

Agents sit on a connected, undirected network and move through three belief
states, Neutral -> False -> Retracted.  A single agent is seeded with a false
claim at step 0; after ``retraction_delay`` steps the same agent starts
spreading the retraction.  Every agent only shares a newly acquired message
for ``share_window`` rounds, so late retractions meet a population that has
already heard (and stopped talking about) the claim.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numba
import numpy as np


class BeliefState(enum.IntEnum):
    NEUTRAL = 0
    FALSE = 1
    RETRACTED = 2


# message an agent currently carries
NO_MESSAGE = 0
CLAIM = 1
RETRACTION = 2


class SimulationError(Exception):
    pass


class InvalidTopologyParam(SimulationError, ValueError):
    pass


class DisconnectedAfterRetries(SimulationError):
    pass


@dataclass(frozen=True)
class Topology:
    """Network family.  ``kind`` is ``complete``, ``ring`` (param k) or ``erdos-renyi`` (param p)."""

    kind: str = "complete"
    k: int | None = None
    p: float | None = None

    @classmethod
    def parse(cls, text: str) -> "Topology":
        """Parse ``complete``, ``ring(2)`` / ``ring:2`` or ``erdos-renyi(0.1)`` / ``er:0.1``."""
        s = text.strip().lower().replace(" ", "")
        name, arg = s, None
        if s.endswith(")") and "(" in s:
            name, arg = s[:-1].split("(", 1)
        elif ":" in s:
            name, arg = s.split(":", 1)
        if name == "complete" and arg is None:
            return cls("complete")
        if name == "ring" and arg is not None:
            return cls("ring", k=int(arg))
        if name in ("erdos-renyi", "er", "erdos_renyi", "gnp") and arg is not None:
            return cls("erdos-renyi", p=float(arg))
        raise InvalidTopologyParam(f"unrecognised topology {text!r}")

    def __str__(self) -> str:
        if self.kind == "ring":
            return f"ring({self.k})"
        if self.kind == "erdos-renyi":
            return f"erdos-renyi({self.p})"
        return self.kind


@dataclass(frozen=True)
class Network:
    """Undirected simple graph stored as CSR adjacency."""

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Network":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for a, b in edges:
            if a == b:
                continue
            nbrs[a].add(b)
            nbrs[b].add(a)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(s) for s in nbrs])
        indices = np.fromiter(
            (j for s in nbrs for j in sorted(s)), dtype=np.int64, count=int(indptr[-1])
        )
        return cls(n, indptr, indices)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    @property
    def edge_count(self) -> int:
        return int(self.indptr[-1]) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(i, int(j)) for i in range(self.node_count) for j in self.neighbors(i) if i < j]

    def is_connected(self) -> bool:
        if self.node_count == 0:
            return False
        seen = np.zeros(self.node_count, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in self.neighbors(i):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return bool(seen.all())


def build_network(
    topology: Topology | str,
    n_agents: int,
    rng: np.random.Generator | None = None,
    max_retries: int = 100,
) -> Network:
    if isinstance(topology, str):
        topology = Topology.parse(topology)
    if n_agents < 2:
        raise InvalidTopologyParam(f"need at least 2 agents, got {n_agents}")

    if topology.kind == "complete":
        n = n_agents
        indptr = np.arange(0, n * (n - 1) + 1, n - 1, dtype=np.int64)
        full = np.tile(np.arange(n, dtype=np.int64), n).reshape(n, n)
        indices = full[~np.eye(n, dtype=bool)].reshape(-1)
        return Network(n, indptr, indices)

    if topology.kind == "ring":
        k = topology.k
        if k is None or not 1 <= k < n_agents:
            raise InvalidTopologyParam(f"ring needs 1 <= k < n_agents, got k={k}")
        edges = [(i, (i + d) % n_agents) for i in range(n_agents) for d in range(1, k + 1)]
        return Network.from_edges(n_agents, edges)

    if topology.kind == "erdos-renyi":
        p = topology.p
        if p is None or not 0.0 < p <= 1.0:
            raise InvalidTopologyParam(f"erdos-renyi needs 0 < p <= 1, got p={p}")
        if rng is None:
            rng = np.random.default_rng()
        iu, ju = np.triu_indices(n_agents, k=1)
        for _ in range(max_retries):
            keep = rng.random(iu.size) < p
            net = Network.from_edges(n_agents, zip(iu[keep].tolist(), ju[keep].tolist()))
            if net.is_connected():
                return net
        raise DisconnectedAfterRetries(
            f"G({n_agents}, {p}) not connected after {max_retries} draws"
        )

    raise InvalidTopologyParam(f"unknown topology kind {topology.kind!r}")


@dataclass(frozen=True)
class SimParams:
    n_agents: int = 100
    topology: Topology = field(default_factory=Topology)
    share_window: int = 200
    retraction_delay: int = 0
    max_steps: int = 2000
    n_replicates: int = 1
    rng_seed: int = 0
    transmission_prob: float = 1.0

    def __post_init__(self):
        if isinstance(self.topology, str):
            object.__setattr__(self, "topology", Topology.parse(self.topology))
        if self.n_agents < 2:
            raise ValueError("n_agents must be >= 2")
        if self.share_window < 1:
            raise ValueError("share_window must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not 0 <= self.retraction_delay <= self.max_steps:
            raise ValueError("retraction_delay must lie in [0, max_steps]")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if not 0.0 <= self.transmission_prob <= 1.0:
            raise ValueError("transmission_prob must be in [0, 1]")


@dataclass
class SimState:
    states: np.ndarray  # int8 BeliefState codes
    share_clock: np.ndarray  # int64
    carrying: np.ndarray  # int8 message codes
    step: int = 0
    patient_zero: int = -1

    @classmethod
    def initial(cls, n_agents: int) -> "SimState":
        return cls(
            states=np.zeros(n_agents, dtype=np.int8),
            share_clock=np.zeros(n_agents, dtype=np.int64),
            carrying=np.zeros(n_agents, dtype=np.int8),
        )

    def copy(self) -> "SimState":
        return SimState(
            self.states.copy(),
            self.share_clock.copy(),
            self.carrying.copy(),
            self.step,
            self.patient_zero,
        )

    def counts(self) -> tuple[int, int, int]:
        c = np.bincount(self.states, minlength=3)
        return int(c[0]), int(c[1]), int(c[2])

    @property
    def quiescent(self) -> bool:
        return not bool((self.share_clock > 0).any())


@numba.njit(cache=True)
def _transmit(states, clock, carrying, sender, receiver, window, coin, p):
    if clock[sender] <= 0:
        return False
    if coin >= p:
        return True
    msg = carrying[sender]
    if msg == CLAIM and states[receiver] == 0:
        states[receiver] = 1
        carrying[receiver] = CLAIM
        clock[receiver] = window
    elif msg == RETRACTION and states[receiver] == 1:
        states[receiver] = 2
        carrying[receiver] = RETRACTION
        clock[receiver] = window
    return True


@numba.njit(cache=True)
def _round(states, clock, carrying, indptr, indices, order, picks, coins, window, p):
    n = states.shape[0]
    acted = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        i = order[t]
        deg = indptr[i + 1] - indptr[i]
        j = indices[indptr[i] + int(picks[t] * deg)]
        # both partners may influence each other; the initiator speaks first
        if _transmit(states, clock, carrying, i, j, window, coins[2 * t], p):
            acted[i] = True
        if _transmit(states, clock, carrying, j, i, window, coins[2 * t + 1], p):
            acted[j] = True
    for i in range(n):
        if acted[i] and clock[i] > 0:
            clock[i] -= 1


def step(
    state: SimState,
    network: Network,
    rng: np.random.Generator,
    share_window: int,
    transmission_prob: float = 1.0,
) -> SimState:
    """Play one contact round and return the new state (input untouched).

    Every agent, in a random order, contacts one uniformly chosen neighbour.
    A partner whose share clock is positive transmits its message; a claim
    converts Neutral partners, a retraction converts False partners.
    Agents that transmitted (successfully or not) lose one clock tick.
    """
    new = state.copy()
    n = network.node_count
    order = rng.permutation(n)
    picks = rng.random(n)
    if transmission_prob < 1.0:
        coins = rng.random(2 * n)
    else:
        coins = np.zeros(2 * n)
    _round(
        new.states, new.share_clock, new.carrying,
        network.indptr, network.indices, order, picks, coins,
        share_window, transmission_prob,
    )
    new.step += 1
    return new


def seed_claim(state: SimState, rng: np.random.Generator, share_window: int) -> None:
    i = int(rng.integers(state.states.size))
    state.patient_zero = i
    state.states[i] = BeliefState.FALSE
    state.carrying[i] = CLAIM
    state.share_clock[i] = share_window


def seed_retraction(state: SimState, rng: np.random.Generator, share_window: int) -> int:
    """Hand the retraction message to patient zero (or a stand-in).  Returns the holder."""
    holder = state.patient_zero
    if state.states[holder] != BeliefState.FALSE:
        false_agents = np.flatnonzero(state.states == BeliefState.FALSE)
        if state.states[holder] == BeliefState.NEUTRAL and false_agents.size:
            holder = int(rng.choice(false_agents))
    if state.states[holder] == BeliefState.FALSE:
        state.states[holder] = BeliefState.RETRACTED
    state.carrying[holder] = RETRACTION
    state.share_clock[holder] = share_window
    return holder


def run(
    params: SimParams,
    rng: np.random.Generator,
    network: Network | None = None,
    observer: Callable[[SimState], None] | None = None,
) -> tuple[int, int, int]:
    """Simulate one replicate; returns final (neutral, false, retracted) counts.

    ``observer`` (if given) is called with every intermediate state, including
    the initial one; it exists for trace checks and costs a copy per step.
    """
    if network is None:
        network = build_network(params.topology, params.n_agents, rng)
    state = SimState.initial(params.n_agents)
    seed_claim(state, rng, params.share_window)
    window = params.share_window
    delay = params.retraction_delay

    while True:
        if state.step == delay:
            seed_retraction(state, rng, window)
        if observer is not None:
            observer(state.copy())
        if state.step >= params.max_steps:
            break
        if state.quiescent:
            if state.step >= delay:
                break
            # nothing moves until the retraction arrives
            state.step = delay
            continue
        state = step(state, network, rng, window, params.transmission_prob)
    return state.counts()


def replicate_rng(seed: int, delay_index: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, delay_index, replicate]))


@dataclass(frozen=True)
class SweepRow:
    delay: int
    mean_retracted: float
    sd_retracted: float
    mean_false: float
    sd_false: float
    mean_neutral: float
    sd_neutral: float


@dataclass
class SweepResult:
    params: SimParams
    rows: list[SweepRow]
    # (delay, replicate, neutral, false, retracted) for every run
    replicates: list[tuple[int, int, int, int, int]]

    def by_delay(self) -> dict[int, SweepRow]:
        return {r.delay: r for r in self.rows}


def _sweep_task(args):
    params, delay_index, delay, rep = args
    rng = replicate_rng(params.rng_seed, delay_index, rep)
    counts = run(replace(params, retraction_delay=delay), rng)
    return delay_index, rep, counts


def _sd(x: np.ndarray) -> float:
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def sweep_delay(
    params: SimParams, delay_grid: Sequence[int], workers: int = 1
) -> SweepResult:
    """Run ``params.n_replicates`` replicates for every delay in ``delay_grid``.

    Replicate ``r`` at grid position ``d`` is seeded from
    ``(rng_seed, d, r)`` alone, so results do not depend on ``workers``.
    """
    delays = [int(d) for d in delay_grid]
    if not delays:
        raise ValueError("delay_grid must not be empty")
    for d in delays:
        if not 0 <= d <= params.max_steps:
            raise ValueError(f"delay {d} outside [0, max_steps={params.max_steps}]")

    tasks = [
        (params, di, d, r) for di, d in enumerate(delays) for r in range(params.n_replicates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        out = [_sweep_task(t) for t in tasks]

    table = np.zeros((len(delays), params.n_replicates, 3), dtype=np.int64)
    for di, rep, counts in out:
        table[di, rep] = counts

    n = params.n_agents
    rows = []
    replicates = []
    for di, d in enumerate(delays):
        frac = table[di] / n
        rows.append(
            SweepRow(
                delay=d,
                mean_retracted=float(frac[:, 2].mean()),
                sd_retracted=_sd(frac[:, 2]),
                mean_false=float(frac[:, 1].mean()),
                sd_false=_sd(frac[:, 1]),
                mean_neutral=float(frac[:, 0].mean()),
                sd_neutral=_sd(frac[:, 0]),
            )
        )
        for r in range(params.n_replicates):
            replicates.append((d, r, *map(int, table[di, r])))
    return SweepResult(params, rows, replicates)


def pooled_se(a: SweepRow, b: SweepRow, n: int) -> float:
    """Standard error of the difference of two replicate means of size ``n``."""
    return math.sqrt((a.sd_retracted**2 + b.sd_retracted**2) / n)
