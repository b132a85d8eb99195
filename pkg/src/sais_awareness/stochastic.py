"""Exact event-driven simulation of the SAIS Markov chain on a graph.

Random numbers come from numpy's PCG64 bit generator seeded with the run
seed, so an ``EventLog`` replays bit-identically on any platform with the
same numpy major version.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .dynamics import SaisParams
from .graph import Graph


class NodeState(IntEnum):
    SUSCEPTIBLE = 0
    ALERT = 1
    INFECTED = 2


EVENT_KINDS = ("infect_susceptible", "infect_alert", "alert", "recover")
INFECT_S, INFECT_A, ALERT, RECOVER = range(4)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class EventLog:
    seed: int
    initial_state: np.ndarray
    times: np.ndarray
    nodes: np.ndarray
    kinds: np.ndarray
    final_state: np.ndarray
    extinction_time: Optional[float]
    t_max: float
    peak_infected: int

    @property
    def events(self) -> list[tuple[float, int, str]]:
        return [(float(t), int(i), EVENT_KINDS[k])
                for t, i, k in zip(self.times, self.nodes, self.kinds)]

    def state_at(self, t: float) -> np.ndarray:
        """Node states just after all events with time <= t."""
        state = self.initial_state.copy()
        stop = int(np.searchsorted(self.times, t, side="right"))
        for i, k in zip(self.nodes[:stop], self.kinds[:stop]):
            state[i] = _TARGET[k]
        return state

    def to_csv(self) -> str:
        lines = ["time,node,kind"]
        lines.extend(f"{t!r},{i},{k}" for t, i, k in self.events)
        return "\n".join(lines) + "\n"


_TARGET = np.array([NodeState.INFECTED, NodeState.INFECTED, NodeState.ALERT,
                    NodeState.SUSCEPTIBLE], dtype=np.int8)


def _as_states(init, n: int) -> np.ndarray:
    state = np.asarray(init, dtype=np.int8).copy()
    if state.shape != (n,):
        raise ValueError(f"initial state has shape {state.shape}, expected ({n},)")
    if state.min(initial=0) < 0 or state.max(initial=0) > 2:
        raise ValueError("node states must be 0 (S), 1 (A) or 2 (I)")
    return state


def infected_neighbours(g: Graph, state: np.ndarray) -> np.ndarray:
    return np.asarray(g.to_scipy() @ (state == NodeState.INFECTED).astype(float)).astype(np.int64)


def gillespie_run(g: Graph, params: SaisParams, init: Sequence[int], t_max: float,
                  seed: int, *, check_rates: bool = False) -> EventLog:
    """Simulate one trajectory until ``t_max`` or extinction.

    Susceptible nodes are infected at ``beta Y`` and alerted at ``kappa Y``,
    alert nodes infected at ``r beta Y``, infected nodes recover at
    ``delta``, where ``Y`` counts infected neighbours. Alert nodes never
    revert to susceptible. With ``check_rates`` the incrementally maintained
    ``Y`` is compared with a from-scratch count after every event.
    """
    params.check_graph(g)
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = g.n
    state = _as_states(init, n)
    initial = state.copy()
    rng = make_rng(seed)
    indptr, indices = g.indptr, g.indices
    beta, delta, kappa, r = params.beta, params.delta, params.kappa, params.r
    coef = np.array([beta + kappa, r * beta, np.zeros(n)])  # by state; infected use delta

    Y = infected_neighbours(g, state)
    rates = np.where(state == NodeState.INFECTED, delta, coef[state, np.arange(n)] * Y)
    n_inf = int(np.sum(state == NodeState.INFECTED))
    peak = n_inf

    times, nodes, kinds = [], [], []
    t = 0.0
    extinction = 0.0 if n_inf == 0 else None
    while n_inf > 0:
        cum = np.cumsum(rates)
        total = cum[-1]
        t_next = t + rng.standard_exponential() / total
        pick = rng.random() * total
        if t_next > t_max:
            break
        t = t_next
        i = min(int(np.searchsorted(cum, pick, side="right")), n - 1)
        offset = pick - (cum[i] - rates[i])

        s = state[i]
        if s == NodeState.INFECTED:
            kind = RECOVER
        elif s == NodeState.ALERT:
            kind = INFECT_A
        else:
            kind = INFECT_S if offset < beta[i] * Y[i] else ALERT

        nb = indices[indptr[i]:indptr[i + 1]]
        if kind == ALERT:
            state[i] = NodeState.ALERT
            rates[i] = coef[1, i] * Y[i]
        elif kind == RECOVER:
            state[i] = NodeState.SUSCEPTIBLE
            rates[i] = coef[0, i] * Y[i]
            Y[nb] -= 1
            n_inf -= 1
        else:
            state[i] = NodeState.INFECTED
            rates[i] = delta[i]
            Y[nb] += 1
            n_inf += 1
            peak = max(peak, n_inf)
        if kind != ALERT and nb.size:
            sn = state[nb]
            rates[nb] = np.where(sn == NodeState.INFECTED, delta[nb], coef[sn, nb] * Y[nb])

        times.append(t)
        nodes.append(i)
        kinds.append(kind)
        if check_rates and not np.array_equal(Y, infected_neighbours(g, state)):
            raise AssertionError(f"infected-neighbour counts drifted after event {len(times)}")
        if n_inf == 0:
            extinction = t

    return EventLog(seed=seed, initial_state=initial, times=np.array(times, dtype=float),
                    nodes=np.array(nodes, dtype=np.int64), kinds=np.array(kinds, dtype=np.int8),
                    final_state=state, extinction_time=extinction, t_max=float(t_max),
                    peak_infected=peak)


@dataclass
class RunSummary:
    seed: int
    events: int
    extinct: bool
    extinction_time: Optional[float]
    peak_infected: int
    final_infected: int


@dataclass
class EnsembleSummary:
    extinct_fraction: float
    mean_peak_infected: float
    runs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def summarize(log: EventLog) -> RunSummary:
    return RunSummary(seed=log.seed, events=int(log.times.size),
                      extinct=log.extinction_time is not None,
                      extinction_time=log.extinction_time,
                      peak_infected=log.peak_infected,
                      final_infected=int(np.sum(log.final_state == NodeState.INFECTED)))


def _one(args) -> RunSummary:
    g, params, init, t_max, seed = args
    return summarize(gillespie_run(g, params, init, t_max, seed))


def ensemble_extinction(g: Graph, params: SaisParams, init, t_max: float, runs: int,
                        seed: int, workers: int = 1) -> EnsembleSummary:
    """Run seeds ``seed .. seed + runs - 1`` and aggregate extinction statistics."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(g, params, init, t_max, seed + k) for k in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_one, jobs, chunksize=max(1, runs // (4 * workers))))
    else:
        summaries = [_one(job) for job in jobs]
    return EnsembleSummary(
        extinct_fraction=float(np.mean([s.extinct for s in summaries])),
        mean_peak_infected=float(np.mean([s.peak_infected for s in summaries])),
        runs=summaries)
