"""Experiment loop: agents against the simulated MEC world, with regret bookkeeping."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .. import mec_env
from ..agents import Agent, TimeVaryingBOAgent
from ..baselines import BCOAgent, DiscretizedMABAgent
from ..mec_env import Decision, MecConfig, MecState
from .config import ExperimentSpec

log = logging.getLogger(__name__)

CSV_COLUMNS = ("rep", "slot", "method", "y", "oracle_value", "regret", "cum_regret", "avg_regret", "edc_total")
STREAMS = ("env_state", "env_noise", "bandit", "acquisition", "hyper")


@dataclass
class RunRecord:
    rep: int
    slot: int
    method: str
    decision: Decision
    y: float
    oracle_value: float
    regret: float
    cum_regret: float
    avg_regret: float
    edc_total: float
    edc_per_wd: np.ndarray

    def row(self) -> list[str]:
        return [
            str(self.rep),
            str(self.slot),
            self.method,
            *(fmt(v) for v in (self.y, self.oracle_value, self.regret, self.cum_regret, self.avg_regret, self.edc_total)),
        ]


def fmt(v: float) -> str:
    return f"{v:.12g}"


def rep_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for one repetition, keyed by purpose."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


class OracleAgent(Agent):
    """Cheating reference that plays the per-slot optimum (needs the state)."""

    def __init__(self, env: MecConfig):
        self.env = env
        self.state: Optional[MecState] = None

    def act(self, slot, context=None):
        return mec_env.oracle_optimum(self.env, self.state).decision

    def feedback(self, y):
        pass


def make_agent(spec: ExperimentSpec, rngs: dict) -> Agent:
    if spec.method in ("tvbo", "ctx-tvbo", "ti-bo"):
        return TimeVaryingBOAgent(spec.env, spec.bo, rngs)
    if spec.method == "mab":
        return DiscretizedMABAgent(spec.env, spec.gamma, rngs, spec.levels)
    if spec.method == "bco":
        return BCOAgent(spec.env, spec.gamma, spec.bco, rngs)
    if spec.method == "oracle":
        return OracleAgent(spec.env)
    raise ValueError(spec.method)


def run_repetition(spec: ExperimentSpec, rep: int, label: Optional[str] = None) -> list[RunRecord]:
    """One repetition of ``spec`` seeded with ``spec.seed + rep``.

    ``label`` replaces the method name in the records (used by sweeps).
    """
    label = spec.method if label is None else label
    rngs = rep_streams(spec.seed + rep)
    env = spec.env
    agent = make_agent(spec, rngs)
    state = mec_env.init_state(env, rngs["env_state"])
    records = []
    cum = 0.0
    for slot in range(1, spec.slots + 1):
        if slot > 1:
            state = mec_env.advance(env, state, rngs["env_state"])
        if isinstance(agent, OracleAgent):
            agent.state = state
        context = (state.I.copy(), state.L.copy()) if agent.contextual else None
        decision = agent.act(slot, context)
        cost = mec_env.edc(env, state, decision)
        y = mec_env.observe(env, state, decision, rngs["env_noise"])
        agent.feedback(y)
        best = mec_env.oracle_optimum(env, state).value
        g = best - cost.reward
        cum += g
        records.append(
            RunRecord(rep, slot, label, decision, y, best, g, cum, cum / slot, cost.total, cost.per_wd)
        )
    return records


def _run_rep_star(args):
    return run_repetition(*args)


def run_experiment(
    spec: ExperimentSpec, reps: Optional[Iterable[int]] = None, label: Optional[str] = None
) -> list[RunRecord]:
    """All repetitions of ``spec``, ordered by (rep, slot).

    Output depends only on ``spec`` (and the chosen reps), not on ``workers``.
    """
    reps = list(range(spec.reps)) if reps is None else list(reps)
    workers = max(1, min(spec.workers or os.cpu_count() or 1, len(reps)))
    if workers == 1:
        chunks = [run_repetition(spec, r, label) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_rep_star, [(spec, r, label) for r in reps]))
    return [rec for chunk in chunks for rec in chunk]


def write_records(path, records: Iterable[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {tuple(rows[0].keys())}")
    out = []
    for r in rows:
        out.append({
            "rep": int(r["rep"]),
            "slot": int(r["slot"]),
            "method": r["method"],
            **{k: float(r[k]) for k in CSV_COLUMNS[3:]},
        })
    return out


@dataclass
class OracleCheck:
    slots: int
    worst_self_regret: float
    worst_random_gap: float
    passed: bool


def oracle_check(env: MecConfig, slots: int = 50, samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> OracleCheck:
    """Self-test of the regret oracle on a simulated trajectory.

    Each slot, the oracle decision must have zero regret against itself and
    its value must dominate ``samples`` uniformly random feasible decisions.
    """
    rngs = rep_streams(seed)
    rng = rngs["acquisition"]
    state = mec_env.init_state(env, rngs["env_state"])
    worst_self, worst_gap = -np.inf, -np.inf
    for slot in range(1, slots + 1):
        if slot > 1:
            state = mec_env.advance(env, state, rngs["env_state"])
        best = mec_env.oracle_optimum(env, state)
        worst_self = max(worst_self, best.value - mec_env.edc(env, state, best.decision).reward)
        for _ in range(samples):
            d = Decision(
                rng.integers(0, env.N + 1, env.M),
                rng.uniform(0.0, 1.0, env.M) * env.P_peak + 1e-12,
                rng.uniform(0.0, 1.0, env.M) * env.f_peak + 1e-12,
            )
            d.p = np.minimum(d.p, env.P_peak)
            d.f = np.minimum(d.f, env.f_peak)
            worst_gap = max(worst_gap, mec_env.edc(env, state, d).reward - best.value)
    passed = abs(worst_self) <= tol and worst_gap <= tol
    return OracleCheck(slots, float(worst_self), float(worst_gap), passed)
