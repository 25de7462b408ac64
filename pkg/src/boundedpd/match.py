"""Two-player fixed-horizon match engine.

Runs one match: two programs, N clock ticks, payoffs from the table. Both
machines tick against the same observation snapshot (the completed actions
of the previous tick), so moves are effectively simultaneous. A program
fault, including playing O in a mode that forbids it, turns the offender
into a perpetual waiter from that tick on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from fractions import Fraction

from .game import (
    Action, GameConfig, Mode, PayoffTable, dump_config_text, payoff, validate_table,
)
from .vm import Observation, StrategyProgram, VmState, reset, tick


@dataclass(frozen=True)
class TickRecord:
    tick: int
    a1: Action
    a2: Action
    pay1: Fraction
    pay2: Fraction
    cost1: int
    cost2: int


@dataclass(frozen=True)
class MatchTrace:
    records: tuple[TickRecord, ...]
    total1: Fraction
    total2: Fraction
    fault1: str | None = None
    fault2: str | None = None

    @property
    def totals(self) -> tuple[Fraction, Fraction]:
        return (self.total1, self.total2)


@dataclass(frozen=True)
class MatchState:
    """One pair mid-match: histories line up with the tick index."""

    tick_index: int
    vm1: VmState
    vm2: VmState
    history: tuple[tuple[Action, Action], ...]
    total1: Fraction
    total2: Fraction
    last_pay1: Fraction | None = None
    last_pay2: Fraction | None = None


def new_match(p1: StrategyProgram, p2: StrategyProgram) -> MatchState:
    return MatchState(0, reset(p1), reset(p2), (), Fraction(0), Fraction(0))


def _observation(state: MatchState, me: int, horizon: int) -> Observation:
    if not state.history:
        return Observation(horizon_N=horizon)
    own, opp = state.history[-1]
    if me == 2:
        own, opp = opp, own
    return Observation(
        opponent_last_action=opp,
        own_last_action=own,
        last_payoff=state.last_pay1 if me == 1 else state.last_pay2,
        horizon_N=horizon,
    )


def match_step(
    state: MatchState,
    p1: StrategyProgram,
    p2: StrategyProgram,
    config: GameConfig,
    table: PayoffTable,
) -> tuple[MatchState, TickRecord]:
    """Advance one tick; both players observe, then both move."""
    obs1 = _observation(state, 1, config.N)
    obs2 = _observation(state, 2, config.N)
    vm1, a1 = tick(state.vm1, p1, obs1, config.k)
    vm2, a2 = tick(state.vm2, p2, obs2, config.k)

    # An action outside the mode's set is a program fault: the player waits
    # from here on and this tick's move is already a wait.
    if a1 is Action.O and config.mode is not Mode.OPD:
        vm1 = replace(vm1, faulted=True, fault_reason="played O outside OPD mode")
        a1 = Action.W
    if a2 is Action.O and config.mode is not Mode.OPD:
        vm2 = replace(vm2, faulted=True, fault_reason="played O outside OPD mode")
        a2 = Action.W

    outcome = payoff(a1, a2, table, config.mode)
    new_state = MatchState(
        tick_index=state.tick_index + 1,
        vm1=vm1,
        vm2=vm2,
        history=state.history + ((a1, a2),),
        total1=state.total1 + outcome.p1,
        total2=state.total2 + outcome.p2,
        last_pay1=outcome.p1,
        last_pay2=outcome.p2,
    )
    record = TickRecord(
        tick=new_state.tick_index,
        a1=a1, a2=a2,
        pay1=outcome.p1, pay2=outcome.p2,
        cost1=vm1.tick_cost, cost2=vm2.tick_cost,
    )
    return new_state, record


def run_match(
    p1: StrategyProgram,
    p2: StrategyProgram,
    config: GameConfig,
    table: PayoffTable,
) -> MatchTrace:
    """Play a full match of N ticks. Deterministic; raises on a bad table
    or a non-FTPD config (population games belong to the other engine)."""
    if config.mode is not Mode.FTPD:
        raise ValueError("run_match runs FTPD games; use run_population for OPD")
    violations = validate_table(table, config.mode)
    if violations:
        raise ValueError("invalid payoff table: " + ", ".join(violations))

    state = new_match(p1, p2)
    records = []
    for _ in range(config.N):
        state, record = match_step(state, p1, p2, config, table)
        records.append(record)
    return MatchTrace(
        records=tuple(records),
        total1=state.total1,
        total2=state.total2,
        fault1=state.vm1.fault_reason,
        fault2=state.vm2.fault_reason,
    )


def deviation_gain(
    opponent: StrategyProgram,
    candidate: StrategyProgram,
    baseline: StrategyProgram,
    config: GameConfig,
    table: PayoffTable,
) -> Fraction:
    """Payoff delta for player 1 from playing ``candidate`` instead of
    ``baseline`` against a fixed opponent."""
    with_candidate = run_match(candidate, opponent, config, table).total1
    with_baseline = run_match(baseline, opponent, config, table).total1
    return with_candidate - with_baseline


def trace_to_csv(
    trace: MatchTrace, config: GameConfig, table: PayoffTable, extra_meta: str = ""
) -> str:
    """CSV export with a reproducibility header naming config hash and seed."""
    digest = hashlib.sha256(
        (dump_config_text(table, config) + extra_meta).encode("utf-8")
    ).hexdigest()
    lines = [
        f"# config_sha256={digest} seed={config.seed}",
        "tick,a1,a2,pay1,pay2,cost1,cost2",
    ]
    for rec in trace.records:
        lines.append(
            f"{rec.tick},{rec.a1.value},{rec.a2.value},"
            f"{rec.pay1},{rec.pay2},{rec.cost1},{rec.cost2}"
        )
    return "\n".join(lines) + "\n"
