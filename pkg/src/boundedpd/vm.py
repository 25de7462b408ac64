"""Budgeted strategy virtual machine.

A strategy is a fixed, finite instruction list executed tick by tick. Each
clock tick grants the player ``k`` XOR units. Only COMPARE instructions
consume the budget, at one unit per bit of their widest operand; everything
else is free bookkeeping. A COMPARE that cannot finish within the remaining
budget suspends: the tick's action is W, and the compare resumes next tick
with a fresh budget (progress is kept, operand values are latched at the
moment the compare started).

Control flow model:

* Execution proceeds instruction by instruction from the current pc.
* EMIT records the tick's action and keeps executing (it costs nothing).
* HALT ends the tick. The tick's action is the last EMIT executed during
  this tick, or W if there was none. The next tick resumes at pc + 1, so a
  program is laid out as one or more small loops and the program counter
  doubles as the strategy's persistent state.
* Running past the end of the program ends the tick the same way and
  finishes the program: the player waits for the rest of the game.
* A malformed step (bad jump target, bad register) faults the program; a
  faulted player plays W for all remaining ticks.

If a tick ends in suspension the recorded action is W even when an EMIT had
already executed earlier in the same tick: an unfinished compare means the
player has not committed a move this tick.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .game import Action, bit_width, counter_width_for

#: Action encoding used in registers and compare operands.
ACTION_CODE = {Action.C: 0, Action.D: 1, Action.W: 2, Action.O: 3}

#: Width charged when a compare touches the payoff observation. Payoffs are
#: rationals, so this is a documented convention rather than a storage size.
PAYOFF_OPERAND_WIDTH = 16

#: Bookkeeping steps allowed per tick before the program is declared faulty
#: (guards against zero-cost jump loops in hand-written programs).
MAX_STEPS_PER_TICK = 10_000


class Opcode(Enum):
    EMIT = "EMIT"
    COMPARE = "COMPARE"
    INCREMENT = "INCREMENT"
    LOAD_CONST = "LOAD_CONST"
    LOAD_OBS = "LOAD_OBS"
    JUMP = "JUMP"
    HALT = "HALT"


class CmpOp(Enum):
    EQ = "=="
    NE = "!="
    LT = "<"
    GE = ">="


class OperandKind(Enum):
    CONST_INT = "int"
    CONST_ACTION = "action"
    REG = "reg"
    OBS = "obs"


OBS_FIELDS = ("opp", "own", "pay", "horizon")


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    value: object  # int for CONST_INT/REG, Action for CONST_ACTION, field name for OBS

    @staticmethod
    def const(value: int) -> "Operand":
        return Operand(OperandKind.CONST_INT, int(value))

    @staticmethod
    def action(action: Action) -> "Operand":
        return Operand(OperandKind.CONST_ACTION, action)

    @staticmethod
    def reg(index: int) -> "Operand":
        return Operand(OperandKind.REG, int(index))

    @staticmethod
    def obs(field: str) -> "Operand":
        if field not in OBS_FIELDS:
            raise ValueError(f"unknown observation field {field!r}")
        return Operand(OperandKind.OBS, field)


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    action: Action | None = None          # EMIT
    lhs: Operand | None = None            # COMPARE
    op: CmpOp | None = None               # COMPARE
    rhs: Operand | None = None            # COMPARE
    on_false: int | None = None           # COMPARE jump target
    reg: int | None = None                # INCREMENT / LOAD_*
    value: int | None = None              # LOAD_CONST
    field: str | None = None              # LOAD_OBS
    target: int | None = None             # JUMP


def emit(action: Action) -> Instruction:
    return Instruction(Opcode.EMIT, action=action)


def compare(lhs: Operand, op: CmpOp, rhs: Operand, on_false: int) -> Instruction:
    return Instruction(Opcode.COMPARE, lhs=lhs, op=op, rhs=rhs, on_false=on_false)


def increment(reg: int) -> Instruction:
    return Instruction(Opcode.INCREMENT, reg=reg)


def load_const(reg: int, value: int) -> Instruction:
    return Instruction(Opcode.LOAD_CONST, reg=reg, value=value)


def load_obs(reg: int, field: str) -> Instruction:
    if field == "pay":
        raise ValueError("the payoff observation cannot be loaded into an integer register")
    return Instruction(Opcode.LOAD_OBS, reg=reg, field=field)


def jump(target: int) -> Instruction:
    return Instruction(Opcode.JUMP, target=target)


def halt() -> Instruction:
    return Instruction(Opcode.HALT)


@dataclass(frozen=True)
class StrategyProgram:
    """A compiled strategy: instructions plus declared register widths.

    ``layout`` is the compiler's symbol table: one entry per state of the
    source rule machine, ``(label, state_start, rule_starts, epilogue)``.
    Hand-assembled programs leave it empty.
    """

    name: str
    instructions: tuple[Instruction, ...]
    reg_widths: tuple[int, ...] = ()
    reg_names: tuple[str, ...] = ()
    worst_tick_cost: int | None = None
    source: str | None = None
    layout: tuple = ()

    @property
    def register_count(self) -> int:
        return len(self.reg_widths)

    def __len__(self) -> int:
        return len(self.instructions)


@dataclass(frozen=True)
class Observation:
    """What a player can see at the start of a tick.

    There is deliberately no tick index: a player who wants to know the time
    must count, and counting costs compares. The horizon N is an input to
    the game and is always visible. The previous round's payoff is visible
    at zero cost.
    """

    opponent_last_action: Action | None = None
    own_last_action: Action | None = None
    last_payoff: Fraction | None = None
    horizon_N: int = 1


EMPTY_OBSERVATION = Observation()


@dataclass(frozen=True)
class Pending:
    """A compare caught mid-flight: operand values are latched at start."""

    index: int
    units_done: int
    width: int
    lhs_value: object
    rhs_value: object


@dataclass(frozen=True)
class VmState:
    pc: int = 0
    regs: tuple[int, ...] = ()
    pending: Pending | None = None
    faulted: bool = False
    fault_reason: str | None = None
    finished: bool = False
    tick_cost: int = 0        # XOR units spent during the most recent tick
    suspended: bool = False   # most recent tick ended inside a compare


def compare_cost(width_bits: int) -> int:
    """XOR units to compare operands of the given width: one per bit."""
    if width_bits < 1:
        raise ValueError("compare width must be at least 1 bit")
    return width_bits


def reset(program: StrategyProgram) -> VmState:
    """Fresh state: entry pc, zeroed registers, nothing pending."""
    return VmState(pc=0, regs=(0,) * program.register_count)


class ProgramValidationError(ValueError):
    pass


def validate_program(program: StrategyProgram) -> list[str]:
    """Static checks; returns a list of problems (empty when clean)."""
    problems: list[str] = []
    size = len(program.instructions)

    def check_target(idx: int, target: int | None, label: str) -> None:
        # target == size is legal: it runs the program off the end for good.
        if target is None or not (0 <= target <= size):
            problems.append(f"instruction {idx}: {label} target {target} out of range")

    def check_reg(idx: int, reg: int | None) -> None:
        if reg is None or not (0 <= reg < program.register_count):
            problems.append(f"instruction {idx}: register {reg} out of range")

    for idx, ins in enumerate(program.instructions):
        if ins.opcode is Opcode.COMPARE:
            check_target(idx, ins.on_false, "on_false")
            for operand in (ins.lhs, ins.rhs):
                if operand is None:
                    problems.append(f"instruction {idx}: missing compare operand")
                elif operand.kind is OperandKind.REG:
                    check_reg(idx, operand.value)  # type: ignore[arg-type]
        elif ins.opcode is Opcode.JUMP:
            check_target(idx, ins.target, "jump")
        elif ins.opcode in (Opcode.INCREMENT, Opcode.LOAD_CONST, Opcode.LOAD_OBS):
            check_reg(idx, ins.reg)
        elif ins.opcode is Opcode.EMIT and ins.action is None:
            problems.append(f"instruction {idx}: EMIT without an action")
    return problems


def _operand_width(operand: Operand, program: StrategyProgram, obs: Observation) -> int:
    if operand.kind is OperandKind.CONST_INT:
        return bit_width(operand.value)  # type: ignore[arg-type]
    if operand.kind is OperandKind.CONST_ACTION:
        return 2
    if operand.kind is OperandKind.REG:
        return program.reg_widths[operand.value]  # type: ignore[index]
    field = operand.value
    if field in ("opp", "own"):
        return 2
    if field == "horizon":
        return counter_width_for(obs.horizon_N)
    return PAYOFF_OPERAND_WIDTH


def _operand_value(operand: Operand, regs: tuple[int, ...], obs: Observation) -> object:
    if operand.kind is OperandKind.CONST_INT:
        return operand.value
    if operand.kind is OperandKind.CONST_ACTION:
        return ACTION_CODE[operand.value]  # type: ignore[index]
    if operand.kind is OperandKind.REG:
        return regs[operand.value]  # type: ignore[index]
    field = operand.value
    if field == "opp":
        a = obs.opponent_last_action
        return None if a is None else ACTION_CODE[a]
    if field == "own":
        a = obs.own_last_action
        return None if a is None else ACTION_CODE[a]
    if field == "pay":
        return obs.last_payoff
    return obs.horizon_N


def _evaluate(op: CmpOp, lhs: object, rhs: object) -> bool:
    # A comparison touching a missing observation is false whatever the
    # operator: nothing can be concluded from a move that never happened.
    if lhs is None or rhs is None:
        return False
    if op is CmpOp.EQ:
        return lhs == rhs
    if op is CmpOp.NE:
        return lhs != rhs
    if op is CmpOp.LT:
        return lhs < rhs
    return lhs >= rhs


def _fault(state: VmState, regs: list[int], cost: int, reason: str) -> tuple[VmState, Action]:
    new = VmState(state.pc, tuple(regs), None, True, reason, False, cost, False)
    return new, Action.W


def tick(
    state: VmState, program: StrategyProgram, obs: Observation, k: int
) -> tuple[VmState, Action]:
    """Advance the program by one clock tick; returns the action taken.

    Deterministic in (state, program, obs, k). Never raises for program
    misbehavior: faults are folded into the returned state.
    """
    if k < 2:
        raise ValueError("budget k must be at least 2 (one action compare must fit in a tick)")

    if state.faulted or state.finished:
        done = VmState(state.pc, state.regs, None, state.faulted,
                       state.fault_reason, state.finished, 0, False)
        return done, Action.W

    budget = k
    spent = 0
    emitted: Action | None = None
    regs = list(state.regs)
    pc = state.pc
    size = len(program.instructions)

    # Resume a suspended compare before anything else.
    if state.pending is not None:
        pend = state.pending
        remaining = pend.width - pend.units_done
        if remaining > budget:
            still = Pending(pend.index, pend.units_done + budget, pend.width,
                            pend.lhs_value, pend.rhs_value)
            new = VmState(state.pc, state.regs, still, False, None, False, budget, True)
            return new, Action.W
        budget -= remaining
        spent += remaining
        ins = program.instructions[pend.index]
        result = _evaluate(ins.op, pend.lhs_value, pend.rhs_value)
        pc = pend.index + 1 if result else ins.on_false  # type: ignore[assignment]
        if pc is None or not (0 <= pc <= size):
            return _fault(state, regs, spent, f"compare target {pc} out of range")

    steps = 0
    while True:
        steps += 1
        if steps > MAX_STEPS_PER_TICK:
            return _fault(state, regs, spent, "per-tick step limit exceeded")
        if pc >= size or pc < 0:
            # Ran past the end: the program is over for good.
            new = VmState(pc, tuple(regs), None, False, None, True, spent, False)
            return new, emitted if emitted is not None else Action.W

        ins = program.instructions[pc]
        opcode = ins.opcode

        if opcode is Opcode.HALT:
            new = VmState(pc + 1, tuple(regs), None, False, None, False, spent, False)
            return new, emitted if emitted is not None else Action.W

        if opcode is Opcode.EMIT:
            emitted = ins.action
            pc += 1
            continue

        if opcode is Opcode.COMPARE:
            try:
                width = compare_cost(max(
                    _operand_width(ins.lhs, program, obs),
                    _operand_width(ins.rhs, program, obs),
                ))
                lhs_value = _operand_value(ins.lhs, tuple(regs), obs)
                rhs_value = _operand_value(ins.rhs, tuple(regs), obs)
            except (IndexError, TypeError, KeyError):
                return _fault(state, regs, spent, f"bad compare operand at {pc}")
            if width > budget:
                # Not enough budget left this tick: latch and suspend.
                pend = Pending(pc, budget, width, lhs_value, rhs_value)
                spent += budget
                new = VmState(pc, tuple(regs), pend, False, None, False, spent, True)
                return new, Action.W
            budget -= width
            spent += width
            if _evaluate(ins.op, lhs_value, rhs_value):
                pc += 1
            else:
                target = ins.on_false
                if target is None or not (0 <= target <= size):
                    return _fault(state, regs, spent, f"compare target {target} out of range")
                pc = target
            continue

        if opcode is Opcode.JUMP:
            target = ins.target
            if target is None or not (0 <= target <= size):
                return _fault(state, regs, spent, f"jump target {target} out of range")
            pc = target
            continue

        if opcode is Opcode.INCREMENT:
            reg = ins.reg
            if reg is None or not (0 <= reg < len(regs)):
                return _fault(state, regs, spent, f"register {reg} out of range")
            mask = (1 << program.reg_widths[reg]) - 1
            regs[reg] = (regs[reg] + 1) & mask
            pc += 1
            continue

        if opcode is Opcode.LOAD_CONST:
            reg = ins.reg
            if reg is None or not (0 <= reg < len(regs)):
                return _fault(state, regs, spent, f"register {reg} out of range")
            mask = (1 << program.reg_widths[reg]) - 1
            regs[reg] = int(ins.value or 0) & mask
            pc += 1
            continue

        if opcode is Opcode.LOAD_OBS:
            reg = ins.reg
            if reg is None or not (0 <= reg < len(regs)):
                return _fault(state, regs, spent, f"register {reg} out of range")
            raw = _operand_value(Operand.obs(ins.field or "opp"), tuple(regs), obs)
            mask = (1 << program.reg_widths[reg]) - 1
            regs[reg] = (0 if raw is None else int(raw)) & mask
            pc += 1
            continue

        return _fault(state, regs, spent, f"unknown opcode at {pc}")

@dataclass(frozen=True)
class DebugRecord:
    tick: int
    pc_before: int
    cost: int
    action: Action
    suspended: bool


def debug_trace(
    program: StrategyProgram, observations: list[Observation], k: int
) -> list[DebugRecord]:
    """Per-tick (pc, cost, action) listing for inspecting a program's timing."""
    state = reset(program)
    records = []
    for index, obs in enumerate(observations, start=1):
        pc_before = state.pc
        state, action = tick(state, program, obs, k)
        records.append(DebugRecord(index, pc_before, state.tick_cost, action, state.suspended))
    return records


def format_debug_trace(records: list[DebugRecord]) -> str:
    lines = ["tick,pc,cost,action,suspended"]
    for r in records:
        lines.append(f"{r.tick},{r.pc_before},{r.cost},{r.action.value},{int(r.suspended)}")
    return "\n".join(lines) + "\n"
