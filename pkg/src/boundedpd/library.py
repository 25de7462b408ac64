"""Built-in strategies shipped as DSL sources.

Six fixed strategies live as ``.pdstrat`` assets next to this module. The
seventh, CountingDefector, is generated per horizon: it cooperates through
an unrolled chain of free states while incrementing a counter sized for the
configured N, then checks the counter against N-2 before defecting. The
check is a single wide compare, so under a budget k below the counter width
the player inevitably spends a tick waiting before its defection lands.
This makes the defector the best case allowed by the cost model: even
granted perfect timing of the check, the compare itself costs a wait, the
partner's trigger fires, and the total comes out at (N-2) rewards plus one
punishment instead of N rewards.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import dsl
from .game import GameConfig, Mode, counter_width_for
from .vm import StrategyProgram

_ASSET_DIR = Path(__file__).parent / "assets"

#: Names accepted by :func:`get`, in listing order.
BUILTIN_NAMES = ("GRIM", "OFT", "TFT", "AllC", "AllD", "AllW", "CountingDefector")

#: Worst-case XOR units a single tick may demand, as documented per entry.
#: CountingDefector's cost depends on the horizon; see :func:`documented_cost`.
_FIXED_COSTS = {"GRIM": 2, "OFT": 2, "TFT": 2, "AllC": 0, "AllD": 0, "AllW": 0}

#: Which game modes an entry is meant for. OFT plays O, so it needs OPD.
INTENDED_MODES = {
    "GRIM": (Mode.FTPD, Mode.OPD),
    "OFT": (Mode.OPD,),
    "TFT": (Mode.FTPD, Mode.OPD),
    "AllC": (Mode.FTPD, Mode.OPD),
    "AllD": (Mode.FTPD, Mode.OPD),
    "AllW": (Mode.FTPD, Mode.OPD),
    "CountingDefector": (Mode.FTPD, Mode.OPD),
}


class UnknownStrategyError(KeyError):
    pass


def counting_defector_source(n: int) -> str:
    """Source text of the counting defector for horizon ``n`` (n >= 3)."""
    if n < 3:
        raise ValueError("CountingDefector needs a horizon of at least 3 ticks")
    width = counter_width_for(n)
    lines = [
        "strategy CountingDefector",
        f"counter n: {width} bits",
    ]
    for i in range(1, n - 1):
        target = f"c{i + 1}" if i < n - 2 else "armed"
        lines.append(f"c{i}: always play C inc n goto {target}")
    lines.append("armed: if n >= N-2 then play D")
    return "\n".join(lines) + "\n"


def source_text(name: str, config: GameConfig) -> str:
    """Raw DSL text for a builtin (CountingDefector depends on config.N)."""
    if name == "CountingDefector":
        return counting_defector_source(config.N)
    path = _ASSET_DIR / f"{name}.pdstrat"
    if name not in BUILTIN_NAMES or not path.exists():
        raise UnknownStrategyError(name)
    return path.read_text(encoding="utf-8")


def documented_cost(name: str, config: GameConfig) -> int:
    if name == "CountingDefector":
        return counter_width_for(config.N)
    try:
        return _FIXED_COSTS[name]
    except KeyError:
        raise UnknownStrategyError(name) from None


def get(name: str, config: GameConfig) -> StrategyProgram:
    """Compile a builtin for the given config. Unknown names raise."""
    return dsl.compile(dsl.parse(source_text(name, config)), config)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    source: str
    documented_cost: int
    modes: tuple[Mode, ...]
    program: StrategyProgram


def catalog(config: GameConfig) -> dict[str, CatalogEntry]:
    """All builtins compiled for ``config``, keyed by name."""
    entries = {}
    for name in BUILTIN_NAMES:
        if name == "CountingDefector" and config.N < 3:
            continue
        entries[name] = CatalogEntry(
            name=name,
            source=source_text(name, config),
            documented_cost=documented_cost(name, config),
            modes=INTENDED_MODES[name],
            program=get(name, config),
        )
    return entries
