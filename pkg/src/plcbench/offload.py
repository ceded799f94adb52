"""Computation-offloading cost model and break-even points.

All arithmetic is done in microseconds with exact fractions; milliseconds
appear only in the public ``*_ms`` helpers and in reports.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidConfig, NoBenefit, OutOfTable
from .frame_model import records_to_csv, records_to_markdown, requests_per_exchange
from .profiles import BUCKETS, PROFILES, Device, Interface, PlcProfile


def _exact(value: float | int | str | Fraction) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(Decimal(str(value)))


@dataclass(frozen=True)
class CycleModel:
    """Linear cycle-time growth: each Leibniz partial sum costs ``c_us``."""

    name: str
    c_us: float
    n_max: int | None = None      # stop-state threshold, informational only

    def __post_init__(self) -> None:
        if not self.c_us > 0:
            raise InvalidConfig("cycle constant must be positive")

    @classmethod
    def from_ms(cls, name: str, c_ms: float, n_max: int | None = None) -> "CycleModel":
        return cls(name, float(_exact(c_ms) * 1000), n_max)

    def delta_us(self, n: int) -> Fraction:
        return _exact(self.c_us) * n


C_S7_1512 = CycleModel("S7-1512", 36.5, 164_000)
C_S7_314 = CycleModel("S7-314", 20.2, 296_000)
C_MINI_PC = CycleModel("mini PC", 0.0349)

CYCLE_MODELS: dict[Device, CycleModel] = {Device.S7_1512: C_S7_1512, Device.S7_314: C_S7_314}


def delta_t_cycle(model: CycleModel, n: int) -> float:
    """Increase of the PLC cycle time (ms) for ``n`` partial sums."""
    return float(model.delta_us(n) / 1000)


@dataclass(frozen=True)
class NetworkModel:
    line_length_m: float = 1000
    hops: int = 10
    per_meter_delay_ns: float = 5
    per_hop_one_way_us: float = 7.5

    @property
    def t_network_us(self) -> Fraction:
        line = _exact(self.line_length_m) * _exact(self.per_meter_delay_ns) / 1000
        return line + self.hops * _exact(self.per_hop_one_way_us)


@dataclass(frozen=True)
class OverheadModel:
    t_co_us: float = 1
    t_nio_us: float = 1.5

    @property
    def t_overhead_us(self) -> Fraction:
        return 2 * _exact(self.t_nio_us) + _exact(self.t_co_us)


@dataclass(frozen=True)
class OffloadScenario:
    plc: CycleModel
    edge: CycleModel = C_MINI_PC
    network: NetworkModel = field(default_factory=NetworkModel)
    overhead: OverheadModel = field(default_factory=OverheadModel)
    t_update_us: float = 0
    # request/response pairs per update; each one crosses the network and
    # the virtualisation layer again
    requests: int = 1

    @property
    def fixed_us(self) -> Fraction:
        per_request = self.network.t_network_us + self.overhead.t_overhead_us
        return _exact(self.t_update_us) + self.requests * per_request

    def t_ro_us(self, n: int) -> Fraction:
        return self.edge.delta_us(n) + self.fixed_us


def t_ro(scenario: OffloadScenario, n: int) -> float:
    """Total offloading time (ms) for ``n`` partial sums."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return float(scenario.t_ro_us(n) / 1000)


def break_even(scenario: OffloadScenario) -> int:
    """Smallest n at which offloading is no slower than running on the PLC."""
    speedup = _exact(scenario.plc.c_us) - _exact(scenario.edge.c_us)
    if speedup <= 0:
        raise NoBenefit(f"{scenario.edge.name} is not faster than {scenario.plc.name}")
    return math.ceil(scenario.fixed_us / speedup)


# -- Leibniz load generator ------------------------------------------------------

PI_TABLE: tuple[tuple[int, str], ...] = (
    (2, "3"),
    (32, "3.1"),
    (1_000, "3.14"),
    (10_000, "3.141"),
    (100_000, "3.141"),
    (1_000_000, "3.14159"),
)


def leibniz_pi(n: int) -> float:
    """4 * sum_{k=0..n} (-1)^k / (2k+1), accumulated in index order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    total = 0.0
    for k in range(n + 1):
        term = 1.0 / (2 * k + 1)
        total = total - term if k & 1 else total + term
    return 4 * total


def leibniz_partial_sums(n_max: int, start: int = 0, carry: float = 0.0) -> np.ndarray:
    """Running sums for k = start..n_max continuing from ``carry``, times 4.

    ``np.cumsum`` accumulates sequentially, so entry k equals ``leibniz_pi(k)``.
    """
    k = np.arange(start, n_max + 1, dtype=np.float64)
    terms = np.where(k % 2 == 0, 1.0, -1.0) / (2 * k + 1)
    sums = np.cumsum(np.concatenate(([carry], terms)))[1:]
    return 4 * sums


def pi_prefix(x: float, digits: int) -> str:
    """First ``digits`` digits of ``x``, truncated ("3", "3.1", "3.14", ...)."""
    if digits < 1:
        raise ValueError("digits must be >= 1")
    quantum = Decimal(1).scaleb(-(digits - 1))
    return str(Decimal(x).quantize(quantum, rounding=ROUND_DOWN))


PI_DIGITS = "3.14159265358979"


def true_prefix(digits: int) -> str:
    return PI_DIGITS[:1] if digits == 1 else PI_DIGITS[:digits + 1]


def brute_force_min_n(digits: int, limit: int = 10**7, chunk: int = 1 << 20) -> int | None:
    """Smallest n whose partial sum shares π's first ``digits`` digits."""
    target = true_prefix(digits)
    lo = float(Decimal(target))
    hi = float(Decimal(target) + Decimal(1).scaleb(-(digits - 1)))
    carry, start = 0.0, 0
    while start <= limit:
        stop = min(start + chunk - 1, limit)
        sums = leibniz_partial_sums(stop, start, carry)
        # float window first, exact decimal check on the candidates
        for idx in np.flatnonzero((sums >= lo * (1 - 1e-12)) & (sums < hi * (1 + 1e-12))):
            if pi_prefix(float(sums[idx]), digits) == target:
                return start + int(idx)
        carry = float(sums[-1]) / 4
        start = stop + 1
    return None


@dataclass(frozen=True)
class DigitsRow:
    digits: int
    n: int
    printed: str
    approximation: float
    matches_true_prefix: bool
    brute_force_n: int | None


def digits_required(digits: int, brute_force: bool = True, limit: int = 10**7) -> DigitsRow:
    """Tabulated number of partial sums for the given number of digits of π."""
    if not 1 <= digits <= len(PI_TABLE):
        raise OutOfTable(f"table covers 1..{len(PI_TABLE)} digits, got {digits}")
    n, printed = PI_TABLE[digits - 1]
    approx = leibniz_pi(n)
    return DigitsRow(
        digits=digits,
        n=n,
        printed=printed,
        approximation=approx,
        matches_true_prefix=pi_prefix(approx, digits) == true_prefix(digits),
        brute_force_n=brute_force_min_n(digits, limit) if brute_force else None,
    )


# -- break-even table ----------------------------------------------------------------


@dataclass(frozen=True)
class BreakEvenCell:
    interface: Interface
    device: Device
    n: int
    n_br: int | None
    t_update_ms: float | None
    requests: int = 1
    estimated: bool = False

    @property
    def label(self) -> str:
        if self.n_br is None:
            return "n/a"
        if self.n_br == 0:
            return "0 (always beneficial)"
        return str(self.n_br)


@dataclass
class BreakEvenTable:
    cells: list[BreakEvenCell]

    COLUMNS = ("interface", "device", "n", "n_br", "estimated_flag", "t_update_ms", "requests")

    @property
    def defined(self) -> list[BreakEvenCell]:
        return [c for c in self.cells if c.n_br is not None]

    def cell(self, interface: Interface, device: Device, n: int) -> BreakEvenCell:
        for c in self.cells:
            if (c.interface, c.device, c.n) == (interface, device, n):
                return c
        raise KeyError((interface, device, n))

    def records(self) -> list[dict]:
        return [{"interface": c.interface.value, "device": c.device.short, "n": c.n, "n_br": c.label,
                 "estimated_flag": int(c.estimated),
                 "t_update_ms": "" if c.t_update_ms is None else f"{c.t_update_ms:g}",
                 "requests": c.requests} for c in self.cells]

    def to_csv(self) -> str:
        return records_to_csv(self.COLUMNS, self.records())

    def to_markdown(self) -> str:
        return records_to_markdown(self.COLUMNS, self.records())


def build_breakeven_table(
    profiles: Sequence[PlcProfile] = tuple(PROFILES.values()),
    interfaces: Iterable[Interface] | None = None,
    ns: Sequence[int] = BUCKETS,
    edge: CycleModel = C_MINI_PC,
    network: NetworkModel = NetworkModel(),
    overhead: OverheadModel = OverheadModel(),
    plc_models: Mapping[Device, CycleModel] = CYCLE_MODELS,
    t_update_overrides: Mapping[tuple[Interface, Device, int], float] | None = None,
) -> BreakEvenTable:
    """Break-even points for every (interface, device, n); unsupported cells are n/a."""
    overrides = t_update_overrides or {}
    cells = []
    for interface in (list(Interface) if interfaces is None else interfaces):
        for profile in profiles:
            for n in ns:
                if interface not in profile.supports:
                    cells.append(BreakEvenCell(interface, profile.model, n, None, None))
                    continue
                t_update = overrides.get((interface, profile.model, n), profile.update_time(interface, n))
                requests = len(requests_per_exchange(interface, n, profile))
                scenario = OffloadScenario(plc_models[profile.model], edge, network, overhead,
                                           float(_exact(t_update) * 1000), requests)
                cells.append(BreakEvenCell(interface, profile.model, n, break_even(scenario), t_update,
                                           requests, profile.is_estimated(interface, n)))
    return BreakEvenTable(cells)


# -- scenario files ------------------------------------------------------------------


def _cycle_from(data, default: CycleModel) -> CycleModel:
    if data is None:
        return default
    if isinstance(data, str):
        try:
            return CYCLE_MODELS[Device.parse(data)]
        except InvalidConfig:
            if data.lower().replace(" ", "-") in ("mini-pc", "edge"):
                return C_MINI_PC
            raise
    if "c_ms" in data:
        return CycleModel.from_ms(data.get("name", "custom"), data["c_ms"], data.get("n_max"))
    return CycleModel(data.get("name", "custom"), data["c_us"], data.get("n_max"))


def t_update_from_stats(path: str | Path, statistic: str = "min") -> float:
    """Update time (ms) taken from a stats JSON written by the harness."""
    try:
        data = json.loads(Path(path).read_text())
        return float(data[statistic])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InvalidConfig(f"cannot read {statistic!r} from {path}: {exc}") from exc


def scenario_from_dict(data: Mapping, base_dir: Path | None = None) -> OffloadScenario:
    """Build a scenario from its JSON form.

    ``t_update`` is either a number of milliseconds or an object
    ``{"stats_file": path, "statistic": "min"}``.
    """
    try:
        plc = _cycle_from(data["plc"], C_S7_1512)
        edge = _cycle_from(data.get("edge"), C_MINI_PC)
        network = NetworkModel(**data.get("network", {}))
        overhead = OverheadModel(**data.get("overhead", {}))
        t_update = data.get("t_update_ms", 0.0)
        if isinstance(t_update, Mapping):
            path = Path(t_update["stats_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            t_update = t_update_from_stats(path, t_update.get("statistic", "min"))
        return OffloadScenario(plc, edge, network, overhead, float(_exact(t_update) * 1000),
                               int(data.get("requests", 1)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidConfig):
            raise
        raise InvalidConfig(f"bad scenario: {exc}") from exc


def load_scenario(path: str | Path) -> OffloadScenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise InvalidConfig(f"cannot load scenario {path}: {exc}") from exc
    return scenario_from_dict(data, path.parent)


def with_t_update(scenario: OffloadScenario, t_update_ms: float) -> OffloadScenario:
    return replace(scenario, t_update_us=float(_exact(t_update_ms) * 1000))
