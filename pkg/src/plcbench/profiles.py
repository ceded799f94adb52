"""Device profiles of the two assessed PLCs and the interface identifiers."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import InvalidConfig, UnsupportedInterface

BUCKETS = (1, 10, 100)


class Interface(str, enum.Enum):
    OUC_UDP = "ouc-udp"
    OUC_TCP = "ouc-tcp"
    S7 = "s7"
    OPCUA_WRITE = "opcua-write"
    OPCUA_READ = "opcua-read"
    UADP = "uadp"

    @classmethod
    def parse(cls, text: str) -> "Interface":
        key = text.strip().lower().replace("_", "-")
        aliases = {"udp": "ouc-udp", "tcp": "ouc-tcp", "libnodave": "s7", "iso-on-tcp": "s7",
                   "write": "opcua-write", "read": "opcua-read", "pubsub": "uadp"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidConfig(f"unknown interface {text!r}") from None


class Device(str, enum.Enum):
    S7_314 = "s7-314"
    S7_1512 = "s7-1512"

    @property
    def short(self) -> str:
        return self.value.split("-")[1]

    @classmethod
    def parse(cls, text: str) -> "Device":
        key = text.strip().lower().replace("_", "-")
        if not key.startswith("s7-"):
            key = "s7-" + key
        try:
            return cls(key)
        except ValueError:
            raise InvalidConfig(f"unknown profile {text!r}") from None


def bucket(n: int) -> int:
    """Nearest measured point of {1, 10, 100} on a log scale."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return min(BUCKETS, key=lambda b: abs(math.log10(n) - math.log10(b)))


@dataclass(frozen=True)
class PubSubLimits:
    max_fields_per_dataset: int = 10
    max_writers_per_group: int = 2

    @property
    def max_values_per_group(self) -> int:
        return self.max_fields_per_dataset * self.max_writers_per_group


@dataclass(frozen=True)
class PlcProfile:
    model: Device
    # (interface, bucket) -> minimum update time in ms
    min_update_time: Mapping[tuple[Interface, int], float]
    pdu_limit: int
    pubsub_limits: PubSubLimits = field(default_factory=PubSubLimits)
    estimated: frozenset[tuple[Interface, int]] = frozenset()

    def __post_init__(self) -> None:
        for key, value in self.min_update_time.items():
            if not value > 0:
                raise InvalidConfig(f"update time for {key} must be positive")

    @property
    def supports(self) -> frozenset[Interface]:
        return frozenset(i for i, _ in self.min_update_time)

    def require(self, interface: Interface) -> None:
        if interface not in self.supports:
            raise UnsupportedInterface(f"{interface.value} is not available on {self.model.value}")

    def update_time(self, interface: Interface, n: int) -> float:
        """Minimum update time (ms) for one exchange of ``n`` values."""
        self.require(interface)
        return self.min_update_time[(interface, bucket(n))]

    def is_estimated(self, interface: Interface, n: int) -> bool:
        return (interface, bucket(n)) in self.estimated


def _times(rows: dict[Interface, tuple[float, float, float]]) -> dict[tuple[Interface, int], float]:
    return {(iface, b): t for iface, ts in rows.items() for b, t in zip(BUCKETS, ts)}


S7_314 = PlcProfile(
    model=Device.S7_314,
    min_update_time=_times({
        Interface.OUC_UDP: (1.00, 1.00, 1.00),
        Interface.OUC_TCP: (1.01, 1.04, 1.02),
        Interface.S7: (2.00, 2.00, 4.00),
    }),
    pdu_limit=240,
)

S7_1512 = PlcProfile(
    model=Device.S7_1512,
    min_update_time=_times({
        Interface.OUC_UDP: (3.61, 3.60, 3.63),
        Interface.OUC_TCP: (3.77, 3.78, 3.83),
        Interface.S7: (1.32, 1.32, 1.40),
        Interface.OPCUA_WRITE: (6.83, 7.36, 16.56),
        Interface.OPCUA_READ: (9.11, 30.35, 246.1),
        Interface.UADP: (1.02, 1.26, 2.30),
    }),
    # S7-1500 CPUs negotiate 960 bytes; nothing in scope comes close
    pdu_limit=960,
    # firmware caps a WriterGroup at 20 values, the 100-value cell is extrapolated
    estimated=frozenset({(Interface.UADP, 100)}),
)

PROFILES: dict[Device, PlcProfile] = {S7_314.model: S7_314, S7_1512.model: S7_1512}


def get_profile(name: str | Device) -> PlcProfile:
    device = name if isinstance(name, Device) else Device.parse(name)
    return PROFILES[device]
