from __future__ import annotations

from dataclasses import dataclass

from ..errors import InvalidConfig, LimitExceeded, TooManyFields, TooManyWriters
from ..profiles import Interface, PlcProfile


@dataclass(frozen=True)
class DataSetWriterConfig:
    """One DataSetWriter publishing ``fields`` consecutive 4-byte variables.

    ``first_index`` is the 1-based variable index of the first field; variable
    i lives at byte offset ``4 * (i - 1)`` of data block ``db``.
    """

    writer_id: int
    fields: int
    first_index: int = 1
    db: int = 1


@dataclass(frozen=True)
class WriterGroupConfig:
    group_id: int
    publish_interval_ms: float
    writers: tuple[DataSetWriterConfig, ...]

    @property
    def value_count(self) -> int:
        return sum(w.fields for w in self.writers)


@dataclass(frozen=True)
class PubSubConfig:
    writer_groups: tuple[WriterGroupConfig, ...]
    publisher_id: int = 1

    @classmethod
    def single(cls, n: int, publish_interval_ms: float, group_id: int = 1) -> "PubSubConfig":
        """One group carrying ``n`` values, packed into as few writers as possible."""
        writers, index, wid = [], 1, 1
        while index <= n:
            count = min(10, n - index + 1)
            writers.append(DataSetWriterConfig(wid, count, index))
            index += count
            wid += 1
        return cls((WriterGroupConfig(group_id, publish_interval_ms, tuple(writers)),))

    @classmethod
    def from_dict(cls, data: dict) -> "PubSubConfig":
        try:
            groups = []
            for g in data["writer_groups"]:
                writers = tuple(
                    DataSetWriterConfig(int(w["id"]), int(w["fields"]), int(w.get("first_index", 1)), int(w.get("db", 1)))
                    for w in g["writers"]
                )
                groups.append(WriterGroupConfig(int(g["id"]), float(g["publish_interval_ms"]), writers))
            return cls(tuple(groups), int(data.get("publisher_id", 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad pubsub config: {exc}") from exc


@dataclass(frozen=True)
class AcceptedPubSub:
    config: PubSubConfig
    # PubSub is configured offline on the device; changes take effect after a restart
    requires_restart: bool = True


def configure_pubsub(cfg: PubSubConfig, profile: PlcProfile) -> AcceptedPubSub:
    profile.require(Interface.UADP)
    limits = profile.pubsub_limits
    for group in cfg.writer_groups:
        if not group.writers:
            raise InvalidConfig(f"writer group {group.group_id} has no writers")
        if len(group.writers) > limits.max_writers_per_group:
            raise TooManyWriters(f"group {group.group_id}: {len(group.writers)} writers, "
                                 f"limit {limits.max_writers_per_group}")
        for w in group.writers:
            if w.fields < 1:
                raise InvalidConfig(f"writer {w.writer_id} publishes no fields")
            if w.fields > limits.max_fields_per_dataset:
                raise TooManyFields(f"writer {w.writer_id}: {w.fields} fields, "
                                    f"limit {limits.max_fields_per_dataset}")
        floor = profile.update_time(Interface.UADP, group.value_count)
        if group.publish_interval_ms < floor:
            raise LimitExceeded(f"group {group.group_id}: publish interval {group.publish_interval_ms} ms "
                                f"is below the device minimum of {floor} ms")
    return AcceptedPubSub(cfg)
