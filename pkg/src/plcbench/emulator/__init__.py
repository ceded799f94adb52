"""Software PLC serving OUC, S7, OPC UA and UADP with device-like timing and limits."""
from .pacing import Pacer
from .process import EmulatorProcess, spawn
from .pubsub import AcceptedPubSub, DataSetWriterConfig, PubSubConfig, WriterGroupConfig, configure_pubsub
from .server import (Emulator, EmulatorConfig, Endpoints, OpcUaWriteEndpoint, OucTcpEndpoint, OucUdpEndpoint,
                     PubSubEndpoint, handle_s7_read, s7_response_interval, serve)
from .store import AddressOutOfRange, DataBlockStore

__all__ = [
    "AcceptedPubSub", "AddressOutOfRange", "DataBlockStore", "DataSetWriterConfig", "Emulator", "EmulatorConfig",
    "EmulatorProcess", "Endpoints", "OpcUaWriteEndpoint", "OucTcpEndpoint", "OucUdpEndpoint", "Pacer",
    "PubSubConfig", "PubSubEndpoint", "WriterGroupConfig", "configure_pubsub", "handle_s7_read",
    "s7_response_interval", "serve", "spawn",
]
