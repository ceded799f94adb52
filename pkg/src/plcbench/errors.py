"""Exception hierarchy shared by every plcbench module."""


class PlcBenchError(Exception):
    """Base class for all plcbench errors."""


class UnknownMessageName(PlcBenchError, KeyError):
    pass


class UnsupportedInterface(PlcBenchError):
    """The device profile does not offer the requested interface."""


class Malformed(PlcBenchError, ValueError):
    """Bytes on the wire do not form a valid message."""


class LimitExceeded(PlcBenchError, ValueError):
    """A PDU, field or writer limit of the device would be violated."""


class TooManyFields(LimitExceeded):
    pass


class TooManyWriters(LimitExceeded):
    pass


class UnsupportedKind(PlcBenchError, TypeError):
    pass


class InvalidConfig(PlcBenchError, ValueError):
    pass


class PortUnavailable(PlcBenchError, OSError):
    pass


class ConnectionFailed(PlcBenchError, OSError):
    pass


class MeasurementTimeout(PlcBenchError, TimeoutError):
    pass


class InsufficientSamples(PlcBenchError, ValueError):
    pass


class NoBenefit(PlcBenchError, ValueError):
    """Offloading can never win because the edge is not faster than the PLC."""


class OutOfTable(PlcBenchError, KeyError):
    pass
