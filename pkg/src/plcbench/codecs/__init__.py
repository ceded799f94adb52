"""On-the-wire encoders and decoders for the five PLC interfaces."""
from __future__ import annotations

from typing import Union

from ..errors import Malformed, UnsupportedKind
from ..profiles import Interface
from . import opcua, ouc, s7, uadp
from .common import DataType, Scalar
from .opcua import OpcUaServiceMessage
from .ouc import OucLayout, OucPayload
from .s7 import CotpConnect, S7Kind, S7Message, S7Setup, split_for_pdu
from .uadp import DataSetMessage, UadpNetworkMessage

WireMessage = Union[OucPayload, S7Message, S7Setup, CotpConnect, OpcUaServiceMessage, UadpNetworkMessage]

__all__ = [
    "DataType", "Scalar", "OucLayout", "OucPayload", "S7Kind", "S7Message", "S7Setup", "CotpConnect",
    "DataSetMessage", "UadpNetworkMessage", "WireMessage", "encode", "decode", "split_for_pdu",
    "opcua", "ouc", "s7", "uadp",
]


def encode(msg: WireMessage, **options) -> bytes:
    """Encode any wire message; ``options`` go to the protocol codec
    (``pdu_limit`` for S7, ``limits`` for UADP)."""
    if isinstance(msg, OucPayload):
        return ouc.encode(msg)
    if isinstance(msg, (S7Message, S7Setup, CotpConnect)):
        return s7.encode(msg, **options)
    if isinstance(msg, UadpNetworkMessage):
        return uadp.encode(msg, **options)
    if isinstance(msg, (opcua.ReadRequest, opcua.ReadResponse, opcua.WriteRequest, opcua.WriteResponse)):
        return opcua.encode(msg)
    raise UnsupportedKind(f"no codec for {type(msg).__name__}")


def decode(data: bytes, expected: Interface | str, **options) -> WireMessage:
    interface = Interface.parse(expected) if isinstance(expected, str) else expected
    if not data and interface not in (Interface.OUC_UDP, Interface.OUC_TCP):
        raise Malformed("empty message")
    if interface in (Interface.OUC_UDP, Interface.OUC_TCP):
        return ouc.decode(data, **options)
    if interface is Interface.S7:
        return s7.decode(data)
    if interface in (Interface.OPCUA_READ, Interface.OPCUA_WRITE):
        return opcua.decode(data)
    return uadp.decode(data, **options)
