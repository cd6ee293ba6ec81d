"""Framed binary exchange between task clients and the central client."""

from .client import CentralClient, RemoteError, parse_addr, target_client_run, upload_message
from .codec import ErrorCode, MsgType, ProtocolError, decode, encode
from .server import CentralRegistry, CentralServer, ServerThread, central_handle

__all__ = [
    "CentralClient",
    "CentralRegistry",
    "CentralServer",
    "ErrorCode",
    "MsgType",
    "ProtocolError",
    "RemoteError",
    "ServerThread",
    "central_handle",
    "decode",
    "encode",
    "parse_addr",
    "target_client_run",
    "upload_message",
]
