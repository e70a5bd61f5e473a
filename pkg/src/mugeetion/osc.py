"""OSC 1.0 wire codec: messages, bundles, and the strict parser they share.

Binary layout follows OSC 1.0: every field occupies a multiple of 4 bytes,
strings are NUL-terminated and NUL-padded, numbers are big-endian. Only the
four core argument types (int32 ``i``, float32 ``f``, string ``s``, blob
``b``) are supported; that is the whole vocabulary FaceOSC speaks.

The parser is deliberately strict: non-NUL padding, unknown type tags and
trailing garbage are errors, never warnings, so that malformed datagrams are
counted instead of silently producing wrong feature values.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

MAX_BUNDLE_DEPTH = 8
TIMETAG_IMMEDIATE = 1

_SUPPORTED_TAGS = "ifsb"


class OscError(Exception):
    """Base class for everything the codec can raise."""


class OscParseError(OscError):
    pass


class Truncated(OscParseError):
    """Buffer ended inside a field."""


class BadPadding(OscParseError):
    """A pad byte was not NUL, or a size was not a multiple of 4."""


class UnknownTypeTag(OscParseError):
    """Type tag outside the supported i, f, s, b set."""


class NotAMessage(OscParseError):
    """Content does not start like an OSC message."""


class BadMagic(OscParseError):
    """Bundle does not start with '#bundle'."""


class DepthExceeded(OscParseError):
    """Bundles nested deeper than MAX_BUNDLE_DEPTH."""


class OscSerializeError(OscError):
    pass


class InvalidAddress(OscSerializeError):
    """Address is empty, non-printable, or missing the leading '/'."""


class NonFiniteFloat(OscSerializeError):
    """Float argument is NaN or infinite."""


@dataclass(frozen=True)
class OscMessage:
    address: str
    args: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class OscBundle:
    timetag: int = TIMETAG_IMMEDIATE
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def immediate(self) -> bool:
        return self.timetag == TIMETAG_IMMEDIATE


def _pad(data: bytes) -> bytes:
    return data + b"\x00" * (-len(data) % 4)


def _encode_string(s: str, what: str) -> bytes:
    try:
        raw = s.encode("ascii")
    except UnicodeEncodeError:
        raise OscSerializeError(f"{what} must be ASCII: {s!r}") from None
    if "\x00" in s:
        raise OscSerializeError(f"{what} contains NUL: {s!r}")
    return _pad(raw + b"\x00")


def serialize_message(msg: OscMessage) -> bytes:
    """Encode a message; the result length is always a multiple of 4.

    Raises InvalidAddress for a bad address and NonFiniteFloat for NaN or
    infinite float arguments. Argument Python types select the OSC tag:
    int -> i, float -> f, str -> s, bytes -> b.
    """
    addr = msg.address
    if not addr.startswith("/") or not addr.isprintable() or len(addr) < 2:
        raise InvalidAddress(f"bad OSC address {addr!r}")
    tags = ","
    payload = bytearray()
    for arg in msg.args:
        if isinstance(arg, bool):
            raise OscSerializeError("bool is not an OSC type; pass int 0/1")
        if isinstance(arg, int):
            if not -(2**31) <= arg < 2**31:
                raise OscSerializeError(f"int out of int32 range: {arg}")
            tags += "i"
            payload += struct.pack(">i", arg)
        elif isinstance(arg, float):
            if not math.isfinite(arg):
                raise NonFiniteFloat(f"cannot encode {arg!r} as float32")
            tags += "f"
            payload += struct.pack(">f", arg)
        elif isinstance(arg, str):
            tags += "s"
            payload += _encode_string(arg, "string argument")
        elif isinstance(arg, (bytes, bytearray)):
            tags += "b"
            payload += struct.pack(">i", len(arg)) + _pad(bytes(arg))
        else:
            raise OscSerializeError(f"unsupported argument type {type(arg).__name__}")
    return _encode_string(addr, "address") + _encode_string(tags, "type tags") + bytes(payload)


def serialize_bundle(bundle: OscBundle) -> bytes:
    """Encode a bundle; elements get int32 size prefixes."""
    out = bytearray(b"#bundle\x00")
    out += struct.pack(">Q", bundle.timetag)
    for el in bundle.elements:
        data = serialize_packet(el)
        out += struct.pack(">i", len(data)) + data
    return bytes(out)


def serialize_packet(packet) -> bytes:
    if isinstance(packet, OscBundle):
        return serialize_bundle(packet)
    if isinstance(packet, OscMessage):
        return serialize_message(packet)
    raise OscSerializeError(f"cannot serialize {type(packet).__name__}")


def _read_string(data: bytes, offset: int, what: str) -> tuple[str, int]:
    nul = data.find(b"\x00", offset)
    if nul < 0:
        raise Truncated(f"unterminated {what} at byte {offset}")
    end = offset + 4 * ((nul - offset) // 4 + 1)
    if end > len(data):
        raise Truncated(f"{what} padding runs past the buffer")
    if data[nul:end].strip(b"\x00"):
        raise BadPadding(f"non-NUL pad byte after {what}")
    return data[offset:nul].decode("ascii", errors="replace"), end


def parse_message(data: bytes) -> OscMessage:
    """Decode one OSC message from a complete buffer.

    The buffer must be at least 8 bytes, a multiple of 4 long, and fully
    consumed by the message; anything else raises an OscParseError subclass
    (Truncated, BadPadding, UnknownTypeTag or NotAMessage).
    """
    if len(data) >= 1 and data[0:1] != b"/":
        raise NotAMessage("message must start with '/'")
    if len(data) < 8:
        raise Truncated(f"message too short ({len(data)} bytes)")
    if len(data) % 4:
        raise Truncated(f"length {len(data)} is not a multiple of 4")
    address, offset = _read_string(data, 0, "address")
    tags, offset = _read_string(data, offset, "type tag string")
    if not tags.startswith(","):
        raise NotAMessage("type tag string must begin with ','")
    args = []
    for tag in tags[1:]:
        if tag == "i":
            if offset + 4 > len(data):
                raise Truncated("buffer ends inside int32 argument")
            args.append(struct.unpack_from(">i", data, offset)[0])
            offset += 4
        elif tag == "f":
            if offset + 4 > len(data):
                raise Truncated("buffer ends inside float32 argument")
            args.append(struct.unpack_from(">f", data, offset)[0])
            offset += 4
        elif tag == "s":
            value, offset = _read_string(data, offset, "string argument")
            args.append(value)
        elif tag == "b":
            if offset + 4 > len(data):
                raise Truncated("buffer ends inside blob size")
            size = struct.unpack_from(">i", data, offset)[0]
            offset += 4
            if size < 0:
                raise OscParseError(f"negative blob size {size}")
            end = offset + size
            if end > len(data):
                raise Truncated("buffer ends inside blob")
            padded = offset + 4 * ((size + 3) // 4)
            if padded > len(data):
                raise Truncated("blob padding runs past the buffer")
            if data[end:padded].strip(b"\x00"):
                raise BadPadding("non-NUL pad byte after blob")
            args.append(data[offset:end])
            offset = padded
        else:
            raise UnknownTypeTag(f"unsupported type tag {tag!r}")
    if offset != len(data):
        raise OscParseError(f"{len(data) - offset} trailing bytes after last argument")
    return OscMessage(address, tuple(args))


def parse_bundle(data: bytes, _depth: int = 1) -> OscBundle:
    """Decode a '#bundle' packet, recursing into nested bundles.

    Element decode errors re-raise as the same error type with the element
    index prefixed to the message. Nesting past MAX_BUNDLE_DEPTH raises
    DepthExceeded.
    """
    if _depth > MAX_BUNDLE_DEPTH:
        raise DepthExceeded(f"bundles nested deeper than {MAX_BUNDLE_DEPTH}")
    if data[0:8] != b"#bundle\x00":
        raise BadMagic("bundle must start with '#bundle\\0'")
    if len(data) < 16:
        raise Truncated("bundle shorter than magic plus timetag")
    timetag = struct.unpack_from(">Q", data, 8)[0]
    elements = []
    offset = 16
    index = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise Truncated(f"element {index}: buffer ends inside size prefix")
        size = struct.unpack_from(">i", data, offset)[0]
        offset += 4
        if size < 0:
            raise OscParseError(f"element {index}: negative size {size}")
        if size % 4:
            raise BadPadding(f"element {index}: size {size} is not a multiple of 4")
        if offset + size > len(data):
            raise Truncated(f"element {index}: buffer ends inside element")
        chunk = data[offset:offset + size]
        offset += size
        try:
            if chunk[0:1] == b"#":
                elements.append(parse_bundle(chunk, _depth + 1))
            else:
                elements.append(parse_message(chunk))
        except OscParseError as e:
            raise type(e)(f"element {index}: {e}") from None
        index += 1
    return OscBundle(timetag, tuple(elements))


def parse_packet(data: bytes):
    """Decode a datagram as either a message or a bundle."""
    if data[0:1] == b"#":
        return parse_bundle(data)
    return parse_message(data)


def flatten(packet) -> list[OscMessage]:
    """Messages of a packet in element order, bundles expanded recursively."""
    if isinstance(packet, OscMessage):
        return [packet]
    out = []
    for el in packet.elements:
        out.extend(flatten(el))
    return out
