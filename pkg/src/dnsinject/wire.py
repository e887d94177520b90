"""DNS line format: names, presentation rendering, records and messages.

Names are kept as raw byte labels everywhere. Text is only produced on
request, through one of three rendering styles:

* ``STRICT``: RFC 4343 escaping. ``.`` and ``\\`` inside a label become
  ``\\.`` and ``\\\\``, bytes outside 0x21..0x7E become ``\\DDD``.
* ``NAIVE``: what a C decoder without escaping hands back. Bytes are copied
  verbatim, in-label dots look like separators and a zero byte ends the
  string.
* ``ESCAPE_ONLY``: the classic resolver-library rendering which also
  escapes the master-file specials ``;"()@$``. Used to model stubs that
  escape but never validate.
"""

from __future__ import annotations

import enum
import ipaddress
import re
import struct
from dataclasses import dataclass, field
from typing import Union

from .errors import (
    BadEscape,
    BadLabelType,
    BadRcode,
    BadRdata,
    CountMismatch,
    EmptyLabel,
    LabelTooLong,
    NameTooLong,
    PointerLoop,
    Truncated,
    TruncatedName,
)

MAX_LABEL = 63
MAX_NAME = 255
MAX_POINTER_JUMPS = 127


def _as_bytes(label: Union[bytes, bytearray, str]) -> bytes:
    if isinstance(label, str):
        return label.encode("latin-1")
    return bytes(label)


@dataclass(frozen=True)
class RawName:
    """A domain name in line format, root label implicit."""

    labels: tuple[bytes, ...] = ()

    def __post_init__(self):
        labels = tuple(_as_bytes(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        total = 1
        for label in labels:
            if not label:
                raise EmptyLabel("empty label inside a name")
            if len(label) > MAX_LABEL:
                raise LabelTooLong(f"label of {len(label)} octets")
            total += len(label) + 1
        if total > MAX_NAME:
            raise NameTooLong(f"name of {total} octets")

    @classmethod
    def of(cls, *labels) -> "RawName":
        return cls(tuple(_as_bytes(x) for x in labels))

    @classmethod
    def parse(cls, text: str) -> "RawName":
        return from_presentation(text)

    @property
    def wire_length(self) -> int:
        return sum(len(x) + 1 for x in self.labels) + 1

    @property
    def is_root(self) -> bool:
        return not self.labels

    def __len__(self):
        return len(self.labels)

    def __str__(self):
        return to_presentation(self).text

    def __repr__(self):
        return f"RawName({str(self)!r})"

    def lower(self) -> "RawName":
        return RawName(tuple(x.lower() for x in self.labels))

    def equals_ci(self, other: "RawName") -> bool:
        return self.lower() == other.lower()

    def is_subdomain_of(self, other: "RawName", ci: bool = True) -> bool:
        n = len(other.labels)
        if n > len(self.labels):
            return False
        mine = self.labels[len(self.labels) - n:]
        theirs = other.labels
        if ci:
            return [x.lower() for x in mine] == [x.lower() for x in theirs]
        return mine == theirs

    def prepend(self, *labels) -> "RawName":
        return RawName(tuple(_as_bytes(x) for x in labels) + self.labels)

    def parent(self, k: int = 1) -> "RawName":
        return RawName(self.labels[k:])

    def contains_byte(self, value: int) -> bool:
        return any(value in label for label in self.labels)


ROOT = RawName(())


# ---------------------------------------------------------------- encoding


def encode_name(name: RawName, compression: dict | None = None, offset: int = 0):
    """Encode ``name``; returns ``(bytes, compression)``.

    With a compression table (suffix labels -> message offset) the longest
    known suffix is replaced by a pointer and new suffixes are recorded
    relative to ``offset``, the position the name will occupy.
    """
    out = bytearray()
    labels = name.labels
    for i in range(len(labels)):
        suffix = labels[i:]
        if compression is not None:
            ptr = compression.get(suffix)
            if ptr is not None:
                out += struct.pack("!H", 0xC000 | ptr)
                return bytes(out), compression
            pos = offset + len(out)
            if pos < 0x4000:
                compression[suffix] = pos
        out.append(len(labels[i]))
        out += labels[i]
    out.append(0)
    return bytes(out), compression


def decode_name(buf: bytes, offset: int) -> tuple[RawName, int]:
    """Decode the name at ``offset``, following compression pointers.

    Returns the name and the offset just past it in the original stream.
    """
    labels = []
    pos = offset
    end = None
    jumps = 0
    visited = set()
    total = 1
    n = len(buf)
    while True:
        if pos >= n:
            raise TruncatedName(f"name runs past end of buffer at {pos}")
        length = buf[pos]
        kind = length & 0xC0
        if kind == 0xC0:
            if pos + 1 >= n:
                raise TruncatedName("truncated compression pointer")
            target = ((length & 0x3F) << 8) | buf[pos + 1]
            if end is None:
                end = pos + 2
            jumps += 1
            if target in visited or jumps > MAX_POINTER_JUMPS:
                raise PointerLoop(f"compression loop via offset {target}")
            visited.add(target)
            pos = target
            continue
        if kind:
            raise BadLabelType(f"label type 0x{kind:02x} at {pos}")
        if length == 0:
            pos += 1
            break
        if pos + 1 + length > n:
            raise TruncatedName("label runs past end of buffer")
        total += length + 1
        if total > MAX_NAME:
            raise NameTooLong("decoded name exceeds 255 octets")
        labels.append(bytes(buf[pos + 1:pos + 1 + length]))
        pos += 1 + length
    return RawName(tuple(labels)), end if end is not None else pos


# ------------------------------------------------------------ presentation


class EscapeStyle(enum.Enum):
    STRICT = "strict"
    NAIVE = "naive"
    ESCAPE_ONLY = "escape-only"


@dataclass(frozen=True)
class PresentationName:
    text: str
    style: EscapeStyle

    def __str__(self):
        return self.text


def _table(specials: bytes) -> list[str]:
    table = []
    for b in range(256):
        if b in specials:
            table.append("\\" + chr(b))
        elif 0x21 <= b <= 0x7E:
            table.append(chr(b))
        else:
            table.append(f"\\{b:03d}")
    return table


_STRICT_TABLE = _table(b".\\")
_ZONE_TABLE = _table(b'.\\;"()@$')


def escape_label(label: bytes, zone_safe: bool = False) -> str:
    table = _ZONE_TABLE if zone_safe else _STRICT_TABLE
    return "".join(map(table.__getitem__, label))


def naive_text(name: RawName) -> str:
    """Unescaped rendering without zero-byte truncation."""
    if not name.labels:
        return "."
    return ".".join(x.decode("latin-1") for x in name.labels) + "."


def to_presentation(name: RawName, style: EscapeStyle = EscapeStyle.STRICT) -> PresentationName:
    if style is EscapeStyle.NAIVE:
        text = naive_text(name)
        cut = text.find("\0")
        if cut >= 0:
            text = text[:cut]
        return PresentationName(text, style)
    if not name.labels:
        return PresentationName(".", style)
    zone_safe = style is EscapeStyle.ESCAPE_ONLY
    text = ".".join(escape_label(x, zone_safe) for x in name.labels) + "."
    return PresentationName(text, style)


_PLAIN = re.compile(r"[^\\.]+")
_DIGITS = frozenset("0123456789")


def unescape_text(text: str, split_dots: bool = True) -> list[bytes]:
    """Parse escaped text into byte chunks, split on unescaped dots.

    The root-terminating dot is dropped. Empty chunks raise ``EmptyLabel``.
    """
    chunks = []
    cur = bytearray()
    i = 0
    n = len(text)
    while i < n:
        m = _PLAIN.match(text, i)
        if m:
            try:
                cur += m.group().encode("latin-1")
            except UnicodeEncodeError as exc:
                raise BadEscape(f"non-octet character in {text!r}") from exc
            i = m.end()
            continue
        c = text[i]
        if c == "." and split_dots:
            if not cur:
                raise EmptyLabel(f"empty label in {text!r}")
            chunks.append(bytes(cur))
            cur = bytearray()
            i += 1
            continue
        if c == ".":
            cur.append(0x2E)
            i += 1
            continue
        if i + 1 >= n:
            raise BadEscape(f"dangling backslash in {text!r}")
        nxt = text[i + 1]
        if nxt in _DIGITS:
            digits = text[i + 1:i + 4]
            if len(digits) < 3 or not set(digits) <= _DIGITS:
                raise BadEscape(f"short decimal escape in {text!r}")
            value = int(digits)
            if value > 255:
                raise BadEscape(f"decimal escape \\{digits} out of range")
            cur.append(value)
            i += 4
        else:
            try:
                cur += nxt.encode("latin-1")
            except UnicodeEncodeError as exc:
                raise BadEscape(f"non-octet character in {text!r}") from exc
            i += 2
    if cur or not split_dots:
        chunks.append(bytes(cur))
    return chunks


def from_presentation(text: str) -> RawName:
    """Inverse of the strict rendering; also accepts ``\\X`` for any X."""
    if text == ".":
        return ROOT
    if not text:
        raise EmptyLabel("empty name")
    return RawName(tuple(unescape_text(text)))


# ----------------------------------------------------------------- records


class RType(enum.IntEnum):
    A = 1
    NS = 2
    CNAME = 5
    SOA = 6
    PTR = 12
    MX = 15
    TXT = 16
    AAAA = 28
    SRV = 33
    NAPTR = 35
    ANY = 255


class RClass(enum.IntEnum):
    IN = 1
    CH = 3
    ANY = 255


class Rcode(enum.IntEnum):
    NOERROR = 0
    FORMERR = 1
    SERVFAIL = 2
    NXDOMAIN = 3
    NOTIMP = 4
    REFUSED = 5
    YXDOMAIN = 6
    YXRRSET = 7
    NXRRSET = 8
    NOTAUTH = 9
    NOTZONE = 10


def type_name(rtype: int) -> str:
    try:
        return RType(rtype).name
    except ValueError:
        return f"TYPE{rtype}"


def type_from_name(text: str) -> int:
    text = text.upper()
    if text in RType.__members__:
        return int(RType[text])
    if text.startswith("TYPE") and text[4:].isdigit():
        return int(text[4:])
    raise ValueError(f"unknown record type {text!r}")


@dataclass(frozen=True)
class A:
    address: ipaddress.IPv4Address

    def __post_init__(self):
        object.__setattr__(self, "address", ipaddress.IPv4Address(self.address))


@dataclass(frozen=True)
class NameRdata:
    """Single-name rdata: CNAME, PTR, NS."""

    target: RawName


@dataclass(frozen=True)
class SOA:
    mname: RawName
    rname: RawName
    serial: int = 1
    refresh: int = 3600
    retry: int = 600
    expire: int = 86400
    minimum: int = 60


@dataclass(frozen=True)
class SRV:
    priority: int
    weight: int
    port: int
    target: RawName


@dataclass(frozen=True)
class NAPTR:
    order: int
    preference: int
    flags: bytes
    service: bytes
    regexp: bytes
    replacement: RawName


@dataclass(frozen=True)
class TXT:
    strings: tuple[bytes, ...]

    def __post_init__(self):
        strings = tuple(_as_bytes(s) for s in self.strings)
        for s in strings:
            if len(s) > 255:
                raise BadRdata("character-string longer than 255 octets")
        object.__setattr__(self, "strings", strings)

    @classmethod
    def chunked(cls, data: bytes) -> "TXT":
        data = _as_bytes(data)
        return cls(tuple(data[i:i + 255] for i in range(0, len(data), 255)) or (b"",))

    @property
    def joined(self) -> bytes:
        return b"".join(self.strings)


@dataclass(frozen=True)
class Opaque:
    data: bytes


Rdata = Union[A, NameRdata, SOA, SRV, NAPTR, TXT, Opaque]

_NAME_TYPES = {RType.CNAME, RType.PTR, RType.NS}


@dataclass(frozen=True)
class ResourceRecord:
    owner: RawName
    rtype: int
    rdata: Rdata
    ttl: int = 60
    rclass: int = RClass.IN

    def names(self) -> list[RawName]:
        """Every domain name carried in rdata."""
        rd = self.rdata
        if isinstance(rd, NameRdata):
            return [rd.target]
        if isinstance(rd, SRV):
            return [rd.target]
        if isinstance(rd, NAPTR):
            return [rd.replacement]
        if isinstance(rd, SOA):
            return [rd.mname, rd.rname]
        return []

    def with_owner(self, owner: RawName) -> "ResourceRecord":
        return ResourceRecord(owner, self.rtype, self.rdata, self.ttl, self.rclass)


def map_names(rr: ResourceRecord, fn) -> ResourceRecord:
    """Apply ``fn`` to the owner and every rdata name of ``rr``."""
    rd = rr.rdata
    if isinstance(rd, NameRdata):
        rd = NameRdata(fn(rd.target))
    elif isinstance(rd, SRV):
        rd = SRV(rd.priority, rd.weight, rd.port, fn(rd.target))
    elif isinstance(rd, NAPTR):
        rd = NAPTR(rd.order, rd.preference, rd.flags, rd.service, rd.regexp, fn(rd.replacement))
    elif isinstance(rd, SOA):
        rd = SOA(fn(rd.mname), fn(rd.rname), rd.serial, rd.refresh, rd.retry, rd.expire, rd.minimum)
    return ResourceRecord(fn(rr.owner), rr.rtype, rd, rr.ttl, rr.rclass)


def _charstr(data: bytes) -> bytes:
    return bytes([len(data)]) + data


def _encode_rdata(rd, buf: bytearray, compression) -> None:
    if isinstance(rd, Opaque):
        buf += rd.data
    elif isinstance(rd, A):
        buf += rd.address.packed
    elif isinstance(rd, NameRdata):
        buf += encode_name(rd.target, compression, len(buf))[0]
    elif isinstance(rd, SOA):
        buf += encode_name(rd.mname, compression, len(buf))[0]
        buf += encode_name(rd.rname, compression, len(buf))[0]
        buf += struct.pack("!IIIII", rd.serial, rd.refresh, rd.retry, rd.expire, rd.minimum)
    elif isinstance(rd, SRV):
        buf += struct.pack("!HHH", rd.priority, rd.weight, rd.port)
        buf += encode_name(rd.target)[0]
    elif isinstance(rd, NAPTR):
        buf += struct.pack("!HH", rd.order, rd.preference)
        for s in (rd.flags, rd.service, rd.regexp):
            if len(s) > 255:
                raise BadRdata("NAPTR character-string too long")
            buf += _charstr(s)
        buf += encode_name(rd.replacement)[0]
    elif isinstance(rd, TXT):
        for s in rd.strings:
            buf += _charstr(s)
    else:
        raise TypeError(f"cannot encode rdata {rd!r}")


def _read_charstr(buf: bytes, pos: int, end: int) -> tuple[bytes, int]:
    if pos >= end:
        raise BadRdata("missing character-string")
    n = buf[pos]
    if pos + 1 + n > end:
        raise BadRdata("character-string overruns rdata")
    return bytes(buf[pos + 1:pos + 1 + n]), pos + 1 + n


def _decode_rdata(rtype: int, rclass: int, buf: bytes, pos: int, end: int) -> Rdata:
    if rtype == RType.A and rclass == RClass.IN:
        if end - pos != 4:
            raise BadRdata("A rdata must be 4 octets")
        return A(ipaddress.IPv4Address(bytes(buf[pos:end])))
    if rtype in _NAME_TYPES:
        name, p = decode_name(buf, pos)
        if p != end:
            raise BadRdata("name rdata length mismatch")
        return NameRdata(name)
    if rtype == RType.SOA:
        mname, p = decode_name(buf, pos)
        rname, p = decode_name(buf, p)
        if end - p != 20:
            raise BadRdata("SOA rdata length mismatch")
        return SOA(mname, rname, *struct.unpack("!IIIII", buf[p:end]))
    if rtype == RType.SRV:
        if end - pos < 7:
            raise BadRdata("short SRV rdata")
        prio, weight, port = struct.unpack("!HHH", buf[pos:pos + 6])
        target, p = decode_name(buf, pos + 6)
        if p != end:
            raise BadRdata("SRV rdata length mismatch")
        return SRV(prio, weight, port, target)
    if rtype == RType.NAPTR:
        if end - pos < 4:
            raise BadRdata("short NAPTR rdata")
        order, pref = struct.unpack("!HH", buf[pos:pos + 4])
        p = pos + 4
        flags, p = _read_charstr(buf, p, end)
        service, p = _read_charstr(buf, p, end)
        regexp, p = _read_charstr(buf, p, end)
        repl, p = decode_name(buf, p)
        if p != end:
            raise BadRdata("NAPTR rdata length mismatch")
        return NAPTR(order, pref, flags, service, regexp, repl)
    if rtype == RType.TXT:
        strings = []
        p = pos
        while p < end:
            s, p = _read_charstr(buf, p, end)
            strings.append(s)
        return TXT(tuple(strings))
    return Opaque(bytes(buf[pos:end]))


# ---------------------------------------------------------------- messages


@dataclass(frozen=True)
class Question:
    name: RawName
    qtype: int
    qclass: int = RClass.IN


@dataclass
class Message:
    id: int = 0
    qr: bool = False
    opcode: int = 0
    aa: bool = False
    tc: bool = False
    rd: bool = True
    ra: bool = False
    z: int = 0
    rcode: int = Rcode.NOERROR
    questions: list[Question] = field(default_factory=list)
    answers: list[ResourceRecord] = field(default_factory=list)
    authority: list[ResourceRecord] = field(default_factory=list)
    additional: list[ResourceRecord] = field(default_factory=list)

    @property
    def question(self) -> Question | None:
        return self.questions[0] if self.questions else None

    @property
    def flags(self) -> int:
        return (
            (int(self.qr) << 15)
            | ((self.opcode & 0xF) << 11)
            | (int(self.aa) << 10)
            | (int(self.tc) << 9)
            | (int(self.rd) << 8)
            | (int(self.ra) << 7)
            | ((self.z & 0x7) << 4)
            | (self.rcode & 0xF)
        )

    def sections(self):
        return (self.answers, self.authority, self.additional)


def encode_message(msg: Message, compress: bool = False) -> bytes:
    if not 0 <= int(msg.rcode) <= 15:
        raise BadRcode(f"rcode {msg.rcode} does not fit the header")
    buf = bytearray(
        struct.pack(
            "!HHHHHH",
            msg.id & 0xFFFF,
            msg.flags,
            len(msg.questions),
            len(msg.answers),
            len(msg.authority),
            len(msg.additional),
        )
    )
    compression = {} if compress else None
    for q in msg.questions:
        buf += encode_name(q.name, compression, len(buf))[0]
        buf += struct.pack("!HH", q.qtype, q.qclass)
    for section in msg.sections():
        for rr in section:
            buf += encode_name(rr.owner, compression, len(buf))[0]
            buf += struct.pack("!HHI", rr.rtype, rr.rclass, rr.ttl)
            at = len(buf)
            buf += b"\0\0"
            _encode_rdata(rr.rdata, buf, compression)
            rdlen = len(buf) - at - 2
            if rdlen > 0xFFFF:
                raise BadRdata("rdata longer than 65535 octets")
            struct.pack_into("!H", buf, at, rdlen)
    return bytes(buf)


def decode_message(data: bytes) -> Message:
    if len(data) < 12:
        raise Truncated("message shorter than the 12-octet header")
    ident, flags, qd, an, ns, ar = struct.unpack("!HHHHHH", data[:12])
    rcode = flags & 0xF
    if rcode not in Rcode._value2member_map_:
        raise BadRcode(f"unassigned rcode {rcode}")
    msg = Message(
        id=ident,
        qr=bool(flags & 0x8000),
        opcode=(flags >> 11) & 0xF,
        aa=bool(flags & 0x0400),
        tc=bool(flags & 0x0200),
        rd=bool(flags & 0x0100),
        ra=bool(flags & 0x0080),
        z=(flags >> 4) & 0x7,
        rcode=Rcode(rcode),
    )
    pos = 12
    n = len(data)

    def missing(section: str, want: int, got: int):
        return CountMismatch(f"header announces {want} {section} records, found {got}")

    for i in range(qd):
        if pos >= n:
            raise missing("question", qd, i)
        try:
            name, pos = decode_name(data, pos)
        except TruncatedName as exc:
            raise Truncated(str(exc)) from exc
        if pos + 4 > n:
            raise Truncated("question truncated")
        qtype, qclass = struct.unpack("!HH", data[pos:pos + 4])
        pos += 4
        msg.questions.append(Question(name, qtype, qclass))
    for section, count, label in (
        (msg.answers, an, "answer"),
        (msg.authority, ns, "authority"),
        (msg.additional, ar, "additional"),
    ):
        for i in range(count):
            if pos >= n:
                raise missing(label, count, i)
            try:
                owner, pos = decode_name(data, pos)
            except TruncatedName as exc:
                raise Truncated(str(exc)) from exc
            if pos + 10 > n:
                raise Truncated("record header truncated")
            rtype, rclass, ttl, rdlen = struct.unpack("!HHIH", data[pos:pos + 10])
            pos += 10
            if pos + rdlen > n:
                raise Truncated("rdata truncated")
            try:
                rdata = _decode_rdata(rtype, rclass, data, pos, pos + rdlen)
            except TruncatedName as exc:
                raise BadRdata(str(exc)) from exc
            pos += rdlen
            section.append(ResourceRecord(owner, rtype, rdata, ttl, rclass))
    return msg


def frame_tcp(payload: bytes) -> bytes:
    """Prefix a message with its 2-octet length for TCP transport."""
    if len(payload) > 0xFFFF:
        raise ValueError("message too large for TCP framing")
    return struct.pack("!H", len(payload)) + payload


def unframe_tcp(data: bytes) -> tuple[bytes, bytes]:
    """Split one framed message off ``data``; returns ``(message, rest)``."""
    if len(data) < 2:
        raise Truncated("missing TCP length prefix")
    (n,) = struct.unpack("!H", data[:2])
    if len(data) < 2 + n:
        raise Truncated("TCP frame shorter than its length prefix")
    return data[2:2 + n], data[2 + n:]


def recv_tcp_message(sock) -> bytes:
    def read_exact(k: int) -> bytes:
        chunks = bytearray()
        while len(chunks) < k:
            part = sock.recv(k - len(chunks))
            if not part:
                raise Truncated("connection closed mid-message")
            chunks += part
        return bytes(chunks)

    (n,) = struct.unpack("!H", read_exact(2))
    return read_exact(n)


def make_query(name: RawName, qtype: int, ident: int = 0, qclass: int = RClass.IN, rd: bool = True) -> Message:
    return Message(id=ident, rd=rd, questions=[Question(name, int(qtype), int(qclass))])


def make_response(query: Message, answers=(), rcode: int = Rcode.NOERROR, aa: bool = False, ra: bool = True) -> Message:
    return Message(
        id=query.id,
        qr=True,
        opcode=query.opcode,
        aa=aa,
        rd=query.rd,
        ra=ra,
        rcode=rcode,
        questions=list(query.questions),
        answers=list(answers),
    )
