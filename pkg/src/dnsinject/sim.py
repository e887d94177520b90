"""Deterministic in-process model of a DNS resolution chain.

Components, upstream to downstream::

    attacker/target nameservers -> recursive -> [forwarder] -> stub -> [app cache]

Each component handles names the way its profile says. The recursive can
be transparent (bytes passed through, optionally lowercased) or
decode-and-reencode (names rendered naively to strings, then re-split on
dots). The forwarder can index every answer record by owner, which is what
lets a record from one zone answer queries for another.
"""

from __future__ import annotations

import enum
import ipaddress
import json
import re
import socketserver
import threading
import time
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DNSError, NoCacheInChain, UnknownPayload
from .payloads import ZoneFile, lookup_payload
from .validation import (
    GLIBC,
    PROFILES,
    DecodedOutcome,
    DecoderProfile,
    Verdict,
    decode_with_profile,
)
from .wire import (
    TXT,
    A,
    EscapeStyle,
    Message,
    RawName,
    RClass,
    Rcode,
    ResourceRecord,
    RType,
    decode_message,
    encode_message,
    frame_tcp,
    make_query,
    make_response,
    map_names,
    naive_text,
    recv_tcp_message,
    to_presentation,
)

LEGIT_IP = "192.0.2.80"
MAX_CHAIN = 8


class RecursiveProfile(enum.Enum):
    TRANSPARENT = "transparent"
    DECODE_REENCODE = "decode-reencode"


class AppCacheKey(enum.Enum):
    QUERY_NAME_ONLY = "query-name-only"
    ALL_NAMES = "all-names-in-response"


@dataclass(frozen=True)
class ForwarderConfig:
    present: bool = False
    cross_zone_cname_caching: bool = False


@dataclass(frozen=True)
class AppCacheConfig:
    present: bool = False
    keyed_by: AppCacheKey = AppCacheKey.QUERY_NAME_ONLY


@dataclass(frozen=True)
class SimChainConfig:
    recursive_profile: RecursiveProfile = RecursiveProfile.TRANSPARENT
    forwarder: ForwarderConfig = ForwarderConfig()
    stub_profile: DecoderProfile = GLIBC
    app_cache: AppCacheConfig = AppCacheConfig()
    lowercase: bool = False
    supported_qtypes: frozenset | None = None
    version: str | None = None
    name: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "recursive_profile": self.recursive_profile.value,
            "forwarder": {
                "present": self.forwarder.present,
                "cross_zone_cname_caching": self.forwarder.cross_zone_cname_caching,
            },
            "stub_profile": self.stub_profile.name,
            "app_cache": {"present": self.app_cache.present, "keyed_by": self.app_cache.keyed_by.value},
            "lowercase": self.lowercase,
            "supported_qtypes": sorted(self.supported_qtypes) if self.supported_qtypes else None,
            "version": self.version,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SimChainConfig":
        try:
            fwd = data.get("forwarder", {})
            app = data.get("app_cache", {})
            qtypes = data.get("supported_qtypes")
            return cls(
                recursive_profile=RecursiveProfile(data.get("recursive_profile", "transparent")),
                forwarder=ForwarderConfig(bool(fwd.get("present")), bool(fwd.get("cross_zone_cname_caching"))),
                stub_profile=PROFILES[data.get("stub_profile", GLIBC.name)],
                app_cache=AppCacheConfig(
                    bool(app.get("present")), AppCacheKey(app.get("keyed_by", "query-name-only"))
                ),
                lowercase=bool(data.get("lowercase", False)),
                supported_qtypes=frozenset(qtypes) if qtypes else None,
                version=data.get("version"),
                name=data.get("name", ""),
            )
        except (KeyError, ValueError, AttributeError) as exc:
            raise ConfigError(f"bad chain config: {exc}") from exc


PRESETS = {
    "bind": SimChainConfig(name="bind", app_cache=AppCacheConfig(True)),
    "verisign+dnsmasq": SimChainConfig(
        RecursiveProfile.DECODE_REENCODE, ForwarderConfig(True, True), name="verisign+dnsmasq"
    ),
    "verisign": SimChainConfig(RecursiveProfile.DECODE_REENCODE, name="verisign"),
    "dnsmasq": SimChainConfig(forwarder=ForwarderConfig(True, True), name="dnsmasq"),
    "uclibc-appcache": SimChainConfig(
        stub_profile=PROFILES["uclibc-like"],
        app_cache=AppCacheConfig(True, AppCacheKey.ALL_NAMES),
        name="uclibc-appcache",
    ),
}


def load_chain(source: str) -> SimChainConfig:
    """A preset name, a JSON object literal, or a path to a JSON file."""
    if source in PRESETS:
        return PRESETS[source]
    text = source
    if not source.lstrip().startswith("{"):
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"unknown chain preset or file {source!r}") from exc
    try:
        return SimChainConfig.from_json(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"chain config is not JSON: {exc}") from exc


@dataclass(frozen=True)
class TraceEvent:
    stage: int
    component: str
    action: str
    detail: str

    def __str__(self):
        return f"[{self.stage}] {self.component:<13} {self.action:<16} {self.detail}"


class Trace:
    def __init__(self):
        self.events: list[TraceEvent] = []
        self.stage = 0

    def add(self, component: str, action: str, detail: str = ""):
        self.events.append(TraceEvent(self.stage, component, action, detail))

    def contacts(self, component: str, stage: int | None = None) -> int:
        return sum(
            1
            for e in self.events
            if e.component == component and e.action == "query" and (stage is None or e.stage == stage)
        )


def _q(name: RawName, qtype: int) -> str:
    return f"{name} {RType(qtype).name if qtype in RType._value2member_map_ else qtype}"


# ------------------------------------------------------------- nameservers


class QueryLog:
    """Nameserver-side log, one line per query: ``ts prefix qname qtype src_ip``."""

    PREFIX = re.compile(r"[a-z2-7]{13}\Z")

    def __init__(self, clock=time.time):
        self.lines: list[str] = []
        self._lock = threading.Lock()
        self._clock = clock

    def record(self, qname: RawName, qtype: int, src: str):
        first = qname.labels[0].decode("latin-1") if qname.labels else ""
        prefix = first if self.PREFIX.match(first) else "-"
        qt = RType(qtype).name if qtype in RType._value2member_map_ else str(qtype)
        line = f"{self._clock():.6f} {prefix} {qname} {qt} {src}"
        with self._lock:
            self.lines.append(line)

    def by_prefix(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        with self._lock:
            for line in self.lines:
                out.setdefault(line.split(" ")[1], []).append(line)
        return out


def sim_answer(zone: ZoneFile, query: Message) -> Message:
    """Authoritative response of the attacker's nameserver."""
    q = query.question
    records = lookup_payload(zone, q.name, q.qtype) if q else []
    rcode = Rcode.NOERROR if records else Rcode.NXDOMAIN
    return make_response(query, records, rcode, aa=True, ra=False)


class Internet:
    """Routes queries to the attacker's nameserver or the target's real one."""

    def __init__(self, zone: ZoneFile, target_domain: RawName | None, trace: Trace,
                 legit_ip: str = LEGIT_IP, query_log: QueryLog | None = None, src: str = "127.0.0.1"):
        self.zone = zone
        self.target = target_domain or zone.target_domain
        self.trace = trace
        self.legit_ip = legit_ip
        self.query_log = query_log
        self.src = src

    def query(self, name: RawName, qtype: int) -> Message:
        query = make_query(name, qtype)
        if self.zone.is_authoritative_for(name):
            self.trace.add("attacker-ns", "query", _q(name, qtype))
            if self.query_log is not None:
                self.query_log.record(name, qtype, self.src)
            return sim_answer(self.zone, query)
        if self.target is not None and name.is_subdomain_of(self.target):
            self.trace.add("target-ns", "query", _q(name, qtype))
            if qtype == RType.A and len(name) > len(self.target):
                return make_response(query, [ResourceRecord(name, RType.A, A(self.legit_ip))], aa=True)
            return make_response(query, [], Rcode.NOERROR, aa=True)
        self.trace.add("root", "nxdomain", _q(name, qtype))
        return make_response(query, [], Rcode.NXDOMAIN, aa=True)


# ------------------------------------------------------------- resolvers


def reencode(name: RawName) -> RawName:
    """Naive string rendering split back on every dot."""
    text = to_presentation(name, EscapeStyle.NAIVE).text
    return RawName(tuple(p.encode("latin-1") for p in text.split(".") if p))


@dataclass
class Answer:
    rcode: int
    records: list[ResourceRecord]
    source: str = "upstream"


class Recursive:
    def __init__(self, cfg: SimChainConfig, internet: Internet, trace: Trace):
        self.cfg = cfg
        self.internet = internet
        self.trace = trace
        self.cache: dict[tuple, Answer] = {}

    def _process(self, records: list[ResourceRecord]) -> list[ResourceRecord]:
        if self.cfg.recursive_profile is RecursiveProfile.DECODE_REENCODE:
            records = [map_names(rr, reencode) for rr in records]
        if self.cfg.lowercase:
            records = [map_names(rr, RawName.lower) for rr in records]
        return records

    def resolve(self, qname: RawName, qtype: int) -> Answer:
        key = (qname.lower(), qtype)
        hit = self.cache.get(key)
        if hit is not None:
            self.trace.add("recursive", "cache-hit", _q(qname, qtype))
            return Answer(hit.rcode, list(hit.records), "recursive-cache")
        self.trace.add("recursive", "resolve", _q(qname, qtype))
        out = []
        rcode = Rcode.NOERROR
        name = qname
        for step in range(MAX_CHAIN):
            resp = self.internet.query(name, qtype)
            if step == 0:
                rcode = resp.rcode
            # in-bailiwick only: keep what the server said about the name asked
            mine = [rr for rr in resp.answers if rr.owner.equals_ci(name)]
            direct = [rr for rr in mine if rr.rtype == qtype]
            cnames = [rr for rr in mine if rr.rtype == RType.CNAME]
            if direct or qtype == RType.CNAME and cnames:
                out += direct or cnames
                break
            if not cnames:
                if step and resp.rcode == Rcode.NXDOMAIN:
                    rcode = Rcode.NXDOMAIN
                break
            out += cnames
            name = cnames[0].rdata.target
        records = self._process(out)
        answer = Answer(rcode, records)
        self.cache[key] = Answer(rcode, list(records))
        return answer


class Forwarder:
    def __init__(self, cfg: ForwarderConfig, upstream: Recursive, trace: Trace):
        self.cfg = cfg
        self.upstream = upstream
        self.trace = trace
        self.by_query: dict[tuple, Answer] = {}
        self.by_owner: dict[tuple, list[ResourceRecord]] = {}

    def _from_index(self, qname: RawName, qtype: int) -> list[ResourceRecord] | None:
        out = []
        name = qname
        for _ in range(MAX_CHAIN):
            direct = self.by_owner.get((name.lower(), qtype))
            if direct:
                return out + direct
            cname = self.by_owner.get((name.lower(), int(RType.CNAME)))
            if not cname:
                return None
            out += cname
            name = cname[0].rdata.target
        return None

    def resolve(self, qname: RawName, qtype: int) -> Answer:
        key = (qname.lower(), qtype)
        hit = self.by_query.get(key)
        if hit is not None:
            self.trace.add("forwarder", "cache-hit", _q(qname, qtype))
            return Answer(hit.rcode, list(hit.records), "forwarder-cache")
        if self.cfg.cross_zone_cname_caching:
            found = self._from_index(qname, qtype)
            if found:
                self.trace.add("forwarder", "cross-zone-hit", _q(qname, qtype))
                return Answer(Rcode.NOERROR, found, "forwarder-cache")
        self.trace.add("forwarder", "forward", _q(qname, qtype))
        answer = self.upstream.resolve(qname, qtype)
        self.by_query[key] = Answer(answer.rcode, list(answer.records))
        if self.cfg.cross_zone_cname_caching:
            for rr in answer.records:
                bucket = self.by_owner.setdefault((rr.owner.lower(), rr.rtype), [])
                if rr not in bucket:
                    bucket.append(rr)
                    self.trace.add("forwarder", "cache-store", f"{rr.owner} {RType(rr.rtype).name}")
        return answer


@dataclass
class HostResult:
    """What a stub lookup hands to the application."""

    ok: bool
    canonical: DecodedOutcome | None = None
    aliases: list[DecodedOutcome] = field(default_factory=list)
    addresses: list[str] = field(default_factory=list)
    outcomes: list[DecodedOutcome] = field(default_factory=list)
    source: str = "upstream"


def _cstr_key(text: str) -> str:
    return text.rstrip(".").lower()


def stub_process(records: list[ResourceRecord], qname: RawName, profile: DecoderProfile,
                 reverse: bool = False) -> HostResult:
    """gethostbyname()/gethostbyaddr() over an answer section."""
    outcomes = []
    for rr in records:
        outcomes.append(decode_with_profile(rr.owner, profile, reverse))
        for name in rr.names():
            outcomes.append(decode_with_profile(name, profile, reverse))
    rejected = any(o.verdict is Verdict.REJECTED for o in outcomes)
    subject = subject_name(records) or qname
    canonical = decode_with_profile(subject, profile, reverse)
    if rejected or not records:
        if rejected and canonical.verdict is not Verdict.REJECTED:
            canonical = DecodedOutcome(canonical.presentation, Verdict.REJECTED)
        return HostResult(False, canonical, outcomes=outcomes)
    aliases = [decode_with_profile(rr.owner, profile, reverse) for rr in records if rr.rtype == RType.CNAME]
    want = _cstr_key(canonical.text)
    addresses = [
        str(rr.rdata.address)
        for rr in records
        if rr.rtype == RType.A and _cstr_key(decode_with_profile(rr.owner, profile, reverse).text) == want
    ]
    return HostResult(True, canonical, aliases, addresses, outcomes)


def subject_name(records: list[ResourceRecord]) -> RawName | None:
    """The name a payload's answer ultimately delivers."""
    cnames = [rr for rr in records if rr.rtype == RType.CNAME]
    if cnames:
        return cnames[-1].rdata.target
    for rr in records:
        if rr.rtype in (RType.PTR, RType.SRV, RType.NAPTR, RType.NS):
            return rr.names()[0]
    if records:
        return records[-1].owner
    return None


class AppCache:
    def __init__(self, cfg: AppCacheConfig, trace: Trace):
        self.cfg = cfg
        self.trace = trace
        self.entries: dict[str, list[str]] = {}

    def get(self, text: str):
        return self.entries.get(_cstr_key(text))

    def store(self, query_text: str, result: HostResult):
        if not result.ok or not result.addresses:
            return
        keys = [query_text]
        if self.cfg.keyed_by is AppCacheKey.ALL_NAMES:
            keys += [result.canonical.text] + [a.text for a in result.aliases]
        for k in keys:
            k = _cstr_key(k)
            if k not in self.entries:
                self.entries[k] = list(result.addresses)
                self.trace.add("app-cache", "cache-store", f"{k} -> {','.join(result.addresses)}")


class Chain:
    """One assembled resolution chain with live caches."""

    def __init__(self, cfg: SimChainConfig, zone: ZoneFile, target_domain: RawName | None = None,
                 query_log: QueryLog | None = None, legit_ip: str = LEGIT_IP):
        self.cfg = cfg
        self.zone = zone
        self.trace = Trace()
        self.internet = Internet(zone, target_domain, self.trace, legit_ip, query_log)
        self.recursive = Recursive(cfg, self.internet, self.trace)
        self.forwarder = Forwarder(cfg.forwarder, self.recursive, self.trace) if cfg.forwarder.present else None
        self.app = AppCache(cfg.app_cache, self.trace) if cfg.app_cache.present else None
        self.lock = threading.Lock()

    @property
    def front(self):
        return self.forwarder or self.recursive

    def resolve(self, qname: RawName, qtype: int) -> Answer:
        return self.front.resolve(qname, qtype)

    def stub_lookup(self, qname: RawName, qtype: int = RType.A) -> HostResult:
        self.trace.add("stub", "query", _q(qname, qtype))
        answer = self.resolve(qname, qtype)
        result = stub_process(answer.records, qname, self.cfg.stub_profile, reverse=qtype == RType.PTR)
        result.source = answer.source
        state = "ok" if result.ok else "error"
        self.trace.add("stub", state, result.canonical.text if result.canonical else "")
        return result

    def app_lookup(self, qname: RawName) -> HostResult:
        query_text = naive_text(qname)
        if self.app is not None:
            cached = self.app.get(query_text)
            if cached is not None:
                self.trace.add("app-cache", "cache-hit", f"{_cstr_key(query_text)} -> {','.join(cached)}")
                pres = to_presentation(qname, EscapeStyle.NAIVE)
                return HostResult(True, DecodedOutcome(pres, Verdict.FAITHFUL), addresses=list(cached),
                                  source="app-cache")
        result = self.stub_lookup(qname, RType.A)
        if self.app is not None:
            self.app.store(query_text, result)
        return result

    def handle(self, query: Message) -> Message:
        """Answer a wire query the way the chain's front end would."""
        q = query.question
        if q is None:
            return make_response(query, [], Rcode.FORMERR)
        with self.lock:
            if q.qclass == RClass.CH:
                if q.qtype == RType.TXT and naive_text(q.name.lower()) == "version.bind." and self.cfg.version:
                    data = self.cfg.version.encode("latin-1") if isinstance(self.cfg.version, str) else self.cfg.version
                    rr = ResourceRecord(q.name, RType.TXT, TXT.chunked(data), 0, RClass.CH)
                    return make_response(query, [rr], aa=True)
                return make_response(query, [], Rcode.REFUSED)
            if self.cfg.supported_qtypes is not None and q.qtype not in self.cfg.supported_qtypes:
                return make_response(query, [], Rcode.NOTIMP)
            self.trace.add("client", "query", _q(q.name, q.qtype))
            answer = self.resolve(q.name, q.qtype)
            return make_response(query, answer.records, answer.rcode)


# -------------------------------------------------------------- scenarios


@dataclass
class ScenarioOutcome:
    poisoned: bool
    poisoned_key: tuple[RawName, int] | None
    observed_answer: list[str] | None
    trace: list[TraceEvent]

    @property
    def stage2_attacker_contacts(self) -> int:
        return sum(1 for e in self.trace if e.stage == 2 and e.component == "attacker-ns" and e.action == "query")

    def render(self) -> str:
        lines = [str(e) for e in self.trace]
        key = f"{self.poisoned_key[0]}/{RType(self.poisoned_key[1]).name}" if self.poisoned_key else "-"
        lines.append(f"poisoned={str(self.poisoned).lower()} key={key} answer={self.observed_answer}")
        return "\n".join(lines)


def _prefixed(name: RawName, prefix: bytes | None) -> RawName:
    return name.prepend(prefix) if prefix else name


def run_injection_scenario(cfg: SimChainConfig, zone: ZoneFile, payload_id: str,
                           target_domain: RawName | None = None, prefix: bytes | None = None,
                           require_cache: bool = True) -> ScenarioOutcome:
    """Trigger a payload, then ask for the victim name and see who answers."""
    entry = zone.entry(payload_id)
    if not entry.is_injection or entry.victim is None:
        raise UnknownPayload(f"{payload_id} is not an injection payload")
    if require_cache and not (cfg.forwarder.present or cfg.app_cache.present):
        raise NoCacheInChain("poisoning needs a forwarder or application cache")
    target = target_domain or zone.target_domain
    victim = entry.victim if target is None else target.prepend("www")
    trigger = _prefixed(entry.trigger_qname, prefix)
    victim = _prefixed(victim, prefix)
    inject_ip = zone.inject_ip
    chain = Chain(cfg, zone, target)

    chain.trace.stage = 1
    if entry.id.endswith("_direct"):
        chain.trace.add("client", "query", _q(trigger, RType.A))
        chain.resolve(trigger, RType.A)
    else:
        chain.app_lookup(trigger)

    chain.trace.stage = 2
    result = chain.app_lookup(victim)
    observed = list(result.addresses) if result.ok else None
    poisoned = bool(observed) and inject_ip in observed
    key = None
    if poisoned:
        if result.source == "app-cache":
            key = (RawName(tuple(p.encode("latin-1") for p in result.canonical.text.split(".") if p)), int(RType.A))
        else:
            key = (victim, int(RType.A))
        chain.trace.add(result.source, "poisoned", f"{victim} -> {inject_ip}")
    return ScenarioOutcome(poisoned, key, observed, list(chain.trace.events))


@dataclass(frozen=True)
class StageOutcome:
    component: str
    outcome: DecodedOutcome


def _stage(component: str, original: RawName | None, seen: RawName | None, lowercase: bool) -> StageOutcome:
    if seen is None:
        pres = to_presentation(RawName(()))
        return StageOutcome(component, DecodedOutcome(pres, Verdict.REJECTED))
    pres = to_presentation(seen)
    same = seen.equals_ci(original) if lowercase else seen == original
    if same or original is None:
        return StageOutcome(component, DecodedOutcome(pres, Verdict.FAITHFUL))
    verdict = Verdict.TRUNCATED if original.contains_byte(0) else Verdict.MISINTERPRETED
    return StageOutcome(component, DecodedOutcome(pres, verdict))


def run_forward_lookup(cfg: SimChainConfig, zone: ZoneFile, payload_id: str) -> list[StageOutcome]:
    """What each component hands upward for one lookup of the payload."""
    entry = zone.entry(payload_id)
    chain = Chain(cfg, zone)
    qname, qtype = entry.trigger_qname, entry.trigger_qtype
    original = subject_name(lookup_payload(zone, qname, qtype))
    stages = [_stage("authoritative", original, original, False)]
    answer = chain.recursive.resolve(qname, qtype)
    seen = subject_name(answer.records)
    stages.append(_stage("recursive", original, seen, cfg.lowercase))
    if chain.forwarder is not None:
        answer = chain.forwarder.resolve(qname, qtype)
        stages.append(_stage("forwarder", original, subject_name(answer.records), cfg.lowercase))
    result = stub_process(answer.records, qname, cfg.stub_profile, reverse=qtype == RType.PTR)
    stages.append(StageOutcome("stub", result.canonical))
    return stages


# ------------------------------------------------------------ loopback


class _UDPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        reply = self.server.owner.respond(data, udp=True)
        if reply is not None:
            sock.sendto(reply, self.client_address)


class _TCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        try:
            data = recv_tcp_message(self.request)
        except (DNSError, OSError):
            return
        reply = self.server.owner.respond(data, udp=False)
        if reply is not None:
            self.request.sendall(frame_tcp(reply))


class _UDPServer(socketserver.ThreadingUDPServer):
    daemon_threads = True
    allow_reuse_address = True


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class LoopbackResolver:
    """Expose a chain's front end on a local UDP and TCP port."""

    def __init__(self, chain: Chain, host: str = "127.0.0.1", port: int = 0, udp_limit: int = 512):
        self.chain = chain
        self.udp_limit = udp_limit
        self.udp = _UDPServer((host, port), _UDPHandler)
        self.udp.owner = self
        self.tcp = _TCPServer((host, self.udp.server_address[1]), _TCPHandler)
        self.tcp.owner = self
        self._threads = []

    @property
    def address(self) -> tuple[str, int]:
        return self.udp.server_address[:2]

    def respond(self, data: bytes, udp: bool) -> bytes | None:
        try:
            query = decode_message(data)
        except DNSError:
            return None
        reply = encode_message(self.chain.handle(query))
        if udp and len(reply) > self.udp_limit:
            resp = decode_message(reply)
            resp.tc = True
            resp.answers, resp.authority, resp.additional = [], [], []
            reply = encode_message(resp)
        return reply

    def start(self) -> "LoopbackResolver":
        for server in (self.udp, self.tcp):
            t = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self):
        for server in (self.udp, self.tcp):
            server.shutdown()
            server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def with_stub(cfg: SimChainConfig, profile: DecoderProfile) -> SimChainConfig:
    return replace(cfg, stub_profile=profile)


def parse_ip(text: str) -> str:
    return str(ipaddress.IPv4Address(text))
