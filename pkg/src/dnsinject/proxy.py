"""Sanitizing DNS forwarder.

Every upstream response is checked name by name. Owner and rdata names must
be hostnames, except that owners of SRV/NAPTR/TXT records may carry
allowlisted service labels such as ``_ldap``. TXT rdata is free-form and is
never name-checked.

Filtering names is a deliberate departure from transparent DNS handling.
``EscapeAndPass`` exists for audit-only deployments that want the reports
without touching traffic.
"""

from __future__ import annotations

import enum
import fnmatch
import json
import logging
import socket
import socketserver
import threading
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError, DNSError
from .validation import is_ldh_label
from .wire import (
    SOA,
    TXT,
    Message,
    RawName,
    RClass,
    Rcode,
    ResourceRecord,
    RType,
    decode_message,
    encode_message,
    escape_label,
    frame_tcp,
    make_response,
    recv_tcp_message,
    to_presentation,
)

log = logging.getLogger(__name__)

STATS_NAME = RawName.of("stats", "proxy")
ALLOWLIST_TYPES = (RType.SRV, RType.NAPTR, RType.TXT)


class Action(enum.Enum):
    DROP = "Drop"
    REFUSE = "Refuse"
    STRIP_RECORD = "StripRecord"
    ESCAPE_AND_PASS = "EscapeAndPass"


class ViolationKind(enum.Enum):
    DOT_CONFUSION = "DotConfusion"
    ZERO_TRUNCATION = "ZeroTruncation"
    NON_HOSTNAME_CHAR = "NonHostnameChar"


@dataclass(frozen=True)
class ProxyPolicy:
    action: Action = Action.REFUSE
    additional_action: Action = Action.STRIP_RECORD
    owner_allowlist: tuple = ("_*",)
    validate_rdata_names: bool = True
    validate_owner_names: bool = True

    @classmethod
    def from_json(cls, data: dict) -> "ProxyPolicy":
        known = {"action", "action_on_violation", "additional_action", "owner_allowlist",
                 "validate_rdata_names", "validate_owner_names"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown policy keys: {sorted(extra)}")
        try:
            return cls(
                Action(data.get("action_on_violation", data.get("action", "Refuse"))),
                Action(data.get("additional_action", "StripRecord")),
                tuple(data.get("owner_allowlist", ["_*"])),
                bool(data.get("validate_rdata_names", True)),
                bool(data.get("validate_owner_names", True)),
            )
        except ValueError as exc:
            raise ConfigError(f"bad policy: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "action_on_violation": self.action.value,
            "additional_action": self.additional_action.value,
            "owner_allowlist": list(self.owner_allowlist),
            "validate_rdata_names": self.validate_rdata_names,
            "validate_owner_names": self.validate_owner_names,
        }


DEFAULT_POLICY = ProxyPolicy()


@dataclass(frozen=True)
class Violation:
    section: str
    owner: str
    rtype: int
    where: str
    name: str
    kinds: tuple

    def __str__(self):
        kinds = ",".join(k.value for k in self.kinds)
        return f"{self.section} {self.owner} {RType(self.rtype).name} {self.where}={self.name} [{kinds}]"


@dataclass(frozen=True)
class Refusal:
    """Drop: the proxy sends nothing upstream's answer would have carried."""

    query_id: int
    violations: tuple


def label_kinds(label: bytes) -> set:
    kinds = set()
    if b"." in label:
        kinds.add(ViolationKind.DOT_CONFUSION)
    if b"\x00" in label:
        kinds.add(ViolationKind.ZERO_TRUNCATION)
    # whatever is left once dots and zeros are accounted for
    if not is_ldh_label(label.replace(b".", b"a").replace(b"\x00", b"a")):
        kinds.add(ViolationKind.NON_HOSTNAME_CHAR)
    return kinds


def name_violations(name: RawName, allowlist=()) -> tuple:
    kinds: set = set()
    for label in name.labels:
        if is_ldh_label(label):
            continue
        if allowlist and any(fnmatch.fnmatchcase(escape_label(label), pat) for pat in allowlist):
            continue
        kinds |= label_kinds(label)
    return tuple(sorted(kinds, key=lambda k: k.value))


def _rdata_names(rr: ResourceRecord) -> list:
    if isinstance(rr.rdata, TXT):
        return []
    if isinstance(rr.rdata, SOA):
        # the mailbox's local part is not a hostname
        return [rr.rdata.mname]
    return rr.names()


def record_violations(rr: ResourceRecord, section: str, policy: ProxyPolicy) -> list[Violation]:
    out = []
    owner_text = to_presentation(rr.owner).text
    if policy.validate_owner_names:
        allow = policy.owner_allowlist if rr.rtype in ALLOWLIST_TYPES else ()
        kinds = name_violations(rr.owner, allow)
        if kinds:
            out.append(Violation(section, owner_text, int(rr.rtype), "owner", owner_text, kinds))
    if policy.validate_rdata_names:
        for name in _rdata_names(rr):
            kinds = name_violations(name)
            if kinds:
                out.append(Violation(section, owner_text, int(rr.rtype), "rdata", to_presentation(name).text, kinds))
    return out


def _connected(records: list[ResourceRecord], seeds: set[int]) -> set[int]:
    """Indices reachable from seeds through owner/target links in either direction."""
    marked = set(seeds)
    changed = True
    while changed:
        changed = False
        names = set()
        for i in marked:
            names.add(records[i].owner.lower())
            names.update(n.lower() for n in records[i].names())
        for i, rr in enumerate(records):
            if i in marked:
                continue
            linked = rr.owner.lower() in names or (
                rr.rtype == RType.CNAME and rr.rdata.target.lower() in names
            )
            if linked:
                marked.add(i)
                changed = True
    return marked


def sanitize_response(msg: Message, policy: ProxyPolicy = DEFAULT_POLICY):
    """Returns (Message or Refusal, violations). Never raises on bad names."""
    per_section = {}
    violations: list[Violation] = []
    for section in ("answers", "authority", "additional"):
        records = getattr(msg, section)
        bad = {}
        for i, rr in enumerate(records):
            v = record_violations(rr, section, policy)
            if v:
                bad[i] = v
                violations.extend(v)
        per_section[section] = bad
    if not violations:
        return msg, []

    answer_action = policy.action
    if per_section["answers"]:
        if answer_action is Action.DROP:
            return Refusal(msg.id, tuple(violations)), violations
        if answer_action is Action.REFUSE:
            return _refused(msg), violations
    out = None
    for section, bad in per_section.items():
        if not bad:
            continue
        action = answer_action if section == "answers" else policy.additional_action
        records = getattr(msg, section)
        if action is Action.ESCAPE_AND_PASS:
            continue
        if action is Action.DROP:
            return Refusal(msg.id, tuple(violations)), violations
        if action is Action.REFUSE:
            return _refused(msg), violations
        drop = _connected(records, set(bad)) if section == "answers" else set(bad)
        if out is None:
            out = Message(**{k: getattr(msg, k) for k in msg.__dataclass_fields__})
        setattr(out, section, [rr for i, rr in enumerate(records) if i not in drop])
    # nothing removed under EscapeAndPass: hand back the original
    return (msg if out is None else out), violations


def _refused(msg: Message) -> Message:
    return Message(
        id=msg.id, qr=True, opcode=msg.opcode, aa=False, tc=False, rd=msg.rd, ra=msg.ra,
        rcode=Rcode.REFUSED, questions=list(msg.questions),
    )


def response_is_clean(msg: Message | None, policy: ProxyPolicy = DEFAULT_POLICY) -> bool:
    """Soundness check used by tests and the stats endpoint."""
    if msg is None or isinstance(msg, Refusal):
        return True
    check = ProxyPolicy(Action.REFUSE, Action.REFUSE, policy.owner_allowlist, True, True)
    return all(not record_violations(rr, "x", check) for sec in msg.sections() for rr in sec)


class ProxyStats:
    def __init__(self):
        self._lock = threading.Lock()
        self.actions: Counter = Counter()
        self.violations: Counter = Counter()
        self.queries = 0
        self.upstream_failures = 0

    def record(self, action: str, violations=()):
        with self._lock:
            self.actions[action] += 1
            for v in violations:
                for k in v.kinds:
                    self.violations[k.value] += 1

    def count_query(self):
        with self._lock:
            self.queries += 1

    def count_failure(self):
        with self._lock:
            self.upstream_failures += 1
            self.actions["ServFail"] += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "queries": self.queries,
                "upstream_failures": self.upstream_failures,
                "actions": dict(sorted(self.actions.items())),
                "violations": dict(sorted(self.violations.items())),
            }


class UpstreamTimeout(DNSError):
    pass


class SanitizingProxy:
    """UDP and TCP listener that forwards to one upstream and filters replies."""

    def __init__(self, listen: tuple[str, int], upstream: tuple[str, int],
                 policy: ProxyPolicy = DEFAULT_POLICY, timeout: float = 2.0, udp_limit: int = 512):
        self.upstream = upstream
        self.policy = policy
        self.timeout = timeout
        self.udp_limit = udp_limit
        self.stats = ProxyStats()
        self.udp = _UDPServer(listen, _UDPHandler)
        self.udp.owner = self
        self.tcp = _TCPServer((listen[0], self.udp.server_address[1]), _TCPHandler)
        self.tcp.owner = self
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self.udp.server_address[:2]

    def _ask_upstream(self, data: bytes) -> bytes:
        family = socket.AF_INET6 if ":" in self.upstream[0] else socket.AF_INET
        try:
            with socket.socket(family, socket.SOCK_DGRAM) as sock:
                sock.settimeout(self.timeout)
                sock.sendto(data, self.upstream)
                reply, _ = sock.recvfrom(65535)
            if len(reply) > 2 and reply[2] & 0x02:
                with socket.create_connection(self.upstream, timeout=self.timeout) as sock:
                    sock.sendall(frame_tcp(data))
                    reply = recv_tcp_message(sock)
            return reply
        except (OSError, DNSError) as exc:
            raise UpstreamTimeout(str(exc)) from exc

    def _stats_reply(self, query: Message) -> Message:
        blob = json.dumps(self.stats.snapshot(), sort_keys=True).encode()
        rr = ResourceRecord(query.question.name, RType.TXT, TXT.chunked(blob), 0, RClass.CH)
        return make_response(query, [rr], aa=True)

    def respond(self, data: bytes, udp: bool) -> bytes | None:
        try:
            query = decode_message(data)
        except DNSError:
            return None
        q = query.question
        if q is not None and q.qclass == RClass.CH and q.name.equals_ci(STATS_NAME):
            return encode_message(self._stats_reply(query))
        self.stats.count_query()
        try:
            upstream = decode_message(self._ask_upstream(data))
        except DNSError:
            self.stats.count_failure()
            return encode_message(make_response(query, [], Rcode.SERVFAIL))
        result, violations = sanitize_response(upstream, self.policy)
        if isinstance(result, Refusal):
            self.stats.record(Action.DROP.value, violations)
            result = _refused(upstream)
        elif not violations:
            self.stats.record("Pass")
        elif result.rcode == Rcode.REFUSED and upstream.rcode != Rcode.REFUSED:
            self.stats.record(Action.REFUSE.value, violations)
        elif result is upstream:
            self.stats.record(Action.ESCAPE_AND_PASS.value, violations)
        else:
            self.stats.record(Action.STRIP_RECORD.value, violations)
        for v in violations:
            log.info("violation %s", v)
        reply = encode_message(result, compress=True)
        if udp and len(reply) > self.udp_limit:
            result = Message(id=result.id, qr=True, tc=True, rd=result.rd, ra=result.ra,
                             rcode=result.rcode, questions=list(result.questions))
            reply = encode_message(result)
        return reply

    def start(self) -> "SanitizingProxy":
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


def serve(listen: tuple[str, int], upstream: tuple[str, int], policy: ProxyPolicy = DEFAULT_POLICY,
          timeout: float = 2.0) -> SanitizingProxy:
    """Start a proxy in background threads and return it; call ``stop()`` to end."""
    return SanitizingProxy(listen, upstream, policy, timeout).start()
