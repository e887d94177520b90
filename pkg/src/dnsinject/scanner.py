"""Probe resolvers for payload handling and cache injection.

A campaign first checks that a resolver answers the four baseline record
types correctly, then sends each catalog payload under a fresh random
prefix. Injection payloads run in two stages: trigger the payload, then ask
for the name a misinterpreting resolver would have cached.
"""

from __future__ import annotations

import base64
import csv
import enum
import hashlib
import io
import ipaddress
import json
import logging
import random
import socket
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import DNSError, EmptyCampaign
from .payloads import PayloadEntry, ZoneFile, lookup_payload
from .sim import QueryLog, subject_name
from .wire import (
    TXT,
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
    map_names,
    recv_tcp_message,
)

log = logging.getLogger(__name__)

BASELINES = {
    "base_a": RType.A,
    "base": RType.A,
    "base_srv": RType.SRV,
    "base_txt": RType.TXT,
}
PREFIX_LEN = 13


class Verdict(enum.Enum):
    TRANSPARENT = "Transparent"
    MODIFIED = "Modified"
    MISINTERPRETED = "Misinterpreted"
    CACHE_INJECTED = "CacheInjected"
    NO_RESPONSE = "NoResponse"
    UNSUPPORTED = "Unsupported"


EXCLUDED = (Verdict.NO_RESPONSE, Verdict.UNSUPPORTED)


class QueryTimeout(DNSError):
    pass


class Aborted(DNSError):
    pass


@dataclass(frozen=True)
class Address:
    host: str
    port: int = 53

    @classmethod
    def parse(cls, text: str, default_port: int = 53) -> "Address":
        text = text.strip()
        if text.startswith("["):
            host, _, rest = text[1:].partition("]")
            port = int(rest[1:]) if rest.startswith(":") else default_port
        elif text.count(":") == 1:
            host, port_s = text.split(":")
            port = int(port_s)
        else:
            host, port = text, default_port
        ipaddress.ip_address(host)
        return cls(host, port)

    def __str__(self):
        return f"[{self.host}]:{self.port}" if ":" in self.host else f"{self.host}:{self.port}"


@dataclass
class ProbeTarget:
    address: Address
    transport: str = "udp"
    baseline_ok: dict = field(default_factory=dict)
    responsive: bool = False
    version: str | None = None

    def supports(self, entry: PayloadEntry) -> bool:
        if entry.is_injection:
            return all(self.baseline_ok.get(b, False) for b in BASELINES)
        if entry.trigger_qtype == RType.SRV:
            return self.baseline_ok.get("base_srv", False)
        if entry.trigger_qtype == RType.TXT:
            return self.baseline_ok.get("base_txt", False)
        return self.baseline_ok.get("base_a", False) and self.baseline_ok.get("base", False)


@dataclass
class ProbeResult:
    target: str
    payload_id: str
    verdict: Verdict
    stage1_answer: str | None = None
    stage2_answer: str | None = None
    correlation_prefix: str = ""
    backend_ips: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "payload_id": self.payload_id,
            "verdict": self.verdict.value,
            "stage1_answer": self.stage1_answer,
            "stage2_answer": self.stage2_answer,
            "correlation_prefix": self.correlation_prefix,
            "backend_ips": list(self.backend_ips),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProbeResult":
        return cls(
            data["target"],
            data["payload_id"],
            Verdict(data["verdict"]),
            data.get("stage1_answer"),
            data.get("stage2_answer"),
            data.get("correlation_prefix", ""),
            list(data.get("backend_ips", [])),
        )


@dataclass
class ScanConfig:
    zone: ZoneFile
    stage2_domain: RawName | None = None
    seed: int = 0
    timeout: float = 3.0
    retries: int = 2
    qps: float = 100.0
    per_target_in_flight: int = 2
    workers: int = 16
    payload_ids: list | None = None
    query_log: QueryLog | None = None

    @property
    def victim(self) -> RawName:
        target = self.stage2_domain or self.zone.target_domain
        if target is None:
            raise DNSError("no stage-2 domain configured")
        return target.prepend("www")


def correlation_prefix(seed: int, target: str, payload_id: str, stage: str, attempt: int) -> str:
    """13 base32 characters (65 bits) derived from the campaign seed."""
    digest = hashlib.sha256(f"{seed}|{target}|{payload_id}|{stage}|{attempt}".encode()).digest()
    return base64.b32encode(digest).decode("ascii")[:PREFIX_LEN].lower()


class TokenBucket:
    """Global queries-per-second cap shared by all workers."""

    def __init__(self, rate: float, burst: float | None = None, clock=time.monotonic):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = burst if burst is not None else max(1.0, rate / 10)
        self.tokens = self.capacity
        self.clock = clock
        self.last = clock()
        self.lock = threading.Lock()
        self.stamps: list[float] = []

    def acquire(self, abort: threading.Event | None = None):
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    self.stamps.append(now)
                    return
                wait = (1 - self.tokens) / self.rate
            if abort is not None and abort.wait(wait):
                raise Aborted("campaign aborted")
            elif abort is None:
                time.sleep(wait)


def _records_key(records: list[ResourceRecord]) -> list:
    out = []
    for rr in records:
        low = map_names(rr, RawName.lower)
        out.append((low.owner, int(low.rtype), low.rdata))
    return sorted(out, key=repr)


def txt_text(data: bytes) -> str:
    """Presentation form of a character-string."""
    out = []
    for b in data:
        if b in (0x22, 0x5C):
            out.append("\\" + chr(b))
        elif 0x20 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append(f"\\{b:03d}")
    return "".join(out)


class Scanner:
    def __init__(self, config: ScanConfig, abort: threading.Event | None = None):
        self.config = config
        self.zone = config.zone
        self.abort = abort or threading.Event()
        self.bucket = TokenBucket(config.qps)
        self._rng = random.Random(config.seed)
        self._rng_lock = threading.Lock()
        self._slots: dict[Address, threading.BoundedSemaphore] = {}
        self._slots_lock = threading.Lock()
        self.max_in_flight: dict[Address, int] = Counter()
        self._in_flight: dict[Address, int] = Counter()

    # ---------------------------------------------------------- transport

    def _slot(self, addr: Address) -> threading.BoundedSemaphore:
        with self._slots_lock:
            if addr not in self._slots:
                self._slots[addr] = threading.BoundedSemaphore(self.config.per_target_in_flight)
            return self._slots[addr]

    def _ident(self) -> int:
        with self._rng_lock:
            return self._rng.randrange(65536)

    def query(self, addr: Address, name: RawName, qtype: int, qclass: int = RClass.IN) -> Message:
        """One query, UDP first and TCP if the answer came back truncated."""
        if self.abort.is_set():
            raise Aborted("campaign aborted")
        slot = self._slot(addr)
        slot.acquire()
        with self._slots_lock:
            self._in_flight[addr] += 1
            self.max_in_flight[addr] = max(self.max_in_flight[addr], self._in_flight[addr])
        try:
            self.bucket.acquire(self.abort)
            ident = self._ident()
            wire = encode_message(make_query(name, qtype, ident, qclass))
            resp = self._udp(addr, wire, ident)
            if resp.tc:
                self.bucket.acquire(self.abort)
                resp = self._tcp(addr, wire, ident)
            return resp
        finally:
            with self._slots_lock:
                self._in_flight[addr] -= 1
            slot.release()

    def _family(self, addr: Address):
        return socket.AF_INET6 if ":" in addr.host else socket.AF_INET

    def _udp(self, addr: Address, wire: bytes, ident: int) -> Message:
        deadline = time.monotonic() + self.config.timeout
        with socket.socket(self._family(addr), socket.SOCK_DGRAM) as sock:
            sock.sendto(wire, (addr.host, addr.port))
            while True:
                left = deadline - time.monotonic()
                if left <= 0:
                    raise QueryTimeout(str(addr))
                if self.abort.is_set():
                    raise Aborted("campaign aborted")
                sock.settimeout(min(left, 0.1))
                try:
                    data, _ = sock.recvfrom(65535)
                except socket.timeout:
                    continue
                except OSError as exc:
                    # ICMP port unreachable surfaces here on some platforms
                    raise QueryTimeout(str(exc)) from exc
                try:
                    msg = decode_message(data)
                except DNSError:
                    continue
                if msg.id == ident and msg.qr:
                    return msg

    def _tcp(self, addr: Address, wire: bytes, ident: int) -> Message:
        try:
            with socket.create_connection((addr.host, addr.port), timeout=self.config.timeout) as sock:
                sock.sendall(frame_tcp(wire))
                msg = decode_message(recv_tcp_message(sock))
        except (OSError, socket.timeout) as exc:
            raise QueryTimeout(str(exc)) from exc
        if msg.id != ident:
            raise QueryTimeout("mismatched TCP response id")
        return msg

    # ------------------------------------------------------------- probes

    def _prefix(self, addr: Address, pid: str, stage: str, attempt: int) -> str:
        return correlation_prefix(self.config.seed, str(addr), pid, stage, attempt)

    def _attempts(self, addr: Address, pid: str, fn):
        """Run fn(prefix) with a fresh prefix on each retry. Returns (result, prefix)."""
        prefix = ""
        for attempt in range(self.config.retries + 1):
            prefix = self._prefix(addr, pid, "probe", attempt)
            try:
                return fn(prefix.encode("ascii")), prefix
            except QueryTimeout:
                log.debug("timeout %s %s attempt %d", addr, pid, attempt)
        return None, prefix

    def _expected(self, entry: PayloadEntry, prefix: bytes, qtype: int | None = None) -> list[ResourceRecord]:
        return lookup_payload(self.zone, entry.trigger_qname.prepend(prefix), qtype or entry.trigger_qtype)

    def probe_baseline(self, addr: Address | str) -> ProbeTarget:
        if isinstance(addr, str):
            addr = Address.parse(addr)
        target = ProbeTarget(addr)
        for pid, qtype in BASELINES.items():
            entry = self.zone.entry(pid)

            def ask(prefix, entry=entry, qtype=qtype):
                resp = self.query(addr, entry.trigger_qname.prepend(prefix), qtype)
                want = self._expected(entry, prefix, qtype)
                return resp.rcode == Rcode.NOERROR and _records_key(resp.answers) == _records_key(want)

            ok, _ = self._attempts(addr, pid, ask)
            target.responsive |= ok is not None
            target.baseline_ok[pid] = bool(ok)
        return target

    def _backend(self, prefix: str) -> list[str]:
        qlog = self.config.query_log
        if qlog is None:
            return []
        return sorted({line.split(" ")[4] for line in qlog.by_prefix().get(prefix, [])})

    def probe_payload(self, target: ProbeTarget, payload_id: str) -> ProbeResult:
        entry = self.zone.entry(payload_id)
        addr = target.address
        if not target.responsive:
            return ProbeResult(str(addr), payload_id, Verdict.NO_RESPONSE)
        if not target.supports(entry):
            return ProbeResult(str(addr), payload_id, Verdict.UNSUPPORTED)
        if entry.is_injection:
            return self._probe_injection(target, entry)

        def ask(prefix):
            resp = self.query(addr, entry.trigger_qname.prepend(prefix), entry.trigger_qtype)
            return resp, self._expected(entry, prefix)

        got, prefix = self._attempts(addr, payload_id, ask)
        if got is None:
            return ProbeResult(str(addr), payload_id, Verdict.NO_RESPONSE, correlation_prefix=prefix)
        resp, want = got
        seen = subject_name(resp.answers)
        if resp.rcode == Rcode.NOTIMP:
            verdict = Verdict.UNSUPPORTED
        elif resp.rcode == Rcode.NOERROR and _records_key(resp.answers) == _records_key(want):
            verdict = Verdict.TRANSPARENT
        else:
            verdict = Verdict.MODIFIED
        return ProbeResult(str(addr), payload_id, verdict, str(seen) if seen else None,
                           correlation_prefix=prefix, backend_ips=self._backend(prefix))

    def _probe_injection(self, target: ProbeTarget, entry: PayloadEntry) -> ProbeResult:
        addr = target.address
        inject_ip = self.zone.inject_ip

        def run(prefix):
            trigger = entry.trigger_qname.prepend(prefix)
            want = subject_name(self._expected(entry, prefix))
            first = self.query(addr, trigger, RType.A)
            second = self.query(addr, trigger, RType.A)
            seen = subject_name(second.answers) or subject_name(first.answers)
            misread = seen is not None and want is not None and not seen.equals_ci(want)
            stage2 = self.query(addr, self.config.victim.prepend(prefix), RType.A)
            addresses = [str(rr.rdata.address) for rr in stage2.answers if rr.rtype == RType.A]
            return seen, misread, addresses

        got, prefix = self._attempts(addr, entry.id, run)
        if got is None:
            return ProbeResult(str(addr), entry.id, Verdict.NO_RESPONSE, correlation_prefix=prefix)
        seen, misread, addresses = got
        if inject_ip in addresses:
            verdict = Verdict.CACHE_INJECTED
        elif misread:
            verdict = Verdict.MISINTERPRETED
        else:
            verdict = Verdict.TRANSPARENT
        return ProbeResult(
            str(addr), entry.id, verdict, str(seen) if seen else None, ",".join(addresses) or None,
            prefix, self._backend(prefix),
        )

    def fingerprint(self, addr: Address | str) -> str | None:
        if isinstance(addr, str):
            addr = Address.parse(addr)
        try:
            resp = self.query(addr, RawName.of("version", "bind"), RType.TXT, RClass.CH)
        except (QueryTimeout, Aborted):
            return None
        if resp.rcode != Rcode.NOERROR:
            return None
        for rr in resp.answers:
            if isinstance(rr.rdata, TXT):
                return " ".join(txt_text(s) for s in rr.rdata.strings)
        return None

    def payload_ids(self) -> list[str]:
        if self.config.payload_ids is not None:
            return list(self.config.payload_ids)
        return [
            e.id
            for e in self.zone.entries
            if not e.baseline and not e.emit_only and e.trigger_qtype != RType.PTR
        ]

    def scan_target(self, addr: Address) -> tuple[ProbeTarget, list[ProbeResult]]:
        target = self.probe_baseline(addr)
        target.version = self.fingerprint(addr) if target.responsive else None
        return target, [self.probe_payload(target, pid) for pid in self.payload_ids()]


@dataclass
class CampaignResult:
    targets: list[ProbeTarget]
    results: list[ProbeResult]
    aborted: bool = False

    @property
    def partial(self) -> bool:
        return self.aborted or any(not t.responsive for t in self.targets)


def run_campaign(config: ScanConfig, addresses, abort: threading.Event | None = None) -> CampaignResult:
    addrs = [a if isinstance(a, Address) else Address.parse(a) for a in addresses]
    if not addrs:
        raise EmptyCampaign("no targets")
    scanner = Scanner(config, abort)
    targets, results = [], []
    lock = threading.Lock()
    aborted = False

    def work(addr):
        nonlocal aborted
        try:
            target, res = scanner.scan_target(addr)
        except Aborted:
            with lock:
                aborted = True
            return
        with lock:
            targets.append(target)
            results.extend(res)

    with ThreadPoolExecutor(max_workers=max(1, min(config.workers, len(addrs)))) as pool:
        list(pool.map(work, addrs))
    order = {str(a): i for i, a in enumerate(addrs)}
    targets.sort(key=lambda t: order[str(t.address)])
    results.sort(key=lambda r: order[r.target])
    campaign = CampaignResult(targets, results, aborted or scanner.abort.is_set())
    campaign.scanner = scanner
    return campaign


# ------------------------------------------------------------- aggregation


@dataclass
class PayloadStat:
    payload_id: str
    tested: int
    positive: int
    verdicts: Counter

    @property
    def percent(self) -> float:
        return 100.0 * self.positive / self.tested if self.tested else 0.0


@dataclass
class Report:
    per_payload: dict
    any_injection: PayloadStat
    matrix: dict
    fingerprints: Counter
    as_counts: Counter = field(default_factory=Counter)

    def to_json(self) -> dict:
        return {
            "per_payload": {
                pid: {
                    "tested": s.tested,
                    "positive": s.positive,
                    "percent": round(s.percent, 4),
                    "verdicts": dict(sorted(s.verdicts.items())),
                }
                for pid, s in self.per_payload.items()
            },
            "any_injection": {
                "tested": self.any_injection.tested,
                "positive": self.any_injection.positive,
                "percent": round(self.any_injection.percent, 4),
            },
            "matrix": self.matrix,
            "fingerprints": dict(sorted(self.fingerprints.items())),
            "as_counts": dict(sorted(self.as_counts.items())),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["payload_id", "tested", "positive", "percent"])
        for pid, s in self.per_payload.items():
            w.writerow([pid, s.tested, s.positive, f"{s.percent:.2f}"])
        a = self.any_injection
        w.writerow(["any_injection", a.tested, a.positive, f"{a.percent:.2f}"])
        return buf.getvalue()


def _positive(entry_is_injection: bool, verdict: Verdict) -> bool:
    if entry_is_injection:
        return verdict is Verdict.CACHE_INJECTED
    return verdict is Verdict.TRANSPARENT


def aggregate_report(results, zone: ZoneFile | None = None, versions: dict | None = None,
                     as_table: dict | None = None) -> Report:
    """Per-payload rates over the targets that could be tested for it.

    A payload counts as an injection payload if the zone says so, or (without
    a zone) if its id starts with ``inject``.
    """
    results = list(results)
    if not results:
        raise EmptyCampaign("no results to aggregate")

    def injection(pid):
        if zone is not None:
            return zone.entry(pid).is_injection
        return pid.startswith("inject")

    per: dict[str, PayloadStat] = {}
    matrix: dict[str, dict[str, str]] = {}
    hits: dict[str, bool] = {}
    for r in results:
        stat = per.setdefault(r.payload_id, PayloadStat(r.payload_id, 0, 0, Counter()))
        stat.verdicts[r.verdict.value] += 1
        matrix.setdefault(r.target, {})[r.payload_id] = r.verdict.value
        if r.verdict in EXCLUDED:
            continue
        stat.tested += 1
        pos = _positive(injection(r.payload_id), r.verdict)
        stat.positive += pos
        if injection(r.payload_id):
            hits[r.target] = hits.get(r.target, False) or pos
    any_inj = PayloadStat("any_injection", len(hits), sum(hits.values()), Counter())
    fps = Counter(v or "unknown" for v in (versions or {}).values())
    as_counts = Counter()
    if as_table:
        for target, vuln in hits.items():
            if vuln:
                host = Address.parse(target).host
                as_counts[str(as_table.get(host, "unknown"))] += 1
    return Report(per, any_inj, matrix, fps, as_counts)


def write_outputs(campaign: CampaignResult, report: Report, out_dir, atomic_write,
                  versions: dict | None = None, as_table: dict | None = None) -> None:
    """results.jsonl, report.csv, report.json and targets.json under out_dir.

    targets.json keeps the per-target side data (version string, AS number)
    so that a later ``report`` run reproduces report.json exactly.
    """
    targets = {}
    for t in sorted({r.target for r in campaign.results}):
        entry = {}
        if versions and t in versions:
            entry["version"] = versions[t]
        if as_table:
            entry["asn"] = as_table.get(Address.parse(t).host)
        targets[t] = entry
    atomic_write(f"{out_dir}/targets.json", json.dumps(targets, indent=2, sort_keys=True) + "\n")
    lines = "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in campaign.results)
    atomic_write(f"{out_dir}/results.jsonl", lines)
    atomic_write(f"{out_dir}/report.csv", report.to_csv())
    atomic_write(f"{out_dir}/report.json", json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
