"""Loopback resolver fleet and the verdicts the simulator says it should earn."""

import contextlib

from dnsinject.payloads import lookup_payload
from dnsinject.sim import (
    PRESETS,
    Chain,
    ForwarderConfig,
    LoopbackResolver,
    RecursiveProfile,
    SimChainConfig,
    run_injection_scenario,
)
from dnsinject.validation import ESCAPE_ONLY, UCLIBC
from dnsinject.wire import RType

FLEET = [
    SimChainConfig(name="plain"),
    PRESETS["verisign+dnsmasq"],
    PRESETS["verisign"],
    PRESETS["dnsmasq"],
    SimChainConfig(lowercase=True, name="lowercasing", stub_profile=UCLIBC),
    SimChainConfig(supported_qtypes=frozenset({1, 5}), name="a-only", version="TestDNS 1.0"),
    SimChainConfig(RecursiveProfile.DECODE_REENCODE, ForwarderConfig(True, False), ESCAPE_ONLY, name="fwd-nocross"),
]

BASE_TYPES = {RType.A, RType.CNAME, RType.SRV, RType.TXT}


@contextlib.contextmanager
def running_fleet(zone, configs=FLEET, query_log=None):
    servers = [LoopbackResolver(Chain(c, zone, query_log=query_log)).start() for c in configs]
    try:
        yield servers
    finally:
        for s in servers:
            s.stop()


def _supported(cfg, qtypes):
    return cfg.supported_qtypes is None or all(int(q) in cfg.supported_qtypes for q in qtypes)


def expected_verdict(cfg, zone, payload_id) -> str:
    entry = zone.entry(payload_id)
    decodes = cfg.recursive_profile is RecursiveProfile.DECODE_REENCODE
    if entry.is_injection:
        if not _supported(cfg, BASE_TYPES):
            return "Unsupported"
        if run_injection_scenario(cfg, zone, payload_id, require_cache=False).poisoned:
            return "CacheInjected"
        return "Misinterpreted" if decodes else "Transparent"
    if not _supported(cfg, {entry.trigger_qtype}):
        return "Unsupported"
    names = []
    for rr in lookup_payload(zone, entry.trigger_qname, entry.trigger_qtype):
        names += [rr.owner, *rr.names()]
    damaged = any(b"." in l or b"\x00" in l for n in names for l in n.labels)
    return "Modified" if decodes and damaged else "Transparent"
