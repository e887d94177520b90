import itertools
import json
import socket

import pytest

from dnsinject.errors import ConfigError, NoCacheInChain, UnknownPayload
from dnsinject.sim import (
    PRESETS,
    AppCacheConfig,
    AppCacheKey,
    Chain,
    ForwarderConfig,
    LoopbackResolver,
    QueryLog,
    RecursiveProfile,
    SimChainConfig,
    load_chain,
    reencode,
    run_forward_lookup,
    run_injection_scenario,
    sim_answer,
)
from dnsinject.validation import GLIBC, MUSL, PROFILES, UCLIBC, Verdict
from dnsinject.wire import (
    RawName,
    RClass,
    Rcode,
    RType,
    decode_message,
    encode_message,
    frame_tcp,
    make_query,
    recv_tcp_message,
)

INJECTIONS = ["injectdot_cname", "injectdot_direct", "injectzero_cname", "injectzero_direct"]
WWW = RawName.of("www", "target", "com")


def test_sim_answer(zone):
    resp = sim_answer(zone, make_query(RawName.of("injectzero", "attacker", "com"), RType.CNAME))
    assert resp.aa and [rr.rtype for rr in resp.answers] == [RType.CNAME, RType.A]
    resp = sim_answer(zone, make_query(RawName.of("works", "cnameslash", "attacker", "com"), RType.A))
    assert resp.rcode == Rcode.NOERROR and resp.answers
    resp = sim_answer(zone, make_query(RawName.of("nothing", "attacker", "com"), RType.A))
    assert resp.rcode == Rcode.NXDOMAIN and not resp.answers


def test_reencode():
    assert reencode(RawName.of("www.target", "com")) == WWW
    assert reencode(RawName.of("www", "target", b"com\x00", "attacker", "com")) == WWW


@pytest.mark.parametrize("decode,cross", list(itertools.product([False, True], repeat=2)))
def test_cross_zone_gate(zone, decode, cross):
    cfg = SimChainConfig(
        RecursiveProfile.DECODE_REENCODE if decode else RecursiveProfile.TRANSPARENT,
        ForwarderConfig(True, cross),
    )
    out = run_injection_scenario(cfg, zone, "injectdot_cname")
    assert out.poisoned is (decode and cross)
    if out.poisoned:
        assert out.poisoned_key == (WWW, RType.A)
        assert out.observed_answer == ["6.6.6.6"]
        assert out.stage2_attacker_contacts == 0


def test_bind_like_chain_not_poisoned(zone):
    cfg = SimChainConfig(app_cache=AppCacheConfig(True, AppCacheKey.QUERY_NAME_ONLY))
    assert not run_injection_scenario(cfg, zone, "injectzero_cname").poisoned


def test_app_cache_poisoning(zone):
    cfg = SimChainConfig(stub_profile=UCLIBC, app_cache=AppCacheConfig(True, AppCacheKey.ALL_NAMES))
    out = run_injection_scenario(cfg, zone, "injectzero_cname")
    assert out.poisoned
    assert out.poisoned_key == (WWW, RType.A)
    assert out.observed_answer == ["6.6.6.6"]
    assert out.stage2_attacker_contacts == 0
    assert any(e.component == "app-cache" and e.action == "cache-hit" for e in out.trace)


def test_query_name_only_cache_is_safe(zone):
    cfg = SimChainConfig(stub_profile=UCLIBC, app_cache=AppCacheConfig(True, AppCacheKey.QUERY_NAME_ONLY))
    for pid in INJECTIONS:
        assert not run_injection_scenario(cfg, zone, pid).poisoned


def _all_cache_configs():
    for decode, fwd, cross, app, key in itertools.product(
        RecursiveProfile, [False, True], [False, True], [False, True], AppCacheKey
    ):
        if not (fwd or app):
            continue
        yield decode, ForwarderConfig(fwd, cross and fwd), AppCacheConfig(app, key)


def test_transparent_validating_never_poisoned(zone):
    for _, fwd, app in _all_cache_configs():
        cfg = SimChainConfig(RecursiveProfile.TRANSPARENT, fwd, GLIBC, app)
        for pid in INJECTIONS:
            assert not run_injection_scenario(cfg, zone, pid).poisoned, (fwd, app, pid)


def test_naive_validating_stub_still_poisonable(zone):
    # a stub that validates the rendered text, not the raw labels, accepts
    # "www.target.com" from a fused label and hands it to the app cache
    cfg = SimChainConfig(stub_profile=MUSL, app_cache=AppCacheConfig(True, AppCacheKey.ALL_NAMES))
    assert run_injection_scenario(cfg, zone, "injectdot_cname").poisoned
    assert not run_injection_scenario(cfg, zone, "injectzero_cname").poisoned


def test_poisoned_implies_no_attacker_contact(zone):
    for decode, fwd, app in _all_cache_configs():
        for profile in (GLIBC, UCLIBC):
            cfg = SimChainConfig(decode, fwd, profile, app)
            for pid in INJECTIONS:
                out = run_injection_scenario(cfg, zone, pid)
                if out.poisoned:
                    assert out.stage2_attacker_contacts == 0
                    assert out.observed_answer == ["6.6.6.6"]


def test_deterministic(zone):
    cfg = PRESETS["verisign+dnsmasq"]
    a = run_injection_scenario(cfg, zone, "injectdot_cname")
    b = run_injection_scenario(cfg, zone, "injectdot_cname")
    assert a.trace == b.trace and a.render() == b.render()


def test_errors(zone):
    with pytest.raises(NoCacheInChain):
        run_injection_scenario(SimChainConfig(), zone, "injectdot_cname")
    with pytest.raises(UnknownPayload):
        run_injection_scenario(PRESETS["verisign+dnsmasq"], zone, "slash")
    with pytest.raises(UnknownPayload):
        run_forward_lookup(SimChainConfig(), zone, "nope")


def test_forward_lookup_examples(zone):
    stages = run_forward_lookup(SimChainConfig(stub_profile=UCLIBC), zone, "slash")
    assert "t/t" in stages[-1].outcome.text
    assert all(s.outcome.verdict is Verdict.FAITHFUL for s in stages)
    assert run_forward_lookup(SimChainConfig(), zone, "slash")[-1].outcome.verdict is Verdict.REJECTED
    for profile in PROFILES.values():
        for cfg in (SimChainConfig(stub_profile=profile), PRESETS["verisign+dnsmasq"]):
            assert run_forward_lookup(cfg, zone, "base")[-1].outcome.verdict is Verdict.FAITHFUL


def test_forward_lookup_decode_reencode(zone):
    stages = run_forward_lookup(PRESETS["verisign+dnsmasq"], zone, "injectzero_cname")
    by = {s.component: s.outcome for s in stages}
    assert by["authoritative"].verdict is Verdict.FAITHFUL
    assert by["recursive"].verdict is Verdict.TRUNCATED
    assert by["recursive"].text == "www.target.com."


def test_lowercase_is_not_modification(zone):
    stages = run_forward_lookup(SimChainConfig(lowercase=True), zone, "sql")
    assert stages[1].outcome.verdict is Verdict.FAITHFUL
    assert "'or''" in stages[1].outcome.text


def test_config_json_roundtrip():
    for cfg in PRESETS.values():
        assert SimChainConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    assert load_chain("verisign+dnsmasq") is PRESETS["verisign+dnsmasq"]
    assert load_chain('{"recursive_profile": "decode-reencode"}').recursive_profile is RecursiveProfile.DECODE_REENCODE
    with pytest.raises(ConfigError):
        load_chain("no-such-preset")
    with pytest.raises(ConfigError):
        load_chain('{"recursive_profile": "bogus"}')


def _udp(addr, msg):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(2)
        s.sendto(encode_message(msg), addr)
        return decode_message(s.recv(65535))


def test_loopback_udp_tcp(zone):
    qlog = QueryLog()
    cfg = SimChainConfig(version="TestDNS 1.0", supported_qtypes=frozenset({1, 5, 16}))
    with LoopbackResolver(Chain(cfg, zone, query_log=qlog)) as server:
        resp = _udp(server.address, make_query(RawName.of("abcdefghijklm", "cnamebase", "attacker", "com"), RType.A, 7))
        assert resp.id == 7 and len(resp.answers) == 2
        # 510-byte TXT does not fit in 512 bytes of UDP
        q = make_query(RawName.of("exp", "attacker", "com"), RType.TXT, 8)
        resp = _udp(server.address, q)
        assert resp.tc and not resp.answers
        with socket.create_connection(server.address, timeout=2) as s:
            s.sendall(frame_tcp(encode_message(q)))
            resp = decode_message(recv_tcp_message(s))
        assert not resp.tc and resp.answers[0].rdata.joined == b"A" * 510
        resp = _udp(server.address, make_query(RawName.of("version", "bind"), RType.TXT, 9, RClass.CH))
        assert resp.answers[0].rdata.joined == b"TestDNS 1.0"
        resp = _udp(server.address, make_query(RawName.of("x", "attacker", "com"), RType.SRV, 10))
        assert resp.rcode == Rcode.NOTIMP
    line = qlog.lines[0].split(" ")
    assert line[1] == "abcdefghijklm" and line[3] == "A" and line[4] == "127.0.0.1"
