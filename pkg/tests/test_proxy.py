import json
import socket
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnsinject.errors import ConfigError
from dnsinject.payloads import lookup_payload
from dnsinject.proxy import (
    DEFAULT_POLICY,
    Action,
    ProxyPolicy,
    ProxyStats,
    Refusal,
    SanitizingProxy,
    ViolationKind,
    name_violations,
    response_is_clean,
    sanitize_response,
)
from dnsinject.sim import Chain, LoopbackResolver, SimChainConfig
from dnsinject.validation import classify_misinterpretation, is_valid_hostname, Misinterpretation
from dnsinject.wire import (
    SRV,
    TXT,
    A,
    NameRdata,
    RawName,
    RClass,
    Rcode,
    ResourceRecord,
    RType,
    decode_message,
    encode_message,
    make_query,
    make_response,
)
from strategies import raw_names


def _response(zone, pid, prefix=None):
    e = zone.entry(pid)
    qname = e.trigger_qname.prepend(prefix) if prefix else e.trigger_qname
    q = make_query(qname, e.trigger_qtype, 1)
    return make_response(q, lookup_payload(zone, qname, e.trigger_qtype), aa=True)


def test_injectzero_drop(zone):
    out, violations = sanitize_response(_response(zone, "injectzero_cname"), ProxyPolicy(Action.DROP))
    assert isinstance(out, Refusal)
    assert any(ViolationKind.ZERO_TRUNCATION in v.kinds for v in violations)


def test_baseline_passes_unchanged(zone):
    resp = _response(zone, "base")
    out, violations = sanitize_response(resp)
    assert out is resp and violations == []


def _srv(target):
    owner = RawName.of("_ldap", "_tcp", "example", "com")
    q = make_query(owner, RType.SRV)
    return make_response(q, [ResourceRecord(owner, RType.SRV, SRV(0, 0, 389, target))])


def test_srv_allowlist_and_strip():
    legal = _srv(RawName.of("ldap", "example", "com"))
    out, violations = sanitize_response(legal, ProxyPolicy(Action.STRIP_RECORD))
    assert out is legal and not violations
    bad = _srv(RawName.of("/dc=example,dc=com"))
    out, violations = sanitize_response(bad, ProxyPolicy(Action.STRIP_RECORD))
    assert out.answers == [] and out.rcode == Rcode.NOERROR
    assert violations[0].kinds == (ViolationKind.NON_HOSTNAME_CHAR,)
    # the same underscore labels are not allowed on an A record
    owner = RawName.of("_ldap", "_tcp", "example", "com")
    a = make_response(make_query(owner, RType.A), [ResourceRecord(owner, RType.A, A("192.0.2.1"))])
    assert sanitize_response(a)[0].rcode == Rcode.REFUSED


def test_default_refuses_tainted_answer(zone):
    out, violations = sanitize_response(_response(zone, "injectdot_cname"))
    assert out.rcode == Rcode.REFUSED and not out.answers
    assert out.questions == _response(zone, "injectdot_cname").questions
    assert any(ViolationKind.DOT_CONFUSION in v.kinds for v in violations)
    decode_message(encode_message(out))


def test_strip_removes_whole_chain(zone):
    resp = _response(zone, "injectdot_cname")
    resp.answers.append(ResourceRecord(RawName.of("ok", "com"), RType.A, A("192.0.2.9")))
    out, _ = sanitize_response(resp, ProxyPolicy(Action.STRIP_RECORD))
    assert [str(rr.owner) for rr in out.answers] == ["ok.com."]


def test_additional_stripped_answer_kept(zone):
    resp = _response(zone, "base")
    bad = ResourceRecord(RawName.of("t/t", "x"), RType.A, A("192.0.2.2"))
    resp.additional = [bad]
    out, violations = sanitize_response(resp)
    assert out.answers == resp.answers and out.additional == []
    assert len(violations) == 1


def test_escape_and_pass_reports_only(zone):
    resp = _response(zone, "xss")
    out, violations = sanitize_response(resp, ProxyPolicy(Action.ESCAPE_AND_PASS, Action.ESCAPE_AND_PASS))
    assert out is resp and violations


def test_txt_rdata_never_checked():
    owner = RawName.of("txt", "example")
    resp = make_response(make_query(owner, RType.TXT), [ResourceRecord(owner, RType.TXT, TXT((b"<a>/@\x00",)))])
    assert sanitize_response(resp)[1] == []


def test_policy_json():
    p = ProxyPolicy.from_json({"action_on_violation": "Drop", "owner_allowlist": ["_*", "xn--*"]})
    assert p.action is Action.DROP and p.owner_allowlist == ("_*", "xn--*")
    assert ProxyPolicy.from_json(DEFAULT_POLICY.to_json()) == DEFAULT_POLICY
    with pytest.raises(ConfigError):
        ProxyPolicy.from_json({"action": "Explode"})
    with pytest.raises(ConfigError):
        ProxyPolicy.from_json({"acton": "Drop"})


def test_name_violation_kinds():
    assert name_violations(RawName.of("a.b\x00")) == (ViolationKind.DOT_CONFUSION, ViolationKind.ZERO_TRUNCATION)
    assert name_violations(RawName.of("_x"), ("_*",)) == ()
    assert name_violations(RawName.of("_x")) == (ViolationKind.NON_HOSTNAME_CHAR,)


@settings(max_examples=200)
@given(st.lists(st.tuples(raw_names(max_labels=4), raw_names(max_labels=4)), min_size=1, max_size=4),
       st.sampled_from([Action.DROP, Action.STRIP_RECORD, Action.REFUSE]))
def test_soundness(pairs, action):
    records = [ResourceRecord(o, RType.CNAME, NameRdata(t)) for o, t in pairs]
    resp = make_response(make_query(RawName.of("q"), RType.A), records)
    out, _ = sanitize_response(resp, ProxyPolicy(action, action))
    assert response_is_clean(out)
    if not isinstance(out, Refusal):
        for rr in out.answers:
            for name in (rr.owner, rr.rdata.target):
                assert is_valid_hostname(name)
                assert classify_misinterpretation(name) is Misinterpretation.NONE


def test_stats_monotone_and_threadsafe():
    stats = ProxyStats()

    def hammer():
        for _ in range(500):
            stats.record("Refuse")

    threads = [threading.Thread(target=hammer) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert stats.snapshot()["actions"]["Refuse"] == 4000


def _udp(addr, msg, timeout=3):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(timeout)
        s.sendto(encode_message(msg), addr)
        return decode_message(s.recv(65535))


def test_serve_end_to_end(zone):
    with LoopbackResolver(Chain(SimChainConfig(), zone)) as upstream, \
            SanitizingProxy(("127.0.0.1", 0), upstream.address, ProxyPolicy(Action.DROP)) as proxy:
        resp = _udp(proxy.address, make_query(RawName.of("cnamexss", "attacker", "com"), RType.A, 5))
        assert resp.id == 5 and resp.rcode == Rcode.REFUSED
        q = make_query(RawName.of("cnamebase", "attacker", "com"), RType.A, 6)
        through = _udp(proxy.address, q)
        direct = _udp(upstream.address, q)
        assert through.answers == direct.answers and through.rcode == Rcode.NOERROR
        stats = _udp(proxy.address, make_query(RawName.of("stats", "proxy"), RType.TXT, 7, RClass.CH))
        snap = json.loads(stats.answers[0].rdata.joined)
        assert snap["actions"] == {"Drop": 1, "Pass": 1}
        assert snap["violations"]["NonHostnameChar"] >= 1


def test_dead_upstream_servfail():
    dead = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    dead.bind(("127.0.0.1", 0))
    try:
        with SanitizingProxy(("127.0.0.1", 0), dead.getsockname(), timeout=0.3) as proxy:
            resp = _udp(proxy.address, make_query(RawName.of("a", "com"), RType.A, 9), timeout=2)
            assert resp.rcode == Rcode.SERVFAIL and resp.id == 9
            assert proxy.stats.snapshot()["upstream_failures"] == 1
    finally:
        dead.close()
