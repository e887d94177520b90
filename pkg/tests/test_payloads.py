import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnsinject.errors import NameTooLong, UnknownPayload
from dnsinject.payloads import (
    Effect,
    ZoneFile,
    build_payload_zone,
    catalog_json,
    emit_zonefile,
    lookup_payload,
    parse_zonefile,
    printf_unescape,
)
from dnsinject.validation import GLIBC, Verdict, decode_with_profile
from dnsinject.wire import (
    NameRdata,
    RawName,
    RType,
    decode_message,
    encode_message,
    make_query,
    make_response,
)

REQUIRED = (
    ["base", "slash", "at", "xss", "sql", "ansi"]
    + ["injectdot_cname", "injectdot_direct", "injectzero_cname", "injectzero_direct"]
    + ["ldap_srv", "eduroam_srv", "spf_exp"]
    + [f"ptr_{i}" for i in range(1, 9)]
    + [f"radsec_{i}" for i in range(1, 6)]
)


def test_catalog_complete(zone):
    assert set(REQUIRED) <= set(zone.ids)
    assert len(zone.entries) >= 24
    assert len(set(zone.ids)) == len(zone.ids)


def test_injectdot_records(zone):
    e = zone.entry("injectdot_cname")
    cname, a = e.records
    assert cname.owner == RawName.of("injectdot", "attacker", "com")
    assert cname.rdata.target.labels == (b"www.target", b"com")
    assert a.owner == cname.rdata.target and str(a.rdata.address) == "6.6.6.6"
    assert e.victim == RawName.of("www", "target", "com")


def test_injectzero_records(zone):
    cname = zone.entry("injectzero_cname").records[0]
    assert cname.rdata.target.labels == (b"www", b"target", b"com\x00", b"attacker", b"com")


def test_ptr_xss(zone):
    rr = zone.entry("ptr_6").records[0]
    assert rr.owner == RawName.of("6", "6", "6", "6", "in-addr", "arpa")
    assert rr.rdata.target.labels[0].startswith(b"<img/src=''/onerror='alert")


def test_ldap_and_eduroam(zone):
    assert zone.entry("ldap_srv").records[0].rdata.target.labels[0] == b"/dc=attacker,dc=com"
    target = zone.entry("eduroam_srv").records[0].rdata.target
    assert any(b"\n" in l and b"\t" in l for l in target.labels)


def test_spf_pair(zone):
    e = zone.entry("spf_exp")
    apex_txt, exp_txt = e.records
    assert apex_txt.rdata.joined.startswith(b"v=spf1 exp=")
    assert exp_txt.rdata.joined == b"A" * 510
    assert [len(s) for s in exp_txt.rdata.strings] == [255, 255]
    assert e.expected_effect is Effect.OVERSIZE


def test_radsec_entries_emit_only(zone):
    for i in range(1, 6):
        e = zone.entry(f"radsec_{i}")
        assert e.emit_only and e.expected_effect is Effect.APP_INJECT
        assert e.notes["variant"]
        assert "shell_unescaped" in e.notes


def test_printf_unescape():
    assert printf_unescape(b"a\\nb\\tc%%p") == b"a\nb\tc%p"


def test_owners_in_zone_or_declared(zone):
    apexes = zone.apexes()
    for rr in zone.records():
        assert any(rr.owner.is_subdomain_of(a) for a in apexes)
    out_of_zone = [a for a in apexes[1:] if not a.labels[-1] == b"arpa"]
    assert all(a.labels[0] in (b"www.target", b"www") for a in out_of_zone)


def test_every_record_wire_roundtrip(zone):
    q = make_query(RawName.of("x"), RType.A)
    for e in zone.entries:
        msg = make_response(q, e.records)
        again = decode_message(encode_message(msg, compress=True))
        assert again.answers == list(e.records)
        assert encode_message(again) == encode_message(msg)


def test_strict_decode_lossless(zone):
    for rr in zone.records():
        for name in [rr.owner, *rr.names()]:
            assert decode_with_profile(name, GLIBC).presentation.text
            assert RawName.parse(str(name)) == name


def test_bad_inputs():
    with pytest.raises(ValueError):
        build_payload_zone("same.com", "same.com")
    with pytest.raises(NameTooLong):
        build_payload_zone(".".join(["x" * 63] * 3), "target.com")


def test_unknown_payload(zone):
    with pytest.raises(UnknownPayload):
        zone.entry("nope")


def test_zonefile_roundtrip(zone):
    text = emit_zonefile(zone)
    assert "www.target.com\\000.attacker.com" in text
    assert "CNAME" in text and "works.cnameslash" in text
    assert parse_zonefile(text) == zone


def test_soa_only_zone():
    base = build_payload_zone("attacker.com", "target.com")
    empty = ZoneFile(base.origin, (), boilerplate=base.boilerplate)
    again = parse_zonefile(emit_zonefile(empty))
    assert again.entries == ()


def test_lookup_with_prefix(zone):
    qname = RawName.of("rnd123", "injectdot", "attacker", "com")
    got = lookup_payload(zone, qname, RType.CNAME)
    assert [rr.rtype for rr in got] == [RType.CNAME, RType.A]
    assert got[0].owner == qname
    assert got[0].rdata.target.labels == (b"rnd123", b"www.target", b"com")


def test_lookup_misses(zone):
    assert lookup_payload(zone, RawName.of("unknown", "attacker", "com"), RType.A) == []
    deep = RawName.of("a", "b", "c", "d", "injectdot", "attacker", "com")
    assert lookup_payload(zone, deep, RType.A) == []


def test_lookup_spf(zone):
    got = lookup_payload(zone, RawName.of("exp", "attacker", "com"), RType.TXT)
    assert len(got) == 1
    assert got[0].rdata.joined == b"A" * 510


@settings(max_examples=60)
@given(st.lists(st.from_regex(r"\A[a-z2-7]{1,13}\Z"), min_size=0, max_size=3))
def test_any_prefix_reaches_trigger(prefix):
    zone = build_payload_zone("attacker.com", "target.com")
    for e in zone.entries:
        if e.emit_only:
            continue
        name = e.trigger_qname.prepend(*prefix) if prefix else e.trigger_qname
        got = lookup_payload(zone, name, e.trigger_qtype)
        assert got, e.id
        assert got[0].owner.equals_ci(name)


def test_catalog_json(zone):
    data = catalog_json(zone)
    json.dumps(data)
    first = {d["id"]: d for d in data}["injectdot_cname"]
    assert first["qtype"] == "A" and first["expected_effect"] == "cache-inject"
