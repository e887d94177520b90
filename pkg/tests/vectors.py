"""Hostname conformance vectors: (labels, expected is_valid_hostname)."""

HOSTNAME_VECTORS = [
    # LDH positives
    ((b"example", b"com"), True),
    ((b"www", b"example", b"com"), True),
    ((b"a",), True),
    ((b"A",), True),
    ((b"0",), True),
    ((b"3com", b"com"), True),
    ((b"123", b"45"), True),
    ((b"xn--bcher-kva", b"example"), True),
    ((b"a-b", b"c"), True),
    ((b"a--b",), True),
    ((b"MiXeD", b"CaSe"), True),
    ((b"x" * 63, b"com"), True),
    ((b"1-1",), True),
    ((b"works", b"cnameslash", b"attacker", b"com"), True),
    ((b"ns1", b"example", b"org"), True),
    ((b"in-addr", b"arpa"), True),
    ((b"1", b"1", b"1", b"1", b"in-addr", b"arpa"), True),
    ((), True),
    # underscore
    ((b"_ldap", b"_tcp", b"example", b"com"), False),
    ((b"_srv",), False),
    ((b"a_b",), False),
    ((b"ab_",), False),
    # slash
    ((b"t/t", b"example", b"com"), False),
    ((b"/dc=example,dc=com",), False),
    ((b"-f/some/file",), False),
    # at
    ((b"t@t", b"example"), False),
    ((b"@6", b"6", b"6", b"6"), False),
    ((b"user@host",), False),
    # dot inside a label
    ((b"www.target", b"com"), False),
    ((b"a.b", b"c"), False),
    ((b".",), False),
    ((b"t.t", b"test"), False),
    # zero byte
    ((b"com\x00", b"attacker", b"com"), False),
    ((b"t\x00t", b"test"), False),
    ((b"\x00",), False),
    # hyphen edges
    ((b"-a",), False),
    ((b"a-",), False),
    ((b"-",), False),
    ((b"--",), False),
    ((b"ok", b"-bad"), False),
    ((b"ok", b"bad-"), False),
    # other non-LDH bytes
    ((b"sp ace",), False),
    ((b"tab\t",), False),
    ((b"nl\n",), False),
    ((b"\x1b[31m",), False),
    ((b"'OR''=''--",), False),
    ((b"<script>",), False),
    ((b"a*b",), False),
    ((b"\xc3\xa9",), False),
    ((b"a\\b",), False),
]

# expected stub-profile matrices, one row per profile
FORWARD_MATRIX = {
    "glibc": ["✓", "✗", "✗", "✗", "✗", "✗", "✗", "✗"],
    "musl": ["✓", "✗", "✗", "✗", "✗", "✗", "(✗)⁵", "✗"],
    "dietlibc/uclibc": ["✓", "✓", "✓", "✓", "✓", "✓", "(✗)⁵", "(✗)⁵"],
    "netbsd": ["✓", "✓", "(✓)³", "✓", "✓", "(✓)³", "✗³", "✗³"],
}
REVERSE_MATRIX = {
    "glibc": ["✓", "✗", "✗", "✗", "✗", "✗", "✗", "✗"],
    "musl": ["✓"] * 8,
    "dietlibc/uclibc": ["✓"] * 8,
    "netbsd": ["✓", "✓", "(✓)²", "(✓)²", "(✓)²", "✓", "✓", "(✓)²"],
}
