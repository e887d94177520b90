"""Result matrices in the ✓/✗ notation of the measurement tables.

Forward-lookup cells:

* special-character payloads: ✓ the name reached the application, (✓)³ it
  arrived escaped, ✗ it was rejected;
* injection payloads: (✗)⁵ the name was misread but nothing cached it, ✓ the
  injected address was cached, ✗ otherwise, ✗³ for an escaped name.

Reverse-lookup cells use (✓)² for escaped output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import EmptyReport
from .payloads import ZoneFile
from .scanner import EXCLUDED, Report, Verdict
from .sim import SimChainConfig, run_forward_lookup
from .validation import ESCAPE_ONLY, GLIBC, MUSL, UCLIBC, DecodedOutcome, DecoderProfile
from .validation import Verdict as DecodeVerdict


class Cell(enum.Enum):
    OK = "✓"
    NO = "✗"
    MISREAD = "(✗)⁵"
    ESCAPED = "(✓)³"
    ESCAPED_REVERSE = "(✓)²"
    ESCAPED_NO = "✗³"
    NA = "-"

    def __str__(self):
        return self.value


FORWARD_COLUMNS = [
    ("Base", "base"),
    ("/", "slash"),
    ("@", "at"),
    ("XSS", "xss"),
    ("SQL", "sql"),
    ("ANSI", "ansi"),
    ("inject\\.", "injectdot_cname"),
    ("inject\\000", "injectzero_cname"),
]

REVERSE_COLUMNS = [
    ("Base", "ptr_1"),
    ("/", "ptr_2"),
    ("@", "ptr_3"),
    ("\\.", "ptr_5"),
    ("\\000", "ptr_4"),
    ("XSS", "ptr_6"),
    ("SQL", "ptr_7"),
    ("ANSI", "ptr_8"),
]

STUB_ROWS = [("glibc", GLIBC), ("musl", MUSL), ("dietlibc/uclibc", UCLIBC), ("netbsd", ESCAPE_ONLY)]


def forward_cell(outcome: DecodedOutcome, injection: bool) -> Cell:
    v = outcome.verdict
    if v is DecodeVerdict.REJECTED:
        return Cell.NO
    if injection:
        if v in (DecodeVerdict.MISINTERPRETED, DecodeVerdict.TRUNCATED):
            return Cell.MISREAD
        return Cell.ESCAPED_NO if outcome.escaped else Cell.NO
    return Cell.ESCAPED if outcome.escaped else Cell.OK


def reverse_cell(outcome: DecodedOutcome) -> Cell:
    if outcome.verdict is DecodeVerdict.REJECTED:
        return Cell.NO
    return Cell.ESCAPED_REVERSE if outcome.escaped else Cell.OK


@dataclass
class Matrix:
    title: str
    columns: list
    rows: dict = field(default_factory=dict)

    def cells(self, row: str) -> list[str]:
        return [str(c) for c in self.rows[row]]


def stub_matrix(zone: ZoneFile, rows=STUB_ROWS, reverse: bool = False) -> Matrix:
    """Decode every column's payload through each stub profile."""
    columns = REVERSE_COLUMNS if reverse else FORWARD_COLUMNS
    title = "Reverse-lookup results" if reverse else "Forward-lookup results (stub resolvers)"
    m = Matrix(title, [c for c, _ in columns])
    for label, profile in rows:
        cfg = SimChainConfig(stub_profile=profile)
        row = []
        for _, pid in columns:
            outcome = run_forward_lookup(cfg, zone, pid)[-1].outcome
            if reverse:
                row.append(reverse_cell(outcome))
            else:
                row.append(forward_cell(outcome, zone.entry(pid).is_injection))
        m.rows[label] = row
    return m


def verdict_cell(verdict: Verdict, injection: bool) -> Cell:
    if verdict in EXCLUDED:
        return Cell.NA
    if injection:
        return {Verdict.CACHE_INJECTED: Cell.OK, Verdict.MISINTERPRETED: Cell.MISREAD}.get(verdict, Cell.NO)
    return Cell.OK if verdict is Verdict.TRANSPARENT else Cell.NO


def report_matrix(report: Report, zone: ZoneFile | None = None) -> Matrix:
    if not report.matrix:
        raise EmptyReport("report has no targets")
    columns = list(report.per_payload)

    def injection(pid):
        return zone.entry(pid).is_injection if zone is not None else pid.startswith("inject")

    m = Matrix("Forward-lookup results per target", columns)
    for target, verdicts in report.matrix.items():
        m.rows[target] = [
            verdict_cell(Verdict(verdicts[pid]), injection(pid)) if pid in verdicts else Cell.NA
            for pid in columns
        ]
    m.rows["all targets"] = [f"{report.per_payload[pid].percent:.1f}%" for pid in columns]
    m.columns = columns + ["any"]
    for target in m.rows:
        m.rows[target] = list(m.rows[target]) + [""]
    m.rows["all targets"][-1] = f"{report.any_injection.percent:.1f}%"
    return m


def render_matrix(data, zone: ZoneFile | None = None) -> str:
    """Plain-text table. Accepts a Matrix or a scanner Report."""
    m = report_matrix(data, zone) if isinstance(data, Report) else data
    if not m.rows:
        raise EmptyReport("nothing to render")
    head = [""] + list(m.columns)
    body = [[r] + [str(c) for c in cells] for r, cells in m.rows.items()]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = [m.title, " | ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines)


def profile_rows(names) -> list[tuple[str, DecoderProfile]]:
    from .validation import PROFILES

    return [(n, PROFILES[n]) for n in names]
