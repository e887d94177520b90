"""Hostname validation and the three-step name decode pipeline.

A decoder removes compression, turns the name into a string, then
(optionally) checks that the string is a hostname. Decoder profiles differ
in how step two renders special bytes and whether step three runs.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .wire import EscapeStyle, PresentationName, RawName, decode_name, naive_text, to_presentation

_LDH = re.compile(rb"[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?\Z")
_LDH_TEXT = re.compile(r"[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?\Z")


def is_ldh_label(label: bytes) -> bool:
    return _LDH.match(label) is not None


def is_valid_hostname(name: RawName) -> bool:
    """Every label is letters/digits/hyphen with no hyphen at either end.

    Leading digits are allowed (RFC 1123). The root name passes vacuously.
    """
    return all(_LDH.match(label) for label in name.labels)


def is_hostname_text(text: str) -> bool:
    """Hostname check over an already-decoded string, the way libc does it."""
    if text in ("", "."):
        return text == "."
    if text.endswith("."):
        text = text[:-1]
    return all(_LDH_TEXT.match(part) for part in text.split("."))


class Misinterpretation(enum.Enum):
    NONE = "none"
    DOT_CONFUSION = "dot-confusion"
    ZERO_TRUNCATION = "zero-truncation"
    BOTH = "both"


def classify_misinterpretation(name: RawName) -> Misinterpretation:
    dot = name.contains_byte(0x2E)
    zero = name.contains_byte(0x00)
    if dot and zero:
        return Misinterpretation.BOTH
    if dot:
        return Misinterpretation.DOT_CONFUSION
    if zero:
        return Misinterpretation.ZERO_TRUNCATION
    return Misinterpretation.NONE


@dataclass(frozen=True)
class DecoderProfile:
    """How a stub library turns a line-format name into a C string.

    ``validates_reverse`` covers the address-to-name path separately because
    some libraries check forward results but not reverse ones; ``None``
    means same as ``validates_hostname``.
    """

    name: str
    escape_style: EscapeStyle
    validates_hostname: bool
    validates_reverse: bool | None = None

    def validates(self, reverse: bool = False) -> bool:
        if reverse and self.validates_reverse is not None:
            return self.validates_reverse
        return self.validates_hostname


GLIBC = DecoderProfile("glibc-like", EscapeStyle.STRICT, True)
MUSL = DecoderProfile("musl-like", EscapeStyle.NAIVE, True, validates_reverse=False)
UCLIBC = DecoderProfile("uclibc-like", EscapeStyle.NAIVE, False)
ESCAPE_ONLY = DecoderProfile("escape-only", EscapeStyle.ESCAPE_ONLY, False)

PROFILES = {p.name: p for p in (GLIBC, MUSL, UCLIBC, ESCAPE_ONLY)}
PROFILES["dietlibc-like"] = UCLIBC
PROFILES["netbsd-like"] = ESCAPE_ONLY


class Verdict(enum.Enum):
    FAITHFUL = "faithful"
    MISINTERPRETED = "misinterpreted"
    TRUNCATED = "truncated"
    REJECTED = "rejected"


@dataclass(frozen=True)
class DecodedOutcome:
    presentation: PresentationName
    verdict: Verdict

    @property
    def text(self) -> str:
        return self.presentation.text

    @property
    def escaped(self) -> bool:
        """True when escaping changed the visible string."""
        return self.presentation.style is not EscapeStyle.NAIVE and "\\" in self.presentation.text


def decode_with_profile(name: RawName, profile: DecoderProfile, reverse: bool = False) -> DecodedOutcome:
    """Steps two and three of the pipeline for an already decompressed name.

    The validator looks at the full decoded buffer, so a zero byte is seen
    (and rejected) before the C-string view truncates at it.
    """
    style = profile.escape_style
    if profile.validates(reverse):
        full = naive_text(name) if style is EscapeStyle.NAIVE else to_presentation(name, style).text
        if not is_hostname_text(full):
            return DecodedOutcome(to_presentation(name, style), Verdict.REJECTED)
    pres = to_presentation(name, style)
    if style is EscapeStyle.NAIVE:
        if name.contains_byte(0x00):
            return DecodedOutcome(pres, Verdict.TRUNCATED)
        if name.contains_byte(0x2E):
            return DecodedOutcome(pres, Verdict.MISINTERPRETED)
    return DecodedOutcome(pres, Verdict.FAITHFUL)


def decode_pipeline(buffer: bytes, offset: int, profile: DecoderProfile, reverse: bool = False) -> DecodedOutcome:
    name, _ = decode_name(buffer, offset)
    return decode_with_profile(name, profile, reverse)
