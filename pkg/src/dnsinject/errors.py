"""Exception hierarchy shared by every module."""


class DNSError(Exception):
    """Base class for all errors raised by this package."""


# wire codec
class LabelTooLong(DNSError):
    pass


class NameTooLong(DNSError):
    pass


class EmptyLabel(DNSError):
    pass


class BadEscape(DNSError):
    pass


class PointerLoop(DNSError):
    pass


class TruncatedName(DNSError):
    pass


class BadLabelType(DNSError):
    pass


class Truncated(DNSError):
    pass


class BadRdata(DNSError):
    pass


class BadRcode(DNSError):
    pass


class CountMismatch(DNSError):
    pass


# zone handling
class ZoneSyntaxError(DNSError):
    pass


# simulator
class UnknownPayload(DNSError, KeyError):
    pass


class NoCacheInChain(DNSError):
    pass


# scanner / reporting
class EmptyCampaign(DNSError):
    pass


class EmptyReport(DNSError):
    pass


class ConfigError(DNSError):
    pass
