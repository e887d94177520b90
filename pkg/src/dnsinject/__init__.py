"""Toolkit for testing how DNS software handles hostile bytes in domain names."""

from .payloads import ZoneFile, build_payload_zone, lookup_payload
from .proxy import ProxyPolicy, sanitize_response
from .sim import SimChainConfig, run_forward_lookup, run_injection_scenario
from .validation import DecoderProfile, decode_with_profile, is_valid_hostname
from .wire import RawName, decode_message, decode_name, encode_message, encode_name, from_presentation, to_presentation

__version__ = "0.1.0"
