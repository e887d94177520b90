"""Run every injection payload through a grid of simulated resolver chains.

Prints one line per (chain, payload) with the poisoning outcome. Use --trace
to dump the event trace for the poisoned cases.
"""

import argparse
import itertools

from dnsinject.payloads import build_payload_zone
from dnsinject.sim import AppCacheConfig, AppCacheKey, ForwarderConfig, RecursiveProfile, SimChainConfig
from dnsinject.sim import run_injection_scenario
from dnsinject.validation import PROFILES

INJECTIONS = ["injectdot_cname", "injectdot_direct", "injectzero_cname", "injectzero_direct"]


def chains():
    for rec, cross, stub, key in itertools.product(
        RecursiveProfile, [None, False, True], PROFILES.values(), [None, *AppCacheKey]
    ):
        if cross is None and key is None:
            continue  # no cache anywhere
        fwd = ForwarderConfig(cross is not None, bool(cross))
        app = AppCacheConfig(key is not None, key or AppCacheKey.QUERY_NAME_ONLY)
        yield SimChainConfig(rec, fwd, stub, app)


def describe(cfg: SimChainConfig) -> str:
    fwd = "none" if not cfg.forwarder.present else ("cross" if cfg.forwarder.cross_zone_cname_caching else "plain")
    app = cfg.app_cache.keyed_by.value if cfg.app_cache.present else "none"
    return f"{cfg.recursive_profile.value:15} fwd={fwd:5} stub={cfg.stub_profile.name:15} app={app:21}"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trace", action="store_true")
    ap.add_argument("--only-poisoned", action="store_true")
    args = ap.parse_args()
    zone = build_payload_zone("attacker.com", "target.com")
    total = poisoned = 0
    for cfg in chains():
        for pid in INJECTIONS:
            out = run_injection_scenario(cfg, zone, pid)
            total += 1
            poisoned += out.poisoned
            if args.only_poisoned and not out.poisoned:
                continue
            print(f"{describe(cfg)}  {pid:18} poisoned={str(out.poisoned).lower()}")
            if args.trace and out.poisoned:
                print(out.render())
    print(f"{poisoned}/{total} chain/payload combinations poisoned")


if __name__ == "__main__":
    main()
