"""Scan a fleet of simulated resolvers on loopback and print the report.

Every preset chain gets its own UDP/TCP listener on 127.0.0.1. The scanner
then probes them exactly as it would probe real resolvers.
"""

import argparse
import contextlib
import json

from dnsinject.payloads import build_payload_zone
from dnsinject.report import render_matrix
from dnsinject.scanner import Address, ScanConfig, aggregate_report, run_campaign
from dnsinject.sim import PRESETS, Chain, LoopbackResolver, QueryLog


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--qps", type=float, default=500.0)
    ap.add_argument("--json", action="store_true", help="print report.json instead of the table")
    args = ap.parse_args()

    zone = build_payload_zone("attacker.com", "target.com")
    qlog = QueryLog()
    with contextlib.ExitStack() as stack:
        servers = {
            name: stack.enter_context(LoopbackResolver(Chain(cfg, zone, query_log=qlog)))
            for name, cfg in PRESETS.items()
        }
        addrs = [Address(*s.address) for s in servers.values()]
        cfg = ScanConfig(zone, seed=args.seed, timeout=0.5, retries=1, qps=args.qps, query_log=qlog)
        campaign = run_campaign(cfg, addrs)

    report = aggregate_report(campaign.results, zone)
    if args.json:
        print(json.dumps(report.to_json(), indent=2, sort_keys=True))
        return
    for name, addr in zip(servers, addrs):
        print(f"{addr}  {name}")
    print()
    print(render_matrix(report, zone))
    print(f"\n{len(qlog.lines)} queries reached the simulated nameservers")


if __name__ == "__main__":
    main()
