"""Push random catalog responses through the sanitizer and tally actions."""

import argparse
import collections
import random

from dnsinject.payloads import build_payload_zone, lookup_payload
from dnsinject.proxy import ProxyPolicy, Refusal, response_is_clean, sanitize_response
from dnsinject.wire import Rcode, RType, make_query, make_response

ALPHABET = "abcdefghijklmnopqrstuvwxyz234567"


def response_for(zone, entry, prefix):
    if entry.emit_only or entry.trigger_qtype == RType.PTR:
        qname, records = entry.trigger_qname, list(entry.records)
    else:
        qname = entry.trigger_qname.prepend(prefix)
        records = lookup_payload(zone, qname, entry.trigger_qtype)
    return make_response(make_query(qname, entry.trigger_qtype), records, aa=True)


def outcome(original, out) -> str:
    if isinstance(out, Refusal):
        return "dropped"
    if out.rcode == Rcode.REFUSED:
        return "refused"
    if out is original:
        return "passed"
    return "stripped"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--action", default="Refuse", help="Drop, StripRecord, Refuse or EscapeAndPass")
    args = ap.parse_args()

    zone = build_payload_zone("attacker.com", "target.com")
    policy = ProxyPolicy.from_json({"action_on_violation": args.action})
    rng = random.Random(args.seed)
    tally = collections.defaultdict(collections.Counter)
    unclean = 0
    for _ in range(args.trials):
        entry = rng.choice(zone.entries)
        prefix = "".join(rng.choice(ALPHABET) for _ in range(13))
        resp = response_for(zone, entry, prefix)
        out, _ = sanitize_response(resp, policy)
        tally[entry.id][outcome(resp, out)] += 1
        unclean += not response_is_clean(out)
    for pid in zone.ids:
        counts = ", ".join(f"{k}={v}" for k, v in sorted(tally[pid].items()))
        print(f"{pid:18} {counts}")
    print(f"unclean responses after sanitizing: {unclean}")


if __name__ == "__main__":
    main()
