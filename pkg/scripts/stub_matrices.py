"""Print the forward and reverse stub-profile matrices."""

import argparse

from dnsinject.payloads import build_payload_zone
from dnsinject.report import render_matrix, stub_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--attacker", default="attacker.com")
    ap.add_argument("--target", default="target.com")
    args = ap.parse_args()
    zone = build_payload_zone(args.attacker, args.target)
    print(render_matrix(stub_matrix(zone)))
    print()
    print(render_matrix(stub_matrix(zone, reverse=True)))


if __name__ == "__main__":
    main()
