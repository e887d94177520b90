"""Command-line front end.

Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 partial campaign.
"""

from __future__ import annotations

import argparse
import enum
import json
import logging
import os
import signal
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DNSError
from .payloads import build_payload_zone, catalog_json, emit_zonefile, parse_zonefile
from .proxy import ProxyPolicy, SanitizingProxy
from .report import render_matrix, stub_matrix
from .scanner import Address, ProbeResult, ScanConfig, aggregate_report, run_campaign, write_outputs
from .sim import (
    Chain,
    LoopbackResolver,
    load_chain,
    run_forward_lookup,
    run_injection_scenario,
)
from .wire import from_presentation

log = logging.getLogger("dnsinject")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3


class Mode(enum.Enum):
    GEN_ZONE = "genzone"
    SIMULATE = "simulate"
    SCAN = "scan"
    PROXY = "proxy"
    REPORT = "report"
    CATALOG = "catalog"
    MATRIX = "matrix"


@dataclass
class CampaignConfig:
    mode: Mode
    options: dict = field(default_factory=dict)
    out: str | None = None


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _zone(opts: dict):
    if opts.get("zonefile"):
        with open(opts["zonefile"]) as fh:
            return parse_zonefile(fh.read())
    try:
        return build_payload_zone(opts.get("attacker", "attacker.com"), opts.get("target", "target.com"),
                                  inject_ip=opts.get("inject_ip", "6.6.6.6"))
    except (ValueError, DNSError) as exc:
        raise ConfigError(str(exc)) from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _genzone(cfg: CampaignConfig) -> int:
    zone = _zone(cfg.options)
    _emit(emit_zonefile(zone), cfg.out)
    if cfg.out:
        print(f"wrote {len(zone.entries)} payload entries to {cfg.out}")
    return EXIT_OK


def _catalog(cfg: CampaignConfig) -> int:
    _emit(json.dumps(catalog_json(_zone(cfg.options)), indent=2) + "\n", cfg.out)
    return EXIT_OK


def _simulate(cfg: CampaignConfig) -> int:
    opts = cfg.options
    zone = _zone(opts)
    chain = load_chain(opts["chain"])
    pid = opts["payload"]
    entry = zone.entry(pid)
    if opts.get("serve_port") is not None:
        server = LoopbackResolver(Chain(chain, zone), "127.0.0.1", opts["serve_port"]).start()
        host, port = server.address
        print(f"serving chain {chain.name or 'custom'} on {host}:{port} (udp+tcp)", flush=True)
        _wait(opts.get("duration"))
        server.stop()
        return EXIT_OK
    if entry.is_injection:
        outcome = run_injection_scenario(chain, zone, pid, require_cache=False)
        text = outcome.render()
    else:
        stages = run_forward_lookup(chain, zone, pid)
        text = "\n".join(f"{s.component:<13} {s.outcome.verdict.value:<14} {s.outcome.text}" for s in stages)
    _emit(text + "\n", cfg.out)
    return EXIT_OK


def _wait(duration):
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, lambda *_: stop.set())
        except ValueError:
            pass
    stop.wait(duration)


def _read_targets(path: str) -> list[Address]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                try:
                    out.append(Address.parse(line))
                except ValueError as exc:
                    raise ConfigError(f"bad target {line!r}") from exc
    if not out:
        raise ConfigError(f"no targets in {path}")
    return out


def _scan(cfg: CampaignConfig) -> int:
    opts = cfg.options
    if not cfg.out:
        raise ConfigError("scan needs --out")
    zone = _zone({"attacker": opts["attacker_zone"], "target": opts["stage2_domain"],
                  "zonefile": opts.get("zonefile")})
    addrs = _read_targets(opts["targets"])
    scan_cfg = ScanConfig(
        zone,
        stage2_domain=from_presentation(opts["stage2_domain"]),
        seed=opts.get("seed", 0),
        timeout=opts.get("timeout", 3.0),
        retries=opts.get("retries", 2),
        qps=opts.get("qps", 100.0),
    )
    campaign = run_campaign(scan_cfg, addrs)
    as_table = None
    if opts.get("as_table"):
        with open(opts["as_table"]) as fh:
            as_table = json.load(fh)
    versions = {str(t.address): t.version for t in campaign.targets if t.responsive}
    report = aggregate_report(campaign.results, zone, versions, as_table)
    write_outputs(campaign, report, cfg.out, atomic_write, versions, as_table)
    print(render_matrix(report, zone))
    return EXIT_PARTIAL if campaign.partial else EXIT_OK


def _report(cfg: CampaignConfig) -> int:
    path = Path(cfg.options["results"])
    jsonl = path / "results.jsonl" if path.is_dir() else path
    if not jsonl.exists():
        raise ConfigError(f"no results.jsonl under {path}")
    results = [ProbeResult.from_json(json.loads(l)) for l in jsonl.read_text().splitlines() if l.strip()]
    if not results:
        raise ConfigError(f"{jsonl} holds no results")
    versions, as_table = None, None
    side = jsonl.parent / "targets.json"
    if side.exists():
        targets = json.loads(side.read_text())
        versions = {t: e["version"] for t, e in targets.items() if "version" in e}
        if any("asn" in e for e in targets.values()):
            as_table = {Address.parse(t).host: e.get("asn") or "unknown" for t, e in targets.items()}
    report = aggregate_report(results, None, versions, as_table)
    if cfg.out:
        atomic_write(Path(cfg.out) / "report.csv", report.to_csv())
        atomic_write(Path(cfg.out) / "report.json", json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    print(render_matrix(report))
    return EXIT_OK


def _matrix(cfg: CampaignConfig) -> int:
    zone = _zone(cfg.options)
    text = render_matrix(stub_matrix(zone)) + "\n\n" + render_matrix(stub_matrix(zone, reverse=True)) + "\n"
    _emit(text, cfg.out)
    return EXIT_OK


def _proxy(cfg: CampaignConfig) -> int:
    opts = cfg.options
    policy = ProxyPolicy()
    if opts.get("policy"):
        try:
            with open(opts["policy"]) as fh:
                policy = ProxyPolicy.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read policy: {exc}") from exc
    try:
        listen = Address.parse(opts["listen"])
        upstream = Address.parse(opts["upstream"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    proxy = SanitizingProxy((listen.host, listen.port), (upstream.host, upstream.port), policy).start()
    host, port = proxy.address
    print(f"proxy listening on {host}:{port} -> {upstream}", flush=True)

    def dump(*_):
        print(json.dumps(proxy.stats.snapshot(), sort_keys=True), flush=True)

    if hasattr(signal, "SIGUSR1"):
        signal.signal(signal.SIGUSR1, dump)
    interval = opts.get("stats_interval")
    deadline = time.monotonic() + opts["duration"] if opts.get("duration") else None
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    while not stop.is_set():
        wait = interval or 0.5
        if deadline is not None:
            wait = min(wait, max(0.0, deadline - time.monotonic()))
        if stop.wait(wait):
            break
        if interval:
            dump()
        if deadline is not None and time.monotonic() >= deadline:
            break
    proxy.stop()
    dump()
    return EXIT_OK


HANDLERS = {
    Mode.GEN_ZONE: _genzone,
    Mode.SIMULATE: _simulate,
    Mode.SCAN: _scan,
    Mode.PROXY: _proxy,
    Mode.REPORT: _report,
    Mode.CATALOG: _catalog,
    Mode.MATRIX: _matrix,
}


def run(config: CampaignConfig) -> int:
    try:
        return HANDLERS[config.mode](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"error: unknown {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DNSError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _zone_args(p):
    p.add_argument("--attacker", default="attacker.com", help="attacker-controlled zone origin")
    p.add_argument("--target", default="target.com", help="operator-owned stage-2 domain")
    p.add_argument("--inject-ip", default="6.6.6.6")
    p.add_argument("--zonefile", help="load payloads from a zone file instead of building them")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnsinject", description="DNS name-injection test toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("genzone", help="emit the payload zone file")
    _zone_args(p)
    p.add_argument("--out")

    p = sub.add_parser("catalog", help="list payloads as JSON")
    _zone_args(p)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="run one payload through a simulated chain")
    _zone_args(p)
    p.add_argument("--payload", required=True)
    p.add_argument("--chain", default="bind", help="preset name, JSON object, or JSON file")
    p.add_argument("--serve", type=int, dest="serve_port", help="expose the chain on this local port")
    p.add_argument("--duration", type=float, help="seconds to serve (default: until interrupted)")
    p.add_argument("--out")

    p = sub.add_parser("scan", help="probe resolvers listed in a file")
    p.add_argument("--targets", required=True)
    p.add_argument("--attacker-zone", required=True)
    p.add_argument("--stage2-domain", required=True)
    p.add_argument("--qps", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=3.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--as-table", help="JSON map of resolver IP to AS number")
    p.add_argument("--zonefile")
    p.add_argument("--out", required=True)

    p = sub.add_parser("proxy", help="run the sanitizing forwarder")
    p.add_argument("--listen", default="127.0.0.1:5353")
    p.add_argument("--upstream", required=True)
    p.add_argument("--policy", help="JSON policy file")
    p.add_argument("--stats-interval", type=float)
    p.add_argument("--duration", type=float)

    p = sub.add_parser("report", help="aggregate a results directory")
    p.add_argument("--results", required=True)
    p.add_argument("--out")

    p = sub.add_parser("matrix", help="print the stub-profile matrices")
    _zone_args(p)
    p.add_argument("--out")
    return ap


def config_from_args(ns: argparse.Namespace) -> CampaignConfig:
    opts = {k: v for k, v in vars(ns).items() if k not in ("mode", "out", "verbose")}
    return CampaignConfig(Mode(ns.mode), opts, getattr(ns, "out", None))


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
