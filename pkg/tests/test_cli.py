import json

from dnsinject.cli import EXIT_CONFIG, EXIT_OK, atomic_write, main
from dnsinject.payloads import parse_zonefile
from fleet import running_fleet


def test_genzone(tmp_path, capsys):
    out = tmp_path / "zone.txt"
    assert main(["genzone", "--out", str(out)]) == EXIT_OK
    zone = parse_zonefile(out.read_text())
    assert len(zone.entries) >= 24


def test_catalog_stdout(capsys):
    assert main(["catalog"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert {"injectdot_cname", "ptr_6", "ldap_srv"} <= {d["id"] for d in data}


def test_simulate_preset(capsys):
    assert main(["simulate", "--payload", "injectdot_cname", "--chain", "verisign+dnsmasq"]) == EXIT_OK
    assert "poisoned=true" in capsys.readouterr().out


def test_simulate_bad_chain(capsys):
    assert main(["simulate", "--payload", "injectdot_cname", "--chain", "nope"]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_report_missing_dir(tmp_path, capsys):
    assert main(["report", "--results", str(tmp_path / "missing")]) == EXIT_CONFIG


def test_report_empty_dir(tmp_path):
    (tmp_path / "results.jsonl").write_text("")
    assert main(["report", "--results", str(tmp_path)]) == EXIT_CONFIG


def test_matrix(capsys):
    assert main(["matrix"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "dietlibc/uclibc" in out and "(✓)²" in out


def test_scan_and_report(zone, tmp_path, capsys):
    with running_fleet(zone) as servers:
        targets = tmp_path / "targets.txt"
        targets.write_text("# fleet\n" + "\n".join(f"{h}:{p}" for h, p in (s.address for s in servers)) + "\n")
        out = tmp_path / "out"
        code = main(["scan", "--targets", str(targets), "--attacker-zone", "attacker.com",
                     "--stage2-domain", "target.com", "--out", str(out),
                     "--timeout", "0.3", "--retries", "1", "--qps", "2000"])
    assert code == EXIT_OK
    for name in ("results.jsonl", "report.csv", "report.json"):
        assert (out / name).exists()
    rows = [json.loads(l) for l in (out / "results.jsonl").read_text().splitlines()]
    assert len(rows) == len(servers) * 12
    assert any(r["verdict"] == "CacheInjected" for r in rows)
    capsys.readouterr()
    again = tmp_path / "again"
    assert main(["report", "--results", str(out), "--out", str(again)]) == EXIT_OK
    assert json.loads((again / "report.json").read_text()) == json.loads((out / "report.json").read_text())


def test_scan_no_targets(tmp_path):
    t = tmp_path / "t.txt"
    t.write_text("# nothing\n")
    assert main(["scan", "--targets", str(t), "--attacker-zone", "attacker.com",
                 "--stage2-domain", "target.com", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_atomic_write(tmp_path):
    p = tmp_path / "d" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [x.name for x in p.parent.iterdir()] == ["f.txt"]
