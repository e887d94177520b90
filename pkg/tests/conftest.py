import pytest

from dnsinject.payloads import build_payload_zone

# filled by test_acceptance, printed once at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def zone():
    return build_payload_zone("attacker.com", "target.com")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
