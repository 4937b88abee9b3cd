"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import pytest

from pilotwave import acceptance


@pytest.mark.parametrize("check", acceptance.CHECKS, ids=lambda f: f.__name__)
def test_criterion(check, capsys):
    c = check()
    with capsys.disabled():
        print(f"\n[{'PASS' if c.passed else 'FAIL'}] {c.number:02d} {c.name}: {c.detail}")
    assert c.passed, c.detail
