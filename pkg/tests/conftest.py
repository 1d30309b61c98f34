from __future__ import annotations

import pytest

from pbrl import codec, tables


@pytest.fixture(scope="session")
def families():
    return {name: tables.load_family(name) for name in tables.FIXTURE_NAMES if name != "hamming74"}


@pytest.fixture(scope="session")
def short_codes():
    """Expanded published z=32 codes with their encoder plans."""
    out = {}
    for name in ("short_pbrl_z32", "short_pnpbrl_z32"):
        code = codec.expand(tables.load_qc(name), tables.load_family(name))
        out[name] = (code, codec.build_encoder(code))
    return out


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Append ``criterion N: PASS|FAIL detail`` lines shown in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
