import pytest

from spokenqa.lexicon import parse_lexicon

SMALL_LEXICON = """# tiny test lexicon
上\tshang4
長\tchang2
江\tjiang1
在\tzai4
再\tzai4
北\tbei3
京\tjing1
大\tda4
學\txue2
河\the2
水\tshui3
黃\thuang2
"""


@pytest.fixture
def small_lex():
    return parse_lexicon(SMALL_LEXICON)


_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Record one acceptance line: ``record(n, ok, detail)``."""
    def _record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.setdefault(n, []).append((ok, line))
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        oks, lines = zip(*_ACCEPTANCE[n])
        status = "PASS" if all(oks) else "FAIL"
        details = "; ".join(line.split("  ", 1)[1] for line in lines)
        terminalreporter.write_line(f"criterion {n}: {status}  {details}")
