import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kaefam import BackgroundForm, Family  # noqa: E402


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    potential: str
    H: tuple  # (tt, zz, tz)
    tau: complex
    base_points: tuple
    strictly_positive: bool

    def family(self, N=64) -> Family:
        return Family.from_text(self.potential, BackgroundForm(*self.H), N=N, tau=self.tau)


RE_FAMILY = "0.1*re(t)*cosm(1,0)"
RICH = (
    "0.5*abs2(t) + 0.05*re(t)*sinm(1,1) + 0.03*im(t)*cosm(0,1) + 0.02*abs2(t)*cosm(1,2)"
)
STIFF = "0.0054*re(t)*cosm(6,0)"

CORPUS = (
    CorpusEntry("flat", "0", (1.0, 1.0, 0j), 1j, (0j, 0.3 + 0.2j), True),
    CorpusEntry("degenerate", "0", (0.0, 1.0, 0j), 1j, (0j,), False),
    CorpusEntry("re_family", RE_FAMILY, (1.0, 1.0, 0j), 1j, (0j, 0.2 + 0j, 0.4j), True),
    CorpusEntry("rich", RICH, (1.0, 1.0, 0j), 1j, (0j, 0.2 - 0.1j), True),
    CorpusEntry(
        "skew",
        "0.1*re(t)*cosm(1,0) + 0.04*im(t)*sinm(0,1)",
        (1.0, 0.8, 0.2 + 0.1j),
        0.3 + 1.2j,
        (0j, 0.1 + 0.2j),
        True,
    ),
    CorpusEntry("stiff", STIFF, (1.0, 1.0, 0j), 1j, (0.5 + 0j,), True),
)


@pytest.fixture(params=CORPUS, ids=lambda e: e.name)
def corpus_entry(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
