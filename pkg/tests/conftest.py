from pathlib import Path

import numpy as np
import pytest
from PIL import Image

FIXTURES = Path(__file__).parent / "fixtures"


def write_png(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


@pytest.fixture
def png_tree(tmp_path):
    """Build a four-directory tree; counts maps (split, label) -> n images."""

    def build(counts, size=32, seed=0):
        rng = np.random.default_rng(seed)
        for s in ("train", "test"):
            for lab in ("FAKE", "REAL"):
                d = tmp_path / "data" / s / lab
                d.mkdir(parents=True, exist_ok=True)
                for i in range(counts.get((s, lab), 0)):
                    write_png(d / f"{lab.lower()}_{i:03d}.png",
                              rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8))
        return tmp_path / "data"

    return build


# PASS/FAIL lines recorded by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
