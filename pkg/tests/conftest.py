import pytest

from dufs.graph import from_edge_pairs

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance():
    """Record (and print) a criterion outcome; the caller still asserts."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append((number, bool(ok), detail))
        return ok

    return record


@pytest.fixture
def star():
    # centre 0 with four leaves, edges in both directions
    pairs = [(0, k) for k in range(1, 5)] + [(k, 0) for k in range(1, 5)]
    return from_edge_pairs(pairs)


@pytest.fixture
def ring20():
    """Connected, symmetric, non-regular 20-node graph: a ring with chords."""
    pairs = [(i, (i + 1) % 20) for i in range(20)]
    pairs += [(0, 10), (0, 5), (3, 15), (7, 12), (7, 17), (2, 9)]
    return from_edge_pairs(pairs, symmetrize=True)
