import pytest

from fieldkind.catalog import BUILTIN_NAMES, all_entries, builtin


@pytest.fixture(scope="session")
def euclid():
    return builtin("euclidean2")


@pytest.fixture(scope="session")
def torus():
    return builtin("flat_torus2")


@pytest.fixture(scope="session")
def sphere():
    return builtin("sphere2")


@pytest.fixture(scope="session")
def hyper():
    return builtin("hyperbolic2")


def catalog_pairs():
    """(entry name, field name) for every catalog field."""
    return [(e.manifold.name, name) for e in all_entries() for name in e.fields]


@pytest.fixture(params=BUILTIN_NAMES)
def entry(request):
    return builtin(request.param)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, text, passed):
        lines.append((number, f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {text}"))
        print(lines[-1][1])

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
