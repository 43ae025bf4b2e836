import hypothesis
import numpy as np
import pytest

from coopgain.channel import Independent, JointConditional, make_builtin, marginalize_state

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def mod3():
    return make_builtin("mod3_adder")


@pytest.fixture(scope="session")
def mod3_marg(mod3):
    return marginalize_state(mod3)


@pytest.fixture(scope="session")
def identity():
    return make_builtin("trivial_identity")


@pytest.fixture(scope="session")
def uniform2():
    return Independent(np.array([0.5, 0.5]), np.array([0.5, 0.5]))


@pytest.fixture(scope="session")
def log3_joint():
    """State-independent joint on the mod-3 adder that reaches log2(3)."""
    J = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    return JointConditional(np.broadcast_to(J, (3, 1, 2, 2)).copy())


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Collect acceptance lines; tests record each check before asserting it."""

    class Rec:
        def __init__(self):
            self.lines = []

        def __call__(self, label, ok, detail=""):
            self.lines.append((label, ok, detail))

    rec = Rec()
    try:
        yield rec
    finally:
        for label, ok, detail in rec.lines:
            _VERDICTS.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
