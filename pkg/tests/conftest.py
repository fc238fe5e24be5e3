import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gradsub import _kernels, matcore  # noqa: E402

BACKENDS = ["python"] + (["compiled"] if _kernels.compiled_sweeps is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available Jacobi kernel."""
    sweeps = _kernels.python_sweeps if request.param == "python" else _kernels.compiled_sweeps
    monkeypatch.setattr(matcore, "_sweeps", sweeps)
    return request.param


# acceptance criteria append (number, passed, detail) here; printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
