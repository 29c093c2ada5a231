from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from hopflax.mesh import Mesh, disc_mesh_for_dx, gen_disc_mesh, load_triangle_mesh

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def square() -> Mesh:
    """Unit square split along the diagonal (0,0)-(1,1)."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh.from_arrays(v, t)


@pytest.fixture(scope="session")
def small_disc() -> Mesh:
    return gen_disc_mesh(1.0, 0.2)


@pytest.fixture(scope="session")
def jittered_disc() -> Mesh:
    return gen_disc_mesh(1.0, 0.15, jitter=0.15, seed=3)


@pytest.fixture(scope="session")
def oracle_disc() -> Mesh:
    """Radius-2 disc with under 2000 vertices, small enough for full scans."""
    return disc_mesh_for_dx(2.0, 0.14, jitter=0.15, seed=11)


@pytest.fixture(scope="session")
def flower() -> Mesh:
    return load_triangle_mesh(FIXTURES / "flower.node", FIXTURES / "flower.ele",
                              FIXTURES / "flower.neigh")


# --------------------------------------------------------------------------
# acceptance report: one line per criterion, repeated in the terminal summary
# --------------------------------------------------------------------------

RESULTS = Path(__file__).parent.parent / "results"
_ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def report(request):
    """``report(n, ok, text)`` prints and records the verdict of criterion n."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(n: int, ok: bool, text: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE_LINES[n] = line
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        RESULTS.mkdir(exist_ok=True)
        (RESULTS / "acceptance.txt").write_text(
            "\n".join(_ACCEPTANCE_LINES[k] for k in sorted(_ACCEPTANCE_LINES)) + "\n")

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[k])
