import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latinlam.kernels import ElementBlock, Material
from latinlam.mesh import generate_laminate_mesh

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

E = 135000.0


@pytest.fixture
def steel_like():
    return Material.isotropic(E, 0.3)


def small_block(order=2, elements=(2, 1, 1), material=None, dims=(2.0, 1.0, (0.5,))):
    mesh = generate_laminate_mesh(dims[0], dims[1], dims[2], elements, order=order)
    return ElementBlock(mesh.nodes.copy(), mesh.elements.copy(), order, material or Material.isotropic(E, 0.3))


def rotation(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


# --------------------------------------------------------------- acceptance report

ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record (and print) a criterion's verdict, then fail the test if it is red."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line, flush=True)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
