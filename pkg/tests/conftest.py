import pytest

from cpwq.materials import Materials
from cpwq.mtl import CouplerModel
from cpwq.netsolver import NetworkSpec

UM = 1e-6
PAPER_LENGTHS = dict(l_c=400 * UM, l_s=3600 * UM, l_o=1000 * UM)


@pytest.fixture(scope="session")
def paper_mat():
    return Materials.from_epsilon_eff(6.225)


def make_spec(case="a", kappa=0.02, Z1=48.29, Z2=50.19, Z_r=50.19, Z_i=None, Z_o=None,
              l_c=400 * UM, l_s=3600 * UM, l_o=1000 * UM, epsilon_eff=6.225):
    c_l = Materials.from_epsilon_eff(epsilon_eff).c_l
    cp = CouplerModel(Z1, Z2, kappa, l_c, c_l)
    Z_i = Z1 if Z_i is None else Z_i
    Z_o = Z1 if Z_o is None else Z_o
    return NetworkSpec.for_case(case, cp, Z_r, l_s, l_o, Z_i, Z_o)


# one line per acceptance criterion, printed after the test run
ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
