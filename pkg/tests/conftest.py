import numpy as np
import pytest

from fsbp.funcspace import parse_space
from fsbp.operators import construct
from fsbp.quadrature import rule_for

# Printed reference operators on [-1, 1], rounded to two decimals.
GOLDEN = {
    "poly": dict(
        space="poly:d=2", grid=("lobatto", 3),
        x=[-1, 0, 1],
        p=[1 / 3, 4 / 3, 1 / 3],
        D1=[[-1.5, 2, -0.5], [-0.5, 0, 0.5], [0.5, -2, 1.5]],
        D2=[[1, -2, 1], [1, -2, 1], [1, -2, 1]],
    ),
    "trig": dict(
        space="trig:d=1", grid=("equi", 4),
        x=[-1, -1 / 3, 1 / 3, 1],
        p=[1 / 3, 2 / 3, 2 / 3, 1 / 3],
        D1=[[-1.50, 1.81, -1.81, 1.50],
            [-0.91, 0, 1.81, -0.91],
            [0.91, -1.81, 0, 0.91],
            [-1.50, 1.81, -1.81, 1.50]],
        D2=[[-3.29, 3.29, 3.29, -3.29],
            [4.37, -6.58, 3.29, -1.08],
            [-1.08, 3.29, -6.58, 4.37],
            [-3.29, 3.29, 3.29, -3.29]],
    ),
    "exp": dict(
        space="exp:d=2", grid=("equi", 5),
        x=[-1, -0.5, 0, 0.5, 1],
        p=[0.14, 0.77, 0.19, 0.75, 0.15],
        D1=[[-3.64, 4.97, -0.48, -1.38, 0.53],
            [-0.88, 0, 0.41, 0.72, -0.24],
            [0.35, -1.65, 0, 1.56, -0.25],
            [0.25, -0.74, -0.40, 0, 0.88],
            [-0.50, 1.27, 0.33, -4.5, 3.39]],
        D2=[[8.07, -15.59, 4.53, 5.42, -2.43],
            [3.66, -5.91, 0.06, 2.95, -0.77],
            [0.72, 0.25, -1.55, -0.51, 1.09],
            [-0.84, 3.03, -0.13, -5.47, 3.41],
            [-2.02, 4.61, 3.68, -13.13, 6.85]],
    ),
    "rbf": dict(
        space="rbf:alpha=1", grid=("equi", 5),
        x=[-1, -0.5, 0, 0.5, 1],
        p=[0.20, 0.58, 0.44, 0.58, 0.20],
        D1=[[-2.45, 3.13, -0.57, -0.45, 0.35],
            [-1.11, 0, 1.16, 0.10, -0.16],
            [0.27, -1.54, 0, 1.54, -0.27],
            [0.16, -0.10, -1.16, 0, 1.11],
            [-0.35, 0.45, 0.57, -3.13, 2.45]],
        D2=[[2.17, -6.56, 5.77, -0.53, -0.85],
            [3.10, -5.34, 0.42, 2.79, -0.97],
            [1.39, 0.56, -3.89, 0.56, 1.39],
            [-0.97, 2.79, 0.42, -5.34, 3.10],
            [-0.85, -0.53, 5.77, -6.56, 2.17]],
    ),
}


def build_golden(name):
    g = GOLDEN[name]
    space = parse_space(g["space"])
    family, n = g["grid"]
    return space, construct(space, rule_for(space, family, n))


@pytest.fixture(scope="session")
def golden_ops():
    return {name: build_golden(name) for name in GOLDEN}


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


# {{{ acceptance summary

ACCEPTANCE_LINES = {}


def record_acceptance(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

# }}}
