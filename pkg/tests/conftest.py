import numpy as np
import pytest

from sais_awareness.allocation import CostModel, assemble_sdp
from sais_awareness.dynamics import SaisParams
from sais_awareness.graph import generate

ACCEPTANCE_LINES = []


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def connected_er(n, p, seed):
    """First connected ER graph found from ``seed`` upwards."""
    for s in range(seed, seed + 1000):
        g = generate("erdos_renyi", n, s, p=p)
        if g.is_connected():
            return g
    raise RuntimeError("no connected graph found")


def random_params(rng, g, *, stress=(1.1, 2.0), r=(0.1, 0.4), kappa=0.0):
    """Heterogeneous rates with ``beta_i ~ stress_i * delta_i / lambda1(A)``."""
    n = g.n
    lam = max(float(np.linalg.eigvalsh(g.adjacency())[-1]), 1.0)
    delta = rng.uniform(0.5, 1.5, n)
    beta = rng.uniform(*stress, n) * delta / lam
    return SaisParams.create(n, beta, delta, kappa, rng.uniform(*r, n))


def random_instance(seed, n=30, p=0.2):
    """ER allocation instance whose cheapest rates are generally unsafe."""
    rng = np.random.default_rng(seed)
    g = generate("erdos_renyi", n, seed, p=p)
    params = random_params(rng, g)
    ku = rng.uniform(5.0, 20.0, n) * params.beta
    cost = CostModel.for_params(params, rng.uniform(0.5, 2.0, n), 0.0, ku)
    return g, params, cost, assemble_sdp(g, params, cost)


@pytest.fixture
def k3_instance():
    g = generate("complete", 3)
    params = SaisParams.create(3, 1.0, 1.0, 0.0, 0.25)
    cost = CostModel.for_params(params, 1.0, 0.0, 1.0)
    return g, params, cost
