import math

import pytest

from bosecool.bath_rates import BathSpec, compute_rates
from bosecool.coarse_dynamics import CoarseModel, CoarseProjector
from bosecool.fock_basis import build_basis
from bosecool.vacua import VacuumStructure


class Bundle:
    def __init__(self, N, L_max, eta=0.1, beta_hw=math.log(2), beta_mu=0.0):
        self.basis = build_basis(N, L_max)
        self.structure = VacuumStructure(self.basis)
        self.ops = self.structure.ops
        self.projector = CoarseProjector(self.structure)
        self.spec = BathSpec(N, eta, beta_hw, beta_mu).with_gamma_down(1.0)
        self.rates = compute_rates(self.spec)
        self.model = CoarseModel.from_structure(self.structure, self.rates)


@pytest.fixture(scope="session")
def make_bundle():
    cache = {}

    def get(*args, **kw):
        key = args + tuple(sorted(kw.items()))
        if key not in cache:
            cache[key] = Bundle(*args, **kw)
        return cache[key]

    return get


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
