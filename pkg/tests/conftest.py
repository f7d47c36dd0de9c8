import logging

import numpy as np
import pytest

from semigroup_lab.coeffs import PolynomialFamilyParams, polynomial_family


def family_params(k=0.0, p=1.0, r=0.0, gamma=1.0, d=1, m=2):
    B0 = np.zeros((d, m, m))
    for j in range(d):
        B0[j, 0, 1], B0[j, 1, 0] = 1.0, -1.0
    return PolynomialFamilyParams(d=d, m=m, k=k, p=p, r=r, gamma=gamma, Q0=np.eye(d), B0=tuple(B0), C0=np.eye(m))


def family_doc(k=0.0, p=1.0, r=0.0, gamma=1.0, d=1, m=2) -> dict:
    return family_params(k, p, r, gamma, d, m).to_json()


@pytest.fixture
def test_operator():
    """The (k, p, r, gamma) = (0, 1, 0, 1) operator with m = 2 in one dimension."""
    return polynomial_family(family_params())


@pytest.fixture(autouse=True)
def _quiet_unchecked_warning(caplog):
    caplog.set_level(logging.ERROR, logger="semigroup_lab.semigroup")
