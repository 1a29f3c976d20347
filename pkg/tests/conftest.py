import numpy as np
import pytest

from selfdual import (GradConvex, LinearPositive, MonotoneGraph,
                      SampledOperator, SkewPlusGrad, SumFormLagrangian,
                      PowerNorm, Quadratic, quadratic_identity)
from selfdual.catalog import rotation_matrix


@pytest.fixture(scope="session")
def rot2():
    return rotation_matrix()


@pytest.fixture(scope="session")
def L_quad():
    """L(x, p) = x^2/2 + p^2/2, the selfdual potential of the identity."""
    return SumFormLagrangian(quadratic_identity(1))


@pytest.fixture(scope="session")
def L_quartic():
    """Potential of x -> x^3 through phi(x) = x^4 / 4."""
    return SumFormLagrangian(PowerNorm(4, 1.0))


@pytest.fixture(scope="session")
def L_skew(rot2):
    """Potential of x -> x + Gamma x with the rotation skew matrix."""
    return SumFormLagrangian(quadratic_identity(2), rot2)


@pytest.fixture(scope="session")
def L_linpos():
    """Potential of the positive matrix B = [[1, -1], [1, 1]]."""
    B = np.array([[1.0, -1.0], [1.0, 1.0]])
    return SumFormLagrangian(Quadratic(0.5 * (B + B.T)), 0.5 * (B - B.T))


@pytest.fixture(scope="session")
def analytic_catalog(L_quad, L_quartic, L_skew, L_linpos):
    return {"quad": L_quad, "quartic": L_quartic, "skew": L_skew,
            "linpos": L_linpos}


@pytest.fixture(scope="session")
def operator_catalog(rot2):
    from selfdual import AbsValue, SumFn
    B = np.array([[1.0, -1.0], [1.0, 1.0]])
    return {
        "identity": GradConvex(quadratic_identity(1)),
        "quartic": GradConvex(PowerNorm(4, 1.0)),
        "rotation_plus_id": SkewPlusGrad(rot2, quadratic_identity(2)),
        "linpos": LinearPositive(B),
        "abs": GradConvex(AbsValue(1.0)),
    }


@pytest.fixture(scope="session")
def identity_graph():
    ys = np.linspace(-2.0, 2.0, 81)
    return MonotoneGraph(ys, ys)


@pytest.fixture(scope="session")
def abs_graph():
    ys = np.linspace(-2.0, 2.0, 41)
    xs = np.concatenate([ys[ys != 0], np.zeros(21)])
    ps = np.concatenate([np.sign(ys[ys != 0]), np.linspace(-1, 1, 21)])
    return MonotoneGraph(xs, ps)


@pytest.fixture(scope="session")
def pipeline_potential(identity_graph):
    """potential_for on the sampled identity graph (validated once)."""
    from selfdual import potential_for
    return potential_for(SampledOperator(identity_graph))
