"""
Model problems with known data: the smooth clamped-plate solution on the unit
square, the centre point load and the zero load.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.models.sources import PointLoad, SourceSpec
from src.models.spaces import ClosedForm

# p(t) = t²(1 - t)² = t² - 2t³ + t⁴ and its derivatives, lowest power first
P = np.array([0.0, 0.0, 1.0, -2.0, 1.0])
DP = np.array([0.0, 2.0, -6.0, 4.0])
D2P = np.array([2.0, -12.0, 12.0])
D4P = 24.0


@dataclass
class ManufacturedCase:
    """A load together with its exact solution when one is known."""

    name: str
    source: SourceSpec
    exact: Optional[ClosedForm] = None
    domain: str = "square"


def _poly(coefficients, t):
    return np.polynomial.polynomial.polyval(t, coefficients)


def plate_value(x, y):
    return _poly(P, x) * _poly(P, y)


def plate_gradient(x, y):
    return np.stack([_poly(DP, x) * _poly(P, y), _poly(P, x) * _poly(DP, y)], axis=-1)


def plate_hessian(x, y):
    xx = _poly(D2P, x) * _poly(P, y)
    xy = _poly(DP, x) * _poly(DP, y)
    yy = _poly(P, x) * _poly(D2P, y)
    return np.stack([np.stack([xx, xy], axis=-1), np.stack([xy, yy], axis=-1)], axis=-2)


def plate_load(x, y):
    """Δ²u = 24 p(x) + 2 p''(x) p''(y) + 24 p(y)."""
    return D4P * (_poly(P, x) + _poly(P, y)) + 2.0 * _poly(D2P, x) * _poly(D2P, y)


def manufactured_square():
    """u(x, y) = (x(1 - x) y(1 - y))² on the unit square with f = Δ²u."""
    exact = ClosedForm(plate_value, plate_gradient, plate_hessian)
    return ManufacturedCase("manufactured", SourceSpec.l2(plate_load, name="manufactured"), exact, "square")


def center_point_load(intensity=1.0, center=(0.5, 0.5)):
    """Point force at an interior vertex; no closed-form solution."""
    source = SourceSpec(point_loads=[PointLoad(tuple(center), float(intensity))], name="center_point")
    return ManufacturedCase("center_point", source, None, "square")


def zero_case(domain="square"):
    zero = ClosedForm(lambda x, y: np.zeros_like(x),
                      lambda x, y: np.zeros(np.shape(x) + (2,)),
                      lambda x, y: np.zeros(np.shape(x) + (2, 2)))
    return ManufacturedCase("zero", SourceSpec.zero(), zero, domain)


def general_case(source, domain="square"):
    return ManufacturedCase(source.name, source, None, domain)
