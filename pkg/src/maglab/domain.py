"""The regular octagon fundamental domain and quadrature over it.

The octagon is the Dirichlet domain of the deck group about the origin:
eight geodesic sides, each the bisector between 0 and a generator translate
of 0.  The domain is star-shaped about the center, so integration uses a
fan of curved triangular sectors (center, two adjacent vertices, geodesic
outer edge) with tensor Gauss-Legendre rules in angle and radius, plus one
refinement level for an error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError
from .surface import SYSTOLE, FuchsianGroup, hyperbolic_distance

#: Hyperbolic distance from the center to each side midpoint (half systole).
INRADIUS = SYSTOLE / 2.0
#: Hyperbolic distance from the center to each vertex.
CIRCUMRADIUS = math.acosh(3.0 + 2.0 * math.sqrt(2.0))
#: Gauss-Bonnet area of the genus-2 surface.
SURFACE_AREA = 4.0 * math.pi


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    accuracy_warning: bool

    def __float__(self) -> float:
        return self.value


class FundamentalDomain:
    """Regular octagon about 0 with precomputed quadrature nodes."""

    def __init__(self, group: FuchsianGroup, order: int = 24, tol: float = 1e-6):
        self.group = group
        self.order = order
        self.tol = tol
        self.inradius = INRADIUS
        self.circumradius = CIRCUMRADIUS

        # Side k is the geodesic orthogonal to direction k*pi/4 at the
        # Euclidean apothem; its supporting circle is centered at
        # s*e^{i k pi/4} with radius sqrt(s^2 - 1).
        m = math.tanh(INRADIUS / 2.0)
        self._side_center_dist = (1.0 + m * m) / (2.0 * m)
        self._side_radius = math.sqrt(self._side_center_dist**2 - 1.0)
        self.side_angles = np.array([k * math.pi / 4.0 for k in range(8)])
        self.side_centers = self._side_center_dist * np.exp(1j * self.side_angles)

        rv = 2.0 ** -0.25  # Euclidean vertex radius
        self.vertices = np.array(
            [rv * np.exp(1j * (math.pi / 8.0 + k * math.pi / 4.0)) for k in range(8)])
        for k in range(8):
            for vk in (k, (k - 1) % 8):
                gap = abs(abs(self.vertices[vk] - self.side_centers[k]) - self._side_radius)
                if gap > 1e-12:
                    raise ConstructionError("octagon vertices do not lie on side circles")

        self.triangles = [(0j, self.vertices[k - 1], self.vertices[k]) for k in range(8)]
        self._rules = {0: self._build_rule(1), 1: self._build_rule(2)}

    # -- geometry --------------------------------------------------------

    def boundary_radius(self, theta: np.ndarray) -> np.ndarray:
        """Euclidean radius of the octagon boundary in direction theta."""
        theta = np.asarray(theta, dtype=float)
        k = np.round(theta / (math.pi / 4.0)).astype(int) % 8
        dt = theta - self.side_angles[k]
        s = self._side_center_dist
        c = s * np.cos(dt)
        return c - np.sqrt(c * c - 1.0)

    def contains(self, z, tol: float = 1e-12):
        z = np.asarray(z, dtype=complex)
        dist_to_centers = np.abs(z[..., None] - self.side_centers)
        return np.all(dist_to_centers >= self._side_radius - tol, axis=-1)

    def vertex_angles(self) -> np.ndarray:
        """Interior angle at each vertex, from the side-circle tangents."""
        angles = []
        for k in range(8):
            v = self.vertices[k]
            t1 = 1j * (v - self.side_centers[k])
            t2 = 1j * (v - self.side_centers[(k + 1) % 8])
            cosang = abs(np.real(t1 * np.conj(t2))) / (abs(t1) * abs(t2))
            angles.append(math.acos(min(1.0, cosang)))
        return np.array(angles)

    # -- quadrature --------------------------------------------------------

    def _build_rule(self, split: int):
        """Tensor Gauss-Legendre nodes/weights over the 8 sectors.

        `split` subdivides each sector in angle and each ray in radius.
        Weights include the hyperbolic area element 4 rho/(1 - rho^2)^2.
        """
        gx, gw = np.polynomial.legendre.leggauss(self.order)
        nodes = []
        weights = []
        for k in range(8):
            lo = self.side_angles[k] - math.pi / 8.0
            hi = self.side_angles[k] + math.pi / 8.0
            edges = np.linspace(lo, hi, split + 1)
            for e0, e1 in zip(edges[:-1], edges[1:]):
                th = 0.5 * (e1 - e0) * gx + 0.5 * (e1 + e0)
                wth = 0.5 * (e1 - e0) * gw
                rb = self.boundary_radius(th)
                for j in range(self.order):
                    redges = np.linspace(0.0, rb[j], split + 1)
                    for r0, r1 in zip(redges[:-1], redges[1:]):
                        rr = 0.5 * (r1 - r0) * gx + 0.5 * (r1 + r0)
                        wr = 0.5 * (r1 - r0) * gw
                        nodes.append(rr * np.exp(1j * th[j]))
                        weights.append(wth[j] * wr * 4.0 * rr / (1.0 - rr * rr) ** 2)
        return np.concatenate(nodes), np.concatenate(weights)

    def quadrature_nodes(self, level: int = 1):
        return self._rules[level]

    def integrate(self, integrand, level: int = 1) -> QuadratureResult:
        """Integrate a vectorized callable against the hyperbolic area element."""
        vals = {}
        for lev in (0, level) if level != 0 else (0,):
            nodes, weights = self._rules[lev]
            vals[lev] = float(np.dot(weights, np.asarray(integrand(nodes), dtype=float)))
        if level == 0:
            return QuadratureResult(vals[0], math.nan, False)
        err = abs(vals[level] - vals[0])
        return QuadratureResult(vals[level], err, err > self.tol)


def domain_quadrature(domain: FundamentalDomain, integrand, level: int = 1) -> QuadratureResult:
    """Integral of `integrand` over the octagon against dvol of the
    curvature -1 metric."""
    return domain.integrate(integrand, level=level)
