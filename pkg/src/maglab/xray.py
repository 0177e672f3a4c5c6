"""Tensor X-ray transforms along closed magnetic geodesics, and the coupled
potential/divergence operators.

I_2 integrates p(v, v) + q(v) over the closed orbit of a class; I_1 does
the same for a (1-form, function) pair.  The potential operator sends
(xi, phi) to [D xi, Y xi + d phi] with D the symmetrized covariant
derivative and (Y xi)(v) = xi(Y v); its image integrates to zero along
every closed orbit (the transform kernel always contains potential pairs).
The divergence sends [p, q] to [-tr(grad p) - Y q, -tr(grad q)], the
formal adjoint of the potential operator for the L2 pairings; traces are
taken with the metric over an orthonormal frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import QuadratureResult
from .dynamics import MagneticSystem, _BatchFlow
from .errors import InputError
from .fields import ConformalMetric, OneFormField, ScalarField, SymTensorField
from .jets import Jet
from .orbits import ClosedOrbit


@dataclass
class TensorPair:
    """Coupled (symmetric 2-tensor, 1-form) datum of the order-2 transform."""

    p: object  # SymTensorField or derived evaluator with component_jets
    q: object  # OneFormField or derived evaluator

    @staticmethod
    def zero() -> "TensorPair":
        return TensorPair(SymTensorField.zero(), OneFormField.zero())


@dataclass
class PotentialPair:
    xi: OneFormField
    phi: ScalarField


def _require_orbit(sys: MagneticSystem, orbit: ClosedOrbit) -> None:
    if orbit.system_id != sys.system_id:
        raise InputError("orbit was computed for a different system")
    if not orbit.refined or orbit.z_samples is None:
        raise InputError("X-ray transforms require a refined orbit with samples")


def _simpson(y: np.ndarray, h: float) -> float:
    n = y.size - 1
    if n % 2:
        raise InputError("Simpson rule needs an even interval count")
    return float((h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum()
                              + 2.0 * y[2:-1:2].sum()))


def _pull_p(p, z, v) -> np.ndarray:
    if hasattr(p, "evaluate_on"):
        return p.evaluate_on(z, v)
    p11, p12, p22 = (j.value for j in p.component_jets(z, 0))
    return p11 * v.real**2 + 2.0 * p12 * v.real * v.imag + p22 * v.imag**2


def _pull_q(q, z, v) -> np.ndarray:
    if hasattr(q, "evaluate_on"):
        return q.evaluate_on(z, v)
    q1, q2 = (j.value for j in q.component_jets(z, 0))
    return q1 * v.real + q2 * v.imag


def xray_I2(sys: MagneticSystem, pair: TensorPair, orbit: ClosedOrbit) -> float:
    """Integral of p(v,v) + q(v) over the closed orbit of the class."""
    _require_orbit(sys, orbit)
    z, v = orbit.z_samples, orbit.v_samples
    h = float(orbit.times[1] - orbit.times[0])
    integrand = _pull_p(pair.p, z, v) + _pull_q(pair.q, z, v)
    return _simpson(integrand, h)


def xray_I1(sys: MagneticSystem, pair: tuple[OneFormField, ScalarField],
            orbit: ClosedOrbit) -> float:
    """Integral of q(v) + phi over the closed orbit."""
    _require_orbit(sys, orbit)
    q, phi = pair
    z, v = orbit.z_samples, orbit.v_samples
    h = float(orbit.times[1] - orbit.times[0])
    integrand = _pull_q(q, z, v) + phi.values(z)
    return _simpson(integrand, h)


# ---------------------------------------------------------------------------
# The coupled operators
# ---------------------------------------------------------------------------


class _PotentialSymTensor:
    """D xi, the symmetrized covariant derivative, as a field evaluator."""

    def __init__(self, sys: MagneticSystem, xi: OneFormField):
        self.sys = sys
        self.xi = xi

    def component_jets(self, z, order: int):
        z = np.asarray(z, dtype=complex).ravel()
        x1, x2 = self.xi.component_jets(z, order + 1)
        pj = self.sys.metric.phi_jet(z, order + 1)
        px, py = pj.dx(), pj.dy()
        x1l, x2l = x1.truncated(order), x2.truncated(order)
        p11 = x1.dx() - (px * x1l - py * x2l)
        p12 = (x1.dy() + x2.dx()) * 0.5 - (py * x1l + px * x2l)
        p22 = x2.dy() - (-px * x1l + py * x2l)
        return p11, p12, p22

    def values(self, z):
        return tuple(j.value for j in self.component_jets(z, 0))

    def evaluate_on(self, z, vec):
        p11, p12, p22 = self.values(z)
        vec = np.asarray(vec, dtype=complex)
        x, y = vec.real, vec.imag
        return p11 * x * x + 2.0 * p12 * x * y + p22 * y * y


class _LorentzPlusExact:
    """Y xi + d phi as a 1-form evaluator; (Y xi)(v) = xi(Y v) = b xi(J v)."""

    def __init__(self, sys: MagneticSystem, xi: OneFormField, phi: ScalarField):
        self.sys = sys
        self.xi = xi
        self.phi = phi

    def _b_jet(self, z, order: int) -> Jet:
        z = np.asarray(z, dtype=complex).ravel()
        sys = self.sys
        if sys.prescribed_b is not None:
            return Jet.const(np.full(z.size, sys.prescribed_b), order, z.size)
        if sys.alpha.is_zero():
            return Jet.zero(order, z.size)
        return sys.alpha.curl_jet(z, order) * sys.metric.lam2_jet(z, order).reciprocal()

    def component_jets(self, z, order: int):
        z = np.asarray(z, dtype=complex).ravel()
        x1, x2 = self.xi.component_jets(z, order)
        b = self._b_jet(z, order)
        out1 = b * x2
        out2 = -(b * x1)
        ph = self.phi.jet(z, order + 1)
        out1 = out1 + ph.dx()
        out2 = out2 + ph.dy()
        return out1, out2

    def values(self, z):
        a1, a2 = self.component_jets(z, 0)
        return a1.value, a2.value

    def evaluate_on(self, z, vec):
        a1, a2 = self.values(z)
        vec = np.asarray(vec, dtype=complex)
        return a1 * vec.real + a2 * vec.imag


def d_mu(sys: MagneticSystem, pp: PotentialPair) -> TensorPair:
    """Magnetic potential operator: (xi, phi) -> [D xi, Y xi + d phi]."""
    return TensorPair(_PotentialSymTensor(sys, pp.xi),
                      _LorentzPlusExact(sys, pp.xi, pp.phi))


class DivergenceValues:
    """Pointwise evaluator of the magnetic divergence of a tensor pair."""

    def __init__(self, sys: MagneticSystem, pair: TensorPair):
        self.sys = sys
        self.pair = pair

    def values(self, z):
        """Returns (m1, m2, s): the 1-form components and the scalar part."""
        sys = self.sys
        z = np.asarray(z, dtype=complex).ravel()
        p11, p12, p22 = self.pair.p.component_jets(z, 1)
        q1, q2 = self.pair.q.component_jets(z, 1)
        gam = sys.metric.christoffels(z)
        lam2 = sys.metric.lam2_jet(z, 0).value
        b = sys.b_values(z)

        pv = [[p11.value, p12.value], [p12.value, p22.value]]
        dp = [[[p.deriv(1, 0), p.deriv(0, 1)] for p in row]
              for row in ((p11, p12), (p12, p22))]
        qv = [q1.value, q2.value]
        dq = [[q1.deriv(1, 0), q1.deriv(0, 1)], [q2.deriv(1, 0), q2.deriv(0, 1)]]

        # (tr grad p)_j = g^{ik} grad_i p_{kj}
        trp = []
        for j in range(2):
            acc = 0.0
            for i in range(2):
                term = dp[i][j][i]
                for m in range(2):
                    term = term - gam[m, i, i] * pv[m][j] - gam[m, i, j] * pv[i][m]
                acc = acc + term
            trp.append(acc / lam2)
        trq = 0.0
        for i in range(2):
            term = dq[i][i]
            for m in range(2):
                term = term - gam[m, i, i] * qv[m]
            trq = trq + term
        trq = trq / lam2

        m1 = -trp[0] - b * qv[1]
        m2 = -trp[1] + b * qv[0]
        s = -trq
        return m1, m2, s


def d_mu_star(sys: MagneticSystem, pair: TensorPair) -> DivergenceValues:
    """Magnetic divergence: [p, q] -> [-tr(grad p) - Y q, -tr(grad q)]."""
    return DivergenceValues(sys, pair)


# ---------------------------------------------------------------------------
# Identities and norms
# ---------------------------------------------------------------------------


def flow_identity_check(sys: MagneticSystem, pp: PotentialPair, phase_z, phase_v,
                        step: float = 1e-4) -> float:
    """Max defect of d/dt[xi(v) + phi] = (D xi)(v,v) + (Y xi + d phi)(v)
    along the flow, the time derivative taken by centered differences."""
    Z = np.asarray(phase_z, dtype=complex).ravel()
    V = np.asarray(phase_v, dtype=complex).ravel()
    lam = sys.metric.lam_values(Z)
    V = V / (lam * np.abs(V))
    pair = d_mu(sys, pp)
    lhs = pair.p.evaluate_on(Z, V) + pair.q.evaluate_on(Z, V)

    def u_of(bf) -> np.ndarray:
        a1, a2 = pp.xi.values(bf.Z)
        return a1 * bf.V.real + a2 * bf.V.imag + pp.phi.values(bf.Z)

    micro = 8
    fwd = _BatchFlow(sys, Z, V, np.full(Z.size, step), micro).run()
    bwd = _BatchFlow(sys, Z, V, np.full(Z.size, -step), micro).run()
    rhs = (u_of(fwd) - u_of(bwd)) / (2.0 * step)
    return float(np.max(np.abs(lhs - rhs)))


def pair_inner(sys: MagneticSystem, A: TensorPair, B: TensorPair,
               level: int = 1) -> QuadratureResult:
    """L2 inner product of tensor pairs over the surface."""

    def integrand(z):
        lam2 = sys.metric.lam2_jet(z, 0).value
        ef2 = lam2 * (1.0 - np.abs(z) ** 2) ** 2 / 4.0  # e^{2f}, area factor
        a11, a12, a22 = (j.value for j in A.p.component_jets(z, 0))
        b11, b12, b22 = (j.value for j in B.p.component_jets(z, 0))
        qa1, qa2 = (j.value for j in A.q.component_jets(z, 0))
        qb1, qb2 = (j.value for j in B.q.component_jets(z, 0))
        pp = (a11 * b11 + 2.0 * a12 * b12 + a22 * b22) / lam2**2
        qq = (qa1 * qb1 + qa2 * qb2) / lam2
        return (pp + qq) * ef2

    return sys.domain.integrate(integrand, level=level)


def potential_inner(sys: MagneticSystem, pp: PotentialPair,
                    div: DivergenceValues, level: int = 1) -> QuadratureResult:
    """L2 pairing of a potential pair with a divergence output."""

    def integrand(z):
        lam2 = sys.metric.lam2_jet(z, 0).value
        ef2 = lam2 * (1.0 - np.abs(z) ** 2) ** 2 / 4.0
        x1, x2 = pp.xi.values(z)
        ph = pp.phi.values(z)
        m1, m2, s = div.values(z)
        return ((x1 * m1 + x2 * m2) / lam2 + ph * s) * ef2

    return sys.domain.integrate(integrand, level=level)


def solenoidal_defect(sys: MagneticSystem, pair: TensorPair,
                      level: int = 1) -> float:
    """L2 norm of the magnetic divergence; zero certifies a solenoidal pair."""
    div = DivergenceValues(sys, pair)

    def integrand(z):
        lam2 = sys.metric.lam2_jet(z, 0).value
        ef2 = lam2 * (1.0 - np.abs(z) ** 2) ** 2 / 4.0
        m1, m2, s = div.values(z)
        return ((m1 * m1 + m2 * m2) / lam2 + s * s) * ef2

    return math.sqrt(max(0.0, sys.domain.integrate(integrand, level=level).value))


def c1_norm_oneform(sys: MagneticSystem, xi: OneFormField) -> float:
    """sup of the pointwise g-norms of xi and of its covariant derivative,
    over the quadrature grid."""
    z, _ = sys.domain.quadrature_nodes(level=0)
    x1, x2 = xi.component_jets(z, 1)
    gam = sys.metric.christoffels(z)
    lam2 = sys.metric.lam2_jet(z, 0).value
    xv = [x1.value, x2.value]
    dx = [[x1.deriv(1, 0), x1.deriv(0, 1)], [x2.deriv(1, 0), x2.deriv(0, 1)]]
    sup0 = float(np.max(np.sqrt((xv[0] ** 2 + xv[1] ** 2) / lam2)))
    acc = 0.0
    for i in range(2):
        for j in range(2):
            nab = dx[j][i]
            for m in range(2):
                nab = nab - gam[m, i, j] * xv[m]
            acc = acc + nab**2
    sup1 = float(np.max(np.sqrt(acc) / lam2))
    return max(sup0, sup1)


def c1_norm_scalar(sys: MagneticSystem, phi: ScalarField) -> float:
    z, _ = sys.domain.quadrature_nodes(level=0)
    pj = phi.jet(z, 1)
    grad = np.sqrt((pj.deriv(1, 0) ** 2 + pj.deriv(0, 1) ** 2)
                   / sys.metric.lam2_jet(z, 0).value)
    return max(float(np.max(np.abs(pj.value))), float(np.max(grad)))
