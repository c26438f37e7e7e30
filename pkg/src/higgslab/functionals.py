"""Yang-Mills-Higgs energy, Hermitian-Einstein residual and Chern-Weil integrals."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .bundle import (
    Connection,
    HiggsField,
    covariant_derivative,
    curvature,
    frob2,
    pointwise_norm2,
    theta_bracket,
)


def higgs_curvature(A: Connection, theta: HiggsField, F: np.ndarray | None = None) -> np.ndarray:
    """``F_A + [theta, theta^*]`` as a real 2-form."""
    F = curvature(A) if F is None else F
    return F + theta_bracket(theta)


def einstein_constant(A: Connection, F: np.ndarray | None = None) -> float:
    """``lambda = 2 pi int c_1 ^ omega^{n-1}/(n-1)! / (rank vol)``.

    With ``c_1 = (i / 2 pi) tr F`` this is the mean of ``tr(sqrt(-1) Lambda F) / rank``.
    """
    geom = A.geometry
    F = curvature(A) if F is None else F
    tr = np.trace(geom.lambda_contract(F), axis1=-2, axis2=-1)
    return float(np.real(geom.integrate(tr)) / (A.rank * geom.volume))


def trace_f_wedge_f(F: np.ndarray) -> np.ndarray:
    """Coefficient of ``dx_0 ^ dx_1 ^ dx_2 ^ dx_3`` in ``tr(F ^ F)``."""
    def tr(a, b):
        return np.trace(a @ b, axis1=-2, axis2=-1)
    return 2.0 * (tr(F[0, 1], F[2, 3]) - tr(F[0, 2], F[1, 3]) + tr(F[0, 3], F[1, 2]))


def chern_numbers(A: Connection, F: np.ndarray | None = None) -> tuple[float, float]:
    """``(int c_1 ^ omega^{n-1}/(n-1)!, int (2 c_2 - c_1^2) ^ omega^{n-2}/(n-2)!)``.

    Normalisation: ``c_1 = (i/2pi) tr F`` and
    ``c_2 = (1/8pi^2)(tr(F^F) - trF ^ trF)``, so that
    ``2 c_2 - c_1^2 = tr(F ^ F) / (4 pi^2)``.  The second entry is 0 when n = 1.
    """
    geom = A.geometry
    F = curvature(A) if F is None else F
    tr = np.trace(geom.lambda_contract(F), axis1=-2, axis2=-1)
    c1 = float(np.real(geom.integrate(tr)) / (2 * np.pi))
    if geom.complex_dim == 1:
        return c1, 0.0
    c2comb = float(np.real(geom.integrate(trace_f_wedge_f(F))) / (4 * np.pi**2))
    return c1, c2comb


def energy_density(A: Connection, theta: HiggsField) -> np.ndarray:
    """``e(A, theta) = |F_A + [theta, theta^*]|^2 + 2 |del_A theta|^2``."""
    geom = A.geometry
    e = pointwise_norm2(higgs_curvature(A, theta), "2", geom)
    if geom.complex_dim > 1:
        dth = covariant_derivative(A, theta.comps, "del", "10")
        e = e + 2.0 * pointwise_norm2(dth, "20", geom)
    return e


def ymh_energy(A: Connection, theta: HiggsField) -> float:
    return float(np.real(A.geometry.integrate(energy_density(A, theta))))


def he_residual(A: Connection, theta: HiggsField, F: np.ndarray | None = None):
    """``Theta = sqrt(-1) Lambda (F_A + [theta, theta^*]) - lambda Id``.

    Returns ``(Theta, sup_x |Theta|_Frobenius, ||Theta||_{L^2})``.
    """
    geom = A.geometry
    F = curvature(A) if F is None else F
    lam = einstein_constant(A, F)
    Theta = geom.lambda_contract(F + theta_bracket(theta)) - lam * np.eye(A.rank)
    mag2 = frob2(Theta)
    return Theta, float(np.sqrt(mag2.max())), float(np.sqrt(geom.integrate(mag2)))


@dataclass(frozen=True)
class EnergyReport:
    ymh: float
    residual_term: float
    constant_term: float
    topological_term: float
    identity_gap: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def energy_report(A: Connection, theta: HiggsField) -> EnergyReport:
    """Split YMH into the residual, constant and topological pieces."""
    geom = A.geometry
    F = curvature(A)
    ymh = ymh_energy(A, theta)
    lam = einstein_constant(A, F)
    _, _, res_l2 = he_residual(A, theta, F)
    _, c2comb = chern_numbers(A, F)
    residual_term = res_l2**2
    constant_term = lam**2 * A.rank * geom.volume
    topological_term = 4 * np.pi**2 * c2comb
    gap = ymh - (residual_term + constant_term + topological_term)
    return EnergyReport(ymh, residual_term, constant_term, topological_term, float(gap))


def local_parabolic_energy(trajectory, x0, t0: float, r: float) -> float:
    """``r^{2-2n} int_{t0-r^2}^{t0+r^2} int_{B_r(x0)} e(A(t), theta(t))``.

    ``trajectory`` is a sequence of objects with ``t``, ``A`` and ``theta``
    attributes, ordered in time.  The time integral uses the trapezoid rule
    on the stored snapshots, with linear interpolation at the window ends.
    """
    states = list(trajectory)
    if not states:
        raise ValueError("empty trajectory")
    geom = states[0].A.geometry
    if not 0 < r < 0.5 * min(geom.sides):
        raise ValueError("r must be positive and below half the shortest period")
    lo, hi = t0 - r**2, t0 + r**2
    times = np.array([s.t for s in states])
    if times[0] > lo + 1e-12 or times[-1] < hi - 1e-12:
        raise ValueError(f"trajectory covers [{times[0]}, {times[-1]}], need [{lo}, {hi}]")
    ball = geom.periodic_distance(x0) <= r
    # only snapshots that touch the window are evaluated
    i0 = max(int(np.searchsorted(times, lo, side="right")) - 1, 0)
    i1 = min(int(np.searchsorted(times, hi, side="left")), len(states) - 1)
    ts = times[i0:i1 + 1]
    vals = np.array([geom.integrate(np.where(ball, energy_density(s.A, s.theta), 0.0))
                     for s in states[i0:i1 + 1]])
    if len(ts) == 1:
        total = vals[0] * (hi - lo)
    else:
        grid_t = np.concatenate(([lo], ts[(ts > lo) & (ts < hi)], [hi]))
        total = np.trapezoid(np.interp(grid_t, ts, vals), grid_t)
    return float(r ** (2 - 2 * geom.complex_dim) * total)
