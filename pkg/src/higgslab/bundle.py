"""Unitary connections and Higgs fields on a trivial rank-r bundle.

A connection is stored as its anti-Hermitian coefficient fields ``A_a`` in
the real coordinate basis (``d_A = d + sum_a A_a dx_a``).  A Higgs field
``theta = sum_k theta_k dz_k`` is stored by its complex components
``theta_k``.  Adjoints are taken with respect to the identity metric.

Pointwise form norms are induced by the flat metric, so ``|dz_k|^2 = 2`` and
``|dz_k ^ dzbar_l|^2 = 4``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import TorusGeometry

# weights turning sum_c |coef_c|^2 into the metric norm, per storage layout
FORM_WEIGHTS = {
    "0": 1.0,
    "1": 1.0,    # real 1-form components
    "10": 2.0,   # complex (1,0) components theta_k
    "01": 2.0,
    "2": 0.5,    # full antisymmetric real 2-form
    "20": 2.0,   # full antisymmetric complex (2,0) coefficients
    "02": 2.0,
    "11": 4.0,   # [k, l] coefficient of dzbar_k ^ dz_l (or dz_k ^ dzbar_l)
}


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def frob2(a: np.ndarray) -> np.ndarray:
    """Pointwise squared Frobenius norm over the trailing matrix axes."""
    return np.sum(np.abs(a) ** 2, axis=(-2, -1))


def _collapse(v: np.ndarray, geom: TorusGeometry) -> np.ndarray:
    """Sum everything except the grid axes (matrix axes trail the grid)."""
    d = geom.dim
    if v.shape[-d:] != geom.grid:
        v = v.sum(axis=(-2, -1))
    lead = v.ndim - d
    return v.sum(axis=tuple(range(lead))) if lead else v


def pointwise_norm2(values: np.ndarray, kind: str, geom: TorusGeometry) -> np.ndarray:
    """Squared metric norm of a (matrix valued) form, as a scalar grid field."""
    return FORM_WEIGHTS[kind] * _collapse(np.abs(values) ** 2, geom)


def l2_norm(values: np.ndarray, kind: str, geom: TorusGeometry) -> float:
    return float(np.sqrt(geom.integrate(pointwise_norm2(values, kind, geom))))


def inner(a: np.ndarray, b: np.ndarray, kind: str, geom: TorusGeometry) -> complex:
    """L^2 pairing ``int sum_c tr(a_c b_c^*)`` with the form weight of ``kind``."""
    return complex(FORM_WEIGHTS[kind] * geom.integrate(_collapse(a * np.conj(b), geom)))


@dataclass(frozen=True)
class Connection:
    geometry: TorusGeometry
    coeffs: np.ndarray  # (2n, *grid, r, r), anti-Hermitian

    @property
    def rank(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def zero(cls, geom: TorusGeometry, rank: int = 2) -> "Connection":
        return cls(geom, np.zeros((geom.dim, *geom.grid, rank, rank), dtype=complex))

    @classmethod
    def constant(cls, geom: TorusGeometry, mats) -> "Connection":
        mats = np.asarray(mats, dtype=complex)
        c = np.broadcast_to(mats[(slice(None),) + (None,) * geom.dim], (mats.shape[0], *geom.grid, *mats.shape[1:]))
        return cls(geom, np.array(c))

    def unitarity_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs + dagger(self.coeffs)), initial=0.0))

    def holomorphic_part(self) -> np.ndarray:
        """``A^{0,1}`` components ``(A_{2k} + i A_{2k+1}) / 2``."""
        c = self.coeffs
        return 0.5 * (c[0::2] + 1j * c[1::2])

    def antiholomorphic_dual(self) -> np.ndarray:
        """``A^{1,0}`` components ``(A_{2k} - i A_{2k+1}) / 2``."""
        c = self.coeffs
        return 0.5 * (c[0::2] - 1j * c[1::2])

    @classmethod
    def from_01_part(cls, geom: TorusGeometry, a01: np.ndarray) -> "Connection":
        """The unitary connection whose (0,1) part is ``a01``."""
        a10 = -dagger(a01)
        coeffs = np.empty((geom.dim, *a01.shape[1:]), dtype=complex)
        coeffs[0::2] = a10 + a01
        coeffs[1::2] = 1j * (a10 - a01)
        return cls(geom, coeffs)


@dataclass(frozen=True)
class HiggsField:
    geometry: TorusGeometry
    comps: np.ndarray  # (n, *grid, r, r), theta = sum_k comps[k] dz_k

    @property
    def rank(self) -> int:
        return self.comps.shape[-1]

    @classmethod
    def zero(cls, geom: TorusGeometry, rank: int = 2) -> "HiggsField":
        return cls(geom, np.zeros((geom.complex_dim, *geom.grid, rank, rank), dtype=complex))

    @classmethod
    def constant(cls, geom: TorusGeometry, mats) -> "HiggsField":
        mats = np.asarray(mats, dtype=complex)
        c = np.broadcast_to(mats[(slice(None),) + (None,) * geom.dim], (mats.shape[0], *geom.grid, *mats.shape[1:]))
        return cls(geom, np.array(c))

    def real_components(self) -> np.ndarray:
        """Components in the real basis: ``theta_{2k} = theta_k``, ``theta_{2k+1} = i theta_k``."""
        c = self.comps
        out = np.empty((2 * c.shape[0], *c.shape[1:]), dtype=complex)
        out[0::2] = c
        out[1::2] = 1j * c
        return out

    def l2(self) -> float:
        return l2_norm(self.comps, "10", self.geometry)


def elem(i: int, j: int, rank: int = 2) -> np.ndarray:
    """Matrix unit ``e_{ij}`` (1-based indices, as in ``e_12``)."""
    m = np.zeros((rank, rank), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return m


# -- covariant calculus ----------------------------------------------------

def nabla(A: Connection, phi: np.ndarray, direction: int) -> np.ndarray:
    """``nabla_a phi = D_a phi + [A_a, phi]`` on End(E)-valued or scalar fields."""
    geom = A.geometry
    out = geom.derivative(phi, direction)
    if phi.shape[-geom.dim:] != geom.grid:
        out = out + comm(A.coeffs[direction], phi)
    return out


def nabla_all(A: Connection, phi: np.ndarray) -> np.ndarray:
    geom = A.geometry
    out = geom.gradient(phi)
    if phi.shape[-geom.dim:] != geom.grid:
        out = out + comm(A.coeffs, phi[None])
    return out


def nabla_hol(A: Connection, phi: np.ndarray, k: int) -> np.ndarray:
    """``nabla_{z_k}``."""
    return 0.5 * (nabla(A, phi, 2 * k) - 1j * nabla(A, phi, 2 * k + 1))


def nabla_antihol(A: Connection, phi: np.ndarray, k: int) -> np.ndarray:
    """``nabla_{zbar_k}``."""
    return 0.5 * (nabla(A, phi, 2 * k) + 1j * nabla(A, phi, 2 * k + 1))


def covariant_derivative(A: Connection, phi: np.ndarray, which: str = "nabla", kind: str = "0") -> np.ndarray:
    """Apply ``d_A``, ``del_A``, ``delbar_A`` or ``nabla_A``.

    ``kind='0'`` takes a 0-form (scalar or End(E) valued) and returns:
    ``d``/``nabla`` the real 1-form ``(d, ...)``; ``del``/``delbar`` the
    complex (1,0)/(0,1) components ``(n, ...)``.

    ``kind='10'`` takes the components of a (1,0)-form and returns:
    ``nabla`` the tensor ``nabla_a theta_k`` of shape ``(d, n, ...)``;
    ``del`` the full antisymmetric (2,0) coefficients ``(n, n, ...)``;
    ``delbar`` the coefficients ``[k, l]`` of ``dzbar_k ^ dz_l``;
    ``d`` the real 2-form ``(d, d, ...)``.
    """
    geom = A.geometry
    n = geom.complex_dim
    if kind == "0":
        if which in ("d", "nabla"):
            return nabla_all(A, phi)
        if which == "del":
            return np.stack([nabla_hol(A, phi, k) for k in range(n)])
        if which == "delbar":
            return np.stack([nabla_antihol(A, phi, k) for k in range(n)])
    elif kind == "10":
        if which == "nabla":
            return np.stack([nabla_all(A, phi[k]) for k in range(n)], axis=1)
        if which == "del":
            g = np.stack([np.stack([nabla_hol(A, phi[l], k) for l in range(n)]) for k in range(n)])
            return g - np.swapaxes(g, 0, 1)
        if which == "delbar":
            return np.stack([np.stack([nabla_antihol(A, phi[l], k) for l in range(n)]) for k in range(n)])
        if which == "d":
            real = np.empty((2 * n, *phi.shape[1:]), dtype=complex)
            real[0::2] = phi
            real[1::2] = 1j * phi
            g = np.stack([nabla_all(A, real[b]) for b in range(2 * n)], axis=1)
            return g - np.swapaxes(g, 0, 1)
    raise ValueError(f"unsupported combination which={which!r}, kind={kind!r}")


def curvature(A: Connection) -> np.ndarray:
    """``F_A = dA + A ^ A`` as a full antisymmetric 2-form."""
    geom = A.geometry
    c = A.coeffs
    F = geom.exterior_derivative(c, 1)
    F = F + (c[:, None] @ c[None, :] - c[None, :] @ c[:, None])
    return F


def complex_frame(F: np.ndarray, geom: TorusGeometry, a_kind: str, b_kind: str) -> np.ndarray:
    """Evaluate a real 2-form on complex frame vectors.

    ``a_kind``/``b_kind`` are ``'1,0'`` (``d/dz_k``) or ``'0,1'``
    (``d/dzbar_k``).  Returns the ``(n, n, ...)`` array ``F(e_k, e_l)``,
    which equals the coefficient of the corresponding wedge of dual forms.
    """
    n = geom.complex_dim
    sa = -1j if a_kind == "1,0" else 1j
    sb = -1j if b_kind == "1,0" else 1j
    out = np.empty((n, n, *F.shape[2:]), dtype=complex)
    for k in range(n):
        for l in range(n):
            x, y, u, v = 2 * k, 2 * k + 1, 2 * l, 2 * l + 1
            out[k, l] = 0.25 * (F[x, u] + sb * F[x, v] + sa * F[y, u] + sa * sb * F[y, v])
    return out


def curvature_02_norm(A: Connection, F: np.ndarray | None = None) -> float:
    """``||F_A^{0,2}||_{L^2}``; zero in complex dimension one."""
    geom = A.geometry
    if geom.complex_dim == 1:
        return 0.0
    F = curvature(A) if F is None else F
    return l2_norm(complex_frame(F, geom, "0,1", "0,1"), "02", geom)


def wedge_square(theta: HiggsField) -> np.ndarray:
    """``theta ^ theta`` as full antisymmetric (2,0) coefficients ``[theta_k, theta_l]``."""
    c = theta.comps
    return c[:, None] @ c[None, :] - c[None, :] @ c[:, None]


def graded_bracket(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``[alpha, beta] = alpha ^ beta + beta ^ alpha`` for real-basis 1-forms."""
    s = alpha[:, None] @ beta[None, :] + beta[:, None] @ alpha[None, :]
    return s - np.swapaxes(s, 0, 1)


def theta_bracket(theta: HiggsField) -> np.ndarray:
    """``[theta, theta^*]`` as a real 2-form (anti-Hermitian valued)."""
    t = theta.real_components()
    return graded_bracket(t, dagger(t))


# -- gauge action ------------------------------------------------------------

@dataclass(frozen=True)
class GaugeTransform:
    values: np.ndarray  # (*grid, r, r)
    flavor: str = "complex"

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.values)


def gauge_apply(g: GaugeTransform, A: Connection, theta: HiggsField,
                cond_limit: float = 1e8) -> tuple[Connection, HiggsField]:
    """Complex gauge action on pairs.

    ``delbar`` of the new connection is ``sigma delbar_A sigma^{-1}``, the new
    connection is its unitary (Chern) completion, and ``theta -> sigma theta sigma^{-1}``.
    """
    geom = A.geometry
    sigma = np.asarray(g.values)
    cond = np.linalg.cond(sigma)
    if not np.all(np.isfinite(cond)) or np.max(cond) > cond_limit:
        raise ValueError(f"gauge transform is numerically singular (cond={np.max(cond):.3g})")
    if g.flavor == "unitary":
        eye = np.eye(sigma.shape[-1])
        defect = np.max(np.abs(sigma @ dagger(sigma) - eye))
        if defect > 1e-10:
            raise ValueError(f"unitary gauge transform violates sigma sigma^* = Id by {defect:.3g}")
    sinv = np.linalg.inv(sigma)
    a01 = A.holomorphic_part()
    new01 = np.stack([
        sigma @ a01[k] @ sinv - geom.dbar(sigma, k) @ sinv for k in range(geom.complex_dim)
    ])
    A_new = Connection.from_01_part(geom, new01)
    th_new = HiggsField(geom, sigma[None] @ theta.comps @ sinv[None])
    return A_new, th_new


# -- constraint checks -------------------------------------------------------

@dataclass(frozen=True)
class ConstraintReport:
    holomorphicity: float
    wedge: float
    integrability: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.holomorphicity, self.wedge, self.integrability) <= self.tol

    def as_dict(self) -> dict:
        return {"holomorphicity": self.holomorphicity, "wedge": self.wedge,
                "integrability": self.integrability, "tol": self.tol, "passed": self.passed}


def holomorphicity_residual(A: Connection, theta: HiggsField) -> float:
    return l2_norm(covariant_derivative(A, theta.comps, "delbar", "10"), "11", A.geometry)


def wedge_residual(theta: HiggsField) -> float:
    return l2_norm(wedge_square(theta), "20", theta.geometry)


def is_higgs_pair(A: Connection, theta: HiggsField, tol: float = 1e-6) -> ConstraintReport:
    return ConstraintReport(
        holomorphicity=holomorphicity_residual(A, theta),
        wedge=wedge_residual(theta),
        integrability=curvature_02_norm(A),
        tol=tol,
    )


# -- test data ---------------------------------------------------------------

def random_band_limited(geom: TorusGeometry, rng: np.random.Generator, shape: tuple,
                        roughness: int, complex_values: bool = True) -> np.ndarray:
    """Random trigonometric polynomial with modes ``|m_a| <= roughness``, sup-normalised."""
    coef = np.zeros((*shape, *geom.grid), dtype=complex)
    idx = [np.r_[0:roughness + 1, N - roughness:N] for N in geom.grid]
    sub = np.ix_(*idx)
    block_shape = (*shape, *[len(i) for i in idx])
    block = rng.standard_normal(block_shape)
    if complex_values:
        block = block + 1j * rng.standard_normal(block_shape)
    coef[(Ellipsis, *sub)] = block
    f = np.fft.ifftn(coef, axes=tuple(range(len(shape), len(shape) + geom.dim)))
    if not complex_values:
        f = f.real
    # grid axes before the value axes
    f = np.moveaxis(f, tuple(range(len(shape))), tuple(range(-len(shape), 0)))
    peak = np.max(np.abs(f))
    return f / peak if peak > 0 else f


def random_complex_gauge(geom: TorusGeometry, rng: np.random.Generator, rank: int,
                         roughness: int, strength: float) -> GaugeTransform:
    phi = strength * random_band_limited(geom, rng, (rank, rank), roughness)
    return GaugeTransform(scipy.linalg.expm(phi), "complex")


def random_higgs_pair(geom: TorusGeometry, seed: int, rank: int = 2, roughness: int = 2,
                      amplitude: float = 1.0, gauge_strength: float = 0.3,
                      model: str = "diagonal") -> tuple[Connection, HiggsField]:
    """A Higgs pair in the complex gauge orbit of a parallel model pair.

    ``model='diagonal'`` uses constant diagonal (commuting, normal) components,
    ``model='nilpotent'`` uses ``theta = amplitude * e_12 dz_1``.  The gauge
    generator has sup norm ``gauge_strength * amplitude``.
    """
    rng = np.random.default_rng(seed)
    n = geom.complex_dim
    if model == "diagonal":
        d = (rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))) / np.sqrt(2)
        mats = np.stack([np.diag(row) for row in d]) * amplitude
    elif model == "nilpotent":
        mats = np.zeros((n, rank, rank), dtype=complex)
        mats[0, 0, 1] = amplitude
    else:
        raise ValueError(f"unknown model {model!r}")
    A0 = Connection.zero(geom, rank)
    th0 = HiggsField.constant(geom, mats)
    if amplitude == 0:
        return A0, th0
    g = random_complex_gauge(geom, rng, rank, roughness, gauge_strength * amplitude)
    return gauge_apply(g, A0, th0)


def random_connection(geom: TorusGeometry, seed: int, rank: int = 2, roughness: int = 1,
                      amplitude: float = 0.5) -> Connection:
    """Smooth band-limited unitary connection (not integrable in general)."""
    rng = np.random.default_rng(seed)
    m = random_band_limited(geom, rng, (geom.dim, rank, rank), roughness)
    # grid axes were moved before the value axes; restore component axis first
    m = np.moveaxis(m, -3, 0)
    return Connection(geom, amplitude * 0.5 * (m - dagger(m)))


def random_unitary_gauge(geom: TorusGeometry, seed: int, rank: int = 2, roughness: int = 1,
                         strength: float = 0.5) -> GaugeTransform:
    rng = np.random.default_rng(seed)
    m = random_band_limited(geom, rng, (rank, rank), roughness)
    return GaugeTransform(scipy.linalg.expm(strength * 0.5 * (m - dagger(m))), "unitary")


# -- Sobolev norms -----------------------------------------------------------

def sobolev_norm(A: Connection, u: np.ndarray, k: int = 1, p: float = 2.0) -> float:
    """``(sum_{j<=k} int |nabla_A^j u|^p)^{1/p}`` for a 0-form ``u``."""
    if k not in (0, 1, 2):
        raise ValueError("only k in {0, 1, 2} is supported")
    if not 1 <= p < np.inf:
        raise ValueError("p must lie in [1, inf)")
    geom = A.geometry
    total = 0.0
    term = np.asarray(u)
    for j in range(k + 1):
        if j > 0:
            term = np.stack([nabla_all(A, t) for t in term]) if j > 1 else nabla_all(A, term)
            if j == 2:
                term = term.reshape((geom.dim * geom.dim, *term.shape[2:]))
        mag2 = pointwise_norm2(term if j else term[None], "1", geom)
        total += geom.integrate(mag2 ** (p / 2))
    return float(total ** (1.0 / p))
