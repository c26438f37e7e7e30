"""Flat Kähler tori sampled on periodic uniform grids.

Real coordinates are ``x_0, ..., x_{2n-1}`` with complex coordinates
``z_k = x_{2k} + i x_{2k+1}``.  The metric is the Euclidean one and the
Kähler form is ``omega = sum_k dx_{2k} ^ dx_{2k+1} = (i/2) sum_k dz_k ^ dzbar_k``.

Field arrays carry the grid on the axes just before the two trailing matrix
axes, i.e. a matrix field has shape ``(*grid, r, r)``, a 1-form has shape
``(2n, *grid, r, r)`` and a 2-form is stored as a full antisymmetric array of
shape ``(2n, 2n, *grid, r, r)``.  Scalar fields drop the matrix axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

# threads used by the FFTs; results do not depend on the thread count
FFT_WORKERS = -1


@dataclass(frozen=True)
class TorusGeometry:
    """A flat torus ``R^{2n} / prod(L_a Z)`` with an ``N_1 x ... x N_{2n}`` grid."""

    complex_dim: int
    sides: tuple[float, ...]
    grid: tuple[int, ...]
    dealias_fraction: float = field(default=2.0 / 3.0, compare=False)

    def __post_init__(self):
        n = self.complex_dim
        if n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {n}")
        sides = tuple(float(s) for s in self.sides)
        grid = tuple(int(g) for g in self.grid)
        if len(sides) != 2 * n or len(grid) != 2 * n:
            raise ValueError(f"need {2 * n} sides and grid sizes")
        if any(s <= 0 for s in sides):
            raise ValueError("side lengths must be positive")
        if any(g % 2 or g < 8 for g in grid):
            raise ValueError(f"grid sizes must be even and >= 8, got {grid}")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "grid", grid)

    @property
    def dim(self) -> int:
        return 2 * self.complex_dim

    @property
    def metric(self) -> np.ndarray:
        return np.eye(self.dim)

    @cached_property
    def kahler_form(self) -> np.ndarray:
        omega = np.zeros((self.dim, self.dim))
        for k in range(self.complex_dim):
            omega[2 * k, 2 * k + 1] = 1.0
            omega[2 * k + 1, 2 * k] = -1.0
        return omega

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def cell_volume(self) -> float:
        return self.volume / float(np.prod(self.grid))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.sides, self.grid))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per real direction."""
        axes = [np.arange(N) * L / N for L, N in zip(self.sides, self.grid)]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers per direction with the Nyquist mode zeroed."""
        out = []
        for a, (L, N) in enumerate(zip(self.sides, self.grid)):
            k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
            k[N // 2] = 0.0
            shape = [1] * self.dim
            shape[a] = N
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = np.ones(self.grid, dtype=bool)
        for a, N in enumerate(self.grid):
            m = np.abs(np.fft.fftfreq(N, d=1.0 / N)) < self.dealias_fraction * N / 2
            shape = [1] * self.dim
            shape[a] = N
            mask = mask & m.reshape(shape)
        return mask

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Fourier modes other than the Nyquist mode in any direction."""
        mask = np.ones(self.grid, dtype=bool)
        for a, N in enumerate(self.grid):
            m = np.arange(N) != N // 2
            shape = [1] * self.dim
            shape[a] = N
            mask = mask & m.reshape(shape)
        return mask

    # -- axis bookkeeping -------------------------------------------------

    def grid_axes(self, f: np.ndarray) -> tuple[int, ...]:
        """Axes of ``f`` holding the grid (scalar or matrix valued)."""
        d = self.dim
        shape = f.shape
        for tail in (2, 0):
            start = len(shape) - tail - d
            if start >= 0 and tuple(shape[start:start + d]) == self.grid:
                return tuple(range(start, start + d))
        raise ValueError(f"array of shape {shape} does not live on grid {self.grid}")

    def _spectral_view(self, f: np.ndarray, axes) -> tuple:
        # reshape a per-grid multiplier so it broadcasts against f
        extra = f.ndim - axes[-1] - 1
        pre = axes[0]
        return (None,) * pre + (Ellipsis,) + (None,) * extra

    # -- calculus ---------------------------------------------------------

    def fft(self, f):
        return sfft.fftn(f, axes=self.grid_axes(f), workers=FFT_WORKERS)

    def ifft(self, f):
        return sfft.ifftn(f, axes=self.grid_axes(f), workers=FFT_WORKERS)

    def multiplier(self, f: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Broadcast a grid-shaped array ``m`` against field ``f``."""
        axes = self.grid_axes(f)
        return m[self._spectral_view(f, axes)]

    def derivative(self, f: np.ndarray, direction: int) -> np.ndarray:
        """Spectral derivative along real direction ``direction``."""
        fh = self.fft(f)
        ik = 1j * self.multiplier(f, self.wavenumbers[direction])
        out = self.ifft(ik * fh)
        return out if np.iscomplexobj(f) else out.real

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """All real partial derivatives stacked on a new leading axis."""
        fh = self.fft(f)
        out = np.stack([self.ifft(1j * self.multiplier(f, k) * fh) for k in self.wavenumbers])
        return out if np.iscomplexobj(f) else out.real

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        out = self.ifft(-self.multiplier(f, self.k_squared) * self.fft(f))
        return out if np.iscomplexobj(f) else out.real

    def dbar(self, f: np.ndarray, k: int) -> np.ndarray:
        """``d/dzbar_k = (d/dx_{2k} + i d/dx_{2k+1}) / 2``."""
        return 0.5 * (self.derivative(f, 2 * k) + 1j * self.derivative(f, 2 * k + 1))

    def dz(self, f: np.ndarray, k: int) -> np.ndarray:
        return 0.5 * (self.derivative(f, 2 * k) - 1j * self.derivative(f, 2 * k + 1))

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero the Fourier modes outside the 2/3 box."""
        out = self.ifft(self.multiplier(f, self.dealias_mask) * self.fft(f))
        return out if np.iscomplexobj(f) else out.real

    def exterior_derivative(self, form: np.ndarray, degree: int) -> np.ndarray:
        """``d`` on scalar (degree 0) or 1-form (degree 1) coefficient arrays."""
        if degree == 0:
            return self.gradient(form)
        if degree == 1:
            g = np.stack([self.gradient(form[b]) for b in range(self.dim)], axis=1)
            return g - np.swapaxes(g, 0, 1)  # (dA)_ab = D_a A_b - D_b A_a
        raise ValueError("only degrees 0 and 1 are supported")

    def codifferential(self, form: np.ndarray, degree: int) -> np.ndarray:
        """Formal adjoint ``d*`` on 1-forms and full antisymmetric 2-forms."""
        if degree == 1:
            return -sum(self.derivative(form[a], a) for a in range(self.dim))
        if degree == 2:
            return np.stack(
                [-sum(self.derivative(form[a, b], a) for a in range(self.dim)) for b in range(self.dim)]
            )
        raise ValueError("only degrees 1 and 2 are supported")

    # -- Kähler contraction and integration -------------------------------

    def lambda_omega(self, two_form: np.ndarray) -> np.ndarray:
        """Contraction with the Kähler form: ``sum_k F_{2k,2k+1}``."""
        self._check_two_form(two_form)
        return sum(two_form[2 * k, 2 * k + 1] for k in range(self.complex_dim))

    def lambda_contract(self, two_form: np.ndarray) -> np.ndarray:
        """``sqrt(-1) * Lambda_omega`` of a 2-form (matrix valued allowed)."""
        return 1j * self.lambda_omega(two_form)

    def omega_field(self, value=None) -> np.ndarray:
        """``omega`` tensored with ``value`` (a scalar or matrix field)."""
        if value is None:
            value = np.ones(self.grid)
        value = np.asarray(value)
        return self.kahler_form.reshape(self.kahler_form.shape + (1,) * value.ndim) * value

    def _check_two_form(self, f: np.ndarray):
        d = self.dim
        if f.ndim < 2 + d or f.shape[:2] != (d, d):
            raise ValueError(f"expected a 2-form with leading shape ({d}, {d}), got {f.shape}")

    def integrate(self, f: np.ndarray):
        """Integral of a scalar field against ``omega^n / n!``."""
        f = np.asarray(f)
        if f.shape[-self.dim:] != self.grid:
            raise ValueError(f"scalar field shape {f.shape} does not match grid {self.grid}")
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return f.sum(axis=axes) * self.cell_volume

    def periodic_distance(self, center) -> np.ndarray:
        """Euclidean distance to ``center`` on the torus, as a grid field."""
        r2 = 0.0
        for x, c, L in zip(self.coords, center, self.sides):
            dx = (x - c + L / 2) % L - L / 2
            r2 = r2 + dx**2
        return np.sqrt(np.broadcast_to(r2, self.grid))


def make_torus(n: int, sides, grid) -> TorusGeometry:
    """Build a flat torus of complex dimension ``n``."""
    return TorusGeometry(int(n), tuple(sides), tuple(grid))
