"""Chebyshev-Fourier channel discretization and per-mode elliptic solves.

The channel T x [-1,1] is discretized with Fourier modes in x (so every
operation here is per-wavenumber k) and Chebyshev-Gauss-Lobatto collocation
in y.  Boundary conditions are imposed by row replacement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.linalg import lu_factor, lu_solve


def chebyshev_lobatto(n: int) -> np.ndarray:
    """Ascending Gauss-Lobatto nodes -1 = y_0 < ... < y_n = 1."""
    if n < 1:
        raise ValueError("need at least two nodes")
    j = np.arange(n + 1)
    # sin form keeps the grid exactly symmetric under y -> -y
    return np.sin(np.pi * (2.0 * j - n) / (2.0 * n))


def chebyshev_diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """First-derivative collocation matrix on Lobatto nodes (any order)."""
    n = len(nodes) - 1
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** np.arange(n + 1)
    x = nodes.reshape(-1, 1)
    dx = x - x.T + np.eye(n + 1)
    d = np.outer(c, 1.0 / c) / dx
    # negative-sum trick: rows of D annihilate constants exactly
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on the n+1 Lobatto nodes, exact for degree <= n."""
    if n == 1:
        return np.array([1.0, 1.0])
    w = np.zeros(n + 1)
    jj = np.arange(n + 1)
    v = np.zeros(n + 1)
    # moments of cos(k theta): int_0^pi cos(k t) sin(t) dt
    for k in range(0, n + 1, 2):
        v[k] = 2.0 / (1.0 - k * k)
    # w_j = (2/n) sum'' v_k cos(k j pi / n), '' halving first/last terms
    for j in jj:
        acc = 0.5 * v[0] + 0.5 * v[n] * np.cos(np.pi * j)
        for k in range(1, n):
            acc += v[k] * np.cos(np.pi * k * j / n)
        w[j] = 2.0 * acc / n
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass
class ChannelGrid:
    """Chebyshev collocation grid on [-1,1] plus the Fourier mode range."""

    ny: int
    kmax: int = 0
    nodes: np.ndarray = field(init=False)
    d1: np.ndarray = field(init=False)
    d2: np.ndarray = field(init=False)
    d3: np.ndarray = field(init=False)
    quad_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.ny < 4:
            raise ValueError("ny must be at least 4")
        self.nodes = chebyshev_lobatto(self.ny)
        self.d1 = chebyshev_diff_matrix(self.nodes)
        self.d2 = self.d1 @ self.d1
        self.d3 = self.d2 @ self.d1
        self.quad_weights = clenshaw_curtis_weights(self.ny)
        self._bary_w = np.ones(self.ny + 1)
        self._bary_w[0] = self._bary_w[-1] = 0.5
        self._bary_w *= (-1.0) ** np.arange(self.ny + 1)

    @property
    def modes(self) -> range:
        return range(0, self.kmax + 1)

    def diff(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        if order == 1:
            return self.d1 @ values
        if order == 2:
            return self.d2 @ values
        if order == 3:
            return self.d3 @ values
        out = values
        for _ in range(order):
            out = self.d1 @ out
        return out

    def integrate(self, values: np.ndarray) -> complex:
        return np.asarray(values) @ self.quad_weights

    def cheb_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Chebyshev coefficients of the interpolant through the nodes."""
        # DCT-I acts on values ordered from y=+1 down to y=-1
        rev = np.asarray(values)[::-1]
        n = self.ny
        if np.iscomplexobj(rev):
            coef = dct(rev.real, type=1) + 1j * dct(rev.imag, type=1)
        else:
            coef = dct(rev, type=1)
        coef = coef / n
        coef[0] *= 0.5
        coef[-1] *= 0.5
        return coef

    def spectral_tail(self, values: np.ndarray) -> float:
        """Top-quarter Chebyshev energy fraction, a resolution trust score."""
        coef = np.abs(self.cheb_coeffs(values))
        total = coef.sum()
        if total == 0.0:
            return 0.0
        q = max(1, (self.ny + 1) // 4)
        return float(coef[-q:].sum() / total)

    def interpolate(self, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Barycentric evaluation of the interpolant at arbitrary points."""
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        vals = np.asarray(values)
        diff = targets.reshape(-1, 1) - self.nodes.reshape(1, -1)
        exact = np.isclose(diff, 0.0, atol=1e-15)
        diff[exact] = 1.0
        ratio = self._bary_w / diff
        out = (ratio @ vals) / ratio.sum(axis=1)
        hit_row, hit_col = np.nonzero(exact)
        out[hit_row] = vals[hit_col]
        return out


@dataclass
class ModeField:
    """A single Fourier mode: complex values over the y-nodes."""

    k: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    def copy(self) -> "ModeField":
        return ModeField(self.k, self.values.copy())


def l2_norm(grid: ChannelGrid, f) -> float:
    v = f.values if isinstance(f, ModeField) else np.asarray(f)
    return float(np.sqrt(np.real(grid.integrate(np.abs(v) ** 2))))


def h1k_seminorm(grid: ChannelGrid, f: ModeField) -> float:
    dy = grid.d1 @ f.values
    s = grid.integrate(np.abs(dy) ** 2) + f.k**2 * grid.integrate(np.abs(f.values) ** 2)
    return float(np.sqrt(np.real(s)))


def h2k_seminorm(grid: ChannelGrid, f: ModeField) -> float:
    """sqrt of sum over b+c=2 of ||d_y^b |k|^c f||^2."""
    dy = grid.d1 @ f.values
    dyy = grid.d2 @ f.values
    k2 = float(f.k * f.k)
    s = (
        grid.integrate(np.abs(dyy) ** 2)
        + k2 * grid.integrate(np.abs(dy) ** 2)
        + k2 * k2 * grid.integrate(np.abs(f.values) ** 2)
    )
    return float(np.sqrt(np.real(s)))


class SingularSolveError(ValueError):
    """Raised for the k=0 Neumann problem without compatible data."""


def _apply_bc_rows(a: np.ndarray, grid: ChannelGrid, bc_kind: str) -> np.ndarray:
    a = a.copy()
    if bc_kind == "dirichlet":
        a[0, :] = 0.0
        a[0, 0] = 1.0
        a[-1, :] = 0.0
        a[-1, -1] = 1.0
    elif bc_kind == "neumann":
        a[0, :] = grid.d1[0, :]
        a[-1, :] = grid.d1[-1, :]
    else:
        raise ValueError(f"unknown bc kind {bc_kind!r}")
    return a


def helmholtz_solve(
    grid: ChannelGrid,
    rhs: ModeField,
    k: int | None = None,
    bc: str = "dirichlet",
    bc_values: tuple[complex, complex] = (0.0, 0.0),
) -> ModeField:
    """Solve -psi'' + k^2 psi = F with Dirichlet or Neumann data at y = +-1.

    ``bc_values`` are (value at y=-1, value at y=+1); for Neumann they are
    the derivative values a_-, a_+.  The pure Neumann k=0 problem is singular
    and requires the compatibility condition int F = a_- - a_+; incompatible
    data raises SingularSolveError, compatible data returns the mean-zero
    solution.
    """
    if k is None:
        k = rhs.k
    n = grid.ny
    a = -(grid.d2) + float(k * k) * np.eye(n + 1)
    b = rhs.values.astype(complex).copy()
    if k == 0 and bc == "neumann":
        compat = grid.integrate(rhs.values) - (bc_values[0] - bc_values[1])
        scale = max(1.0, float(np.max(np.abs(rhs.values))))
        if abs(compat) > 1e-10 * scale:
            raise SingularSolveError(
                f"k=0 Neumann data violates compatibility (defect {abs(compat):.3e})"
            )
        a = _apply_bc_rows(a, grid, "neumann")
        # pin the quadrature mean to zero in place of one interior row
        mid = (n + 1) // 2
        a[mid, :] = grid.quad_weights
        b[mid] = 0.0
        b[0] = bc_values[0]
        b[-1] = bc_values[1]
        return ModeField(k, np.linalg.solve(a, b))
    a = _apply_bc_rows(a, grid, bc)
    b[0] = bc_values[0]
    b[-1] = bc_values[1]
    return ModeField(k, np.linalg.solve(a, b))


def poisson_mode_solve(grid: ChannelGrid, rhs: ModeField, k: int | None = None) -> ModeField:
    """Solve (d_yy - k^2) psi = rhs with homogeneous Dirichlet data, k != 0."""
    if k is None:
        k = rhs.k
    if k == 0:
        raise SingularSolveError("k=0 stream mode is excluded (Neumann mean mode)")
    sol = helmholtz_solve(grid, ModeField(k, -rhs.values), k=k, bc="dirichlet")
    return ModeField(k, sol.values)


class HelmholtzFactorization:
    """Prefactored (alpha*I - nu*(d_yy - k^2)) solver with Dirichlet rows."""

    def __init__(self, grid: ChannelGrid, k: int, alpha: float, nu: float):
        n = grid.ny
        a = alpha * np.eye(n + 1) - nu * (grid.d2 - float(k * k) * np.eye(n + 1))
        a[0, :] = 0.0
        a[0, 0] = 1.0
        a[-1, :] = 0.0
        a[-1, -1] = 1.0
        self._lu = lu_factor(a)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = rhs.astype(complex).copy()
        b[0] = 0.0
        b[-1] = 0.0
        return lu_solve(self._lu, b)


def _one_minus_exp(x: np.ndarray | float) -> np.ndarray | float:
    """1 - exp(-2x) for x >= 0, computed without cancellation."""
    return -np.expm1(-2.0 * np.asarray(x, dtype=float))


def green_eval(k: int, v, vp, domain: tuple[float, float]):
    """Green's kernel of (d_v^2 - k^2) with Dirichlet ends on ``domain``.

    Evaluated through exponential differences so that large k|domain| never
    overflows: with a = v_+ - max(v,v'), b = min(v,v') - v_-, L = v_+ - v_-,

        G = -exp(-|k| |v-v'|) * E(|k| a) E(|k| b) / (2 |k| E(|k| L)),

    E(x) = 1 - exp(-2x).  The kernel is symmetric and vanishes when either
    argument hits an endpoint.
    """
    if k == 0:
        raise ValueError("k=0 kernel degenerates; use the Neumann solve instead")
    kk = abs(float(k))
    vm, vp_dom = float(domain[0]), float(domain[1])
    if vp_dom <= vm:
        raise ValueError("empty domain")
    v = np.asarray(v, dtype=float)
    vpq = np.asarray(vp, dtype=float)
    hi = np.maximum(v, vpq)
    lo = np.minimum(v, vpq)
    a = vp_dom - hi
    b = lo - vm
    length = vp_dom - vm
    val = (
        -np.exp(-kk * (hi - lo))
        * _one_minus_exp(kk * a)
        * _one_minus_exp(kk * b)
        / (2.0 * kk * _one_minus_exp(kk * length))
    )
    return val if val.shape else float(val)


def green_eval_split(k: int, v: float, vp: float, domain: tuple[float, float]):
    """The kernel's (H, S) split: H depends on v-v', S on v+v'."""
    if k == 0:
        raise ValueError("k=0 kernel degenerates")
    kk = abs(float(k))
    vm, vp_dom = float(domain[0]), float(domain[1])
    length = vp_dom - vm
    denom = 2.0 * kk * np.sinh(kk * length)
    h_part = -np.cosh(kk * (abs(v - vp) - length)) / denom
    s_part = np.cosh(kk * (v + vp - vp_dom - vm)) / denom
    return h_part, s_part


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    if npts not in _GL_CACHE:
        _GL_CACHE[npts] = np.polynomial.legendre.leggauss(npts)
    return _GL_CACHE[npts]


def green_solve(
    grid: ChannelGrid,
    rhs: ModeField,
    k: int | None = None,
    domain: tuple[float, float] | None = None,
    npts: int = 96,
) -> ModeField:
    """Solve (d_v^2 - k^2) phi = rhs by quadrature against the Green kernel.

    The grid is interpreted as Chebyshev nodes mapped affinely onto
    ``domain`` (default [-1,1]).  The kernel has a derivative kink at
    v = v', so the integral is split there and each analytic piece is
    integrated with Gauss-Legendre quadrature; the right-hand side is
    evaluated off-grid with barycentric interpolation.
    """
    if k is None:
        k = rhs.k
    if k == 0:
        raise SingularSolveError("k=0 not covered by the sinh kernel")
    if domain is None:
        domain = (-1.0, 1.0)
    vm, vp = float(domain[0]), float(domain[1])
    mid = 0.5 * (vm + vp)
    half = 0.5 * (vp - vm)
    vgrid = mid + half * grid.nodes
    gl_x, gl_w = _gauss_legendre(npts)
    out = np.zeros(grid.ny + 1, dtype=complex)
    for i, v in enumerate(vgrid):
        acc = 0.0 + 0.0j
        for lo, hi in ((vm, v), (v, vp)):
            if hi - lo <= 0.0:
                continue
            pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl_x
            wts = 0.5 * (hi - lo) * gl_w
            kernel = green_eval(k, v, pts, domain)
            rvals = grid.interpolate(rhs.values, (pts - mid) / half)
            acc += np.sum(wts * kernel * rvals)
        out[i] = acc
    return ModeField(k, out)


_MODE_MAGIC = b"CGMF"


def mode_field_to_bytes(f: ModeField) -> bytes:
    """Binary layout: magic, k as i64, Ny as u64, interleaved re/im f64 (LE)."""
    n = len(f.values) - 1
    head = _MODE_MAGIC + struct.pack("<qQ", f.k, n)
    inter = np.empty(2 * (n + 1))
    inter[0::2] = f.values.real
    inter[1::2] = f.values.imag
    return head + inter.astype("<f8").tobytes()


def mode_field_from_bytes(buf: bytes) -> tuple[ModeField, int]:
    if buf[:4] != _MODE_MAGIC:
        raise ValueError("bad mode field header")
    k, n = struct.unpack("<qQ", buf[4:20])
    count = 2 * (n + 1)
    data = np.frombuffer(buf[20 : 20 + 8 * count], dtype="<f8")
    values = data[0::2] + 1j * data[1::2]
    return ModeField(int(k), values), 20 + 8 * count


def mode_field_to_csv(grid: ChannelGrid, f: ModeField) -> str:
    lines = ["y,re,im"]
    for y, v in zip(grid.nodes, f.values):
        lines.append(f"{float(y)!r},{float(v.real)!r},{float(v.imag)!r}")
    return "\n".join(lines) + "\n"
