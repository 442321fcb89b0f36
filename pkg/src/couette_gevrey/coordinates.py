"""Adapted coordinate v(t,y), the fields G, H, Hbar, and Gamma stacks.

The coordinate solves  d_t(t(v-y)) = U0 + nu t d_y^2 v  with d_y v = 1 at
the walls.  Written in w = v - y the singular factor integrates exactly:

    (t_{j+1} w_{j+1} - t_j w_j)/dt = U0(t_{j+1/2}) + nu t_{j+1} d_y^2 w_{j+1}

which needs no regularization at t = 0 and reproduces stationary profiles
exactly when nu = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectral import ChannelGrid, ModeField
from .weights import CutoffCascade, eval_q


class CoordinateDegeneracyError(RuntimeError):
    """v_y lost positivity somewhere on the grid."""


@dataclass
class ShearProfile:
    """Background shear perturbation U0(t, y) and its y-derivative."""

    name: str
    u0: Callable[[float, np.ndarray], np.ndarray]
    dy_u0: Callable[[float, np.ndarray], np.ndarray]

    def dt_u0(self, t: float, y: np.ndarray, h: float = 1e-6) -> np.ndarray:
        return (self.u0(t + h, y) - self.u0(max(t - h, 0.0), y)) / (
            (t + h) - max(t - h, 0.0)
        )


def zero_profile() -> ShearProfile:
    return ShearProfile(
        "zero", lambda t, y: np.zeros_like(y), lambda t, y: np.zeros_like(y)
    )


def quartic_profile(eps_u: float = 1.0 / 64.0) -> ShearProfile:
    if eps_u > 1.0 / 32.0:
        raise ValueError("eps_u above 1/32 violates the closeness assumption")
    return ShearProfile(
        "quartic",
        lambda t, y: eps_u * (1.0 - y * y) ** 2,
        lambda t, y: eps_u * 2.0 * (1.0 - y * y) * (-2.0 * y),
    )


def sin_quartic_profile(eps_u: float = 1.0 / 64.0) -> ShearProfile:
    if eps_u > 1.0 / 32.0:
        raise ValueError("eps_u above 1/32 violates the closeness assumption")

    def u0(t, y):
        return eps_u * np.sin(np.pi * y) * (1.0 - y * y) ** 2

    def dy(t, y):
        return eps_u * (
            np.pi * np.cos(np.pi * y) * (1.0 - y * y) ** 2
            - 4.0 * y * np.sin(np.pi * y) * (1.0 - y * y)
        )

    return ShearProfile("sin_quartic", u0, dy)


PROFILES = {
    "zero": zero_profile,
    "quartic": quartic_profile,
    "sin_quartic": sin_quartic_profile,
}


def make_profile(name: str, eps_u: float = 1.0 / 64.0) -> ShearProfile:
    if name not in PROFILES:
        raise ValueError(f"unknown shear profile {name!r}")
    if name == "zero":
        return zero_profile()
    return PROFILES[name](eps_u)


@dataclass
class CoordinateState:
    t: float
    w: np.ndarray  # v - y on the nodes
    v: np.ndarray
    v_y: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Hbar: np.ndarray

    def export_csv(self, grid: ChannelGrid) -> str:
        lines = ["y,v,v_y,G,H,Hbar"]
        for i, y in enumerate(grid.nodes):
            lines.append(
                f"{float(y)!r},{float(self.v[i])!r},{float(self.v_y[i])!r},"
                f"{float(self.G[i])!r},{float(self.H[i])!r},{float(self.Hbar[i])!r}"
            )
        return "\n".join(lines) + "\n"


def _derived_state(grid: ChannelGrid, t: float, w: np.ndarray, g: np.ndarray) -> CoordinateState:
    v = grid.nodes + w
    v_y = 1.0 + grid.d1 @ w
    if np.any(v_y <= 0.0):
        raise CoordinateDegeneracyError(f"v_y <= 0 at t={t}")
    return CoordinateState(
        t=t, w=w, v=v, v_y=v_y, G=g, H=v_y - 1.0, Hbar=grid.d1 @ g
    )


def couette_state(grid: ChannelGrid, t: float = 0.0) -> CoordinateState:
    z = np.zeros(grid.ny + 1)
    return _derived_state(grid, t, z.copy(), z.copy())


def init_coordinates(profile: ShearProfile, grid: ChannelGrid, nu: float = 0.0) -> CoordinateState:
    """State at t = 0+, where integrating the evolution forces w(0) = U0(0)."""
    y = grid.nodes
    w0 = profile.u0(0.0, y)
    bc = profile.dy_u0(0.0, np.array([-1.0, 1.0]))
    if np.max(np.abs(bc)) > 1e-10:
        raise ValueError("profile violates d_y U0(0, +-1) = 0 (wall compatibility)")
    # small-t expansion of the integrated equation gives the t=0 limit of G
    u01 = profile.dt_u0(0.0, y)
    g0 = 0.5 * (u01 - nu * (grid.d2 @ w0))
    return _derived_state(grid, 0.0, w0, g0)


def step_coordinates(
    state: CoordinateState,
    dt: float,
    nu: float,
    profile: ShearProfile,
    grid: ChannelGrid,
    t_switch: float | None = None,
) -> CoordinateState:
    """One integrating-factor IMEX step of t d_t w + w = U0 + nu t d_yy w."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if t_switch is None:
        t_switch = 10.0 * dt
    t0, t1 = state.t, state.t + dt
    y = grid.nodes
    rhs = t0 * state.w + dt * profile.u0(t0 + 0.5 * dt, y)
    n = grid.ny
    a = t1 * np.eye(n + 1) - nu * t1 * dt * grid.d2
    # Neumann rows keep d_y w = 0 at the walls
    a[0, :] = grid.d1[0, :]
    rhs = rhs.astype(float).copy()
    rhs[0] = 0.0
    a[-1, :] = grid.d1[-1, :]
    rhs[-1] = 0.0
    w1 = np.linalg.solve(a, rhs)
    if t1 >= t_switch:
        g = (profile.u0(t1, y) - w1) / t1
    else:
        g = (w1 - state.w) / dt - nu * (grid.d2 @ w1)
    return _derived_state(grid, t1, w1, g)


def evolve_coordinates(
    profile: ShearProfile,
    grid: ChannelGrid,
    nu: float,
    t_final: float,
    dt: float,
) -> list[CoordinateState]:
    states = [init_coordinates(profile, grid, nu)]
    while states[-1].t < t_final - 1e-12:
        step = min(dt, t_final - states[-1].t)
        states.append(step_coordinates(states[-1], step, nu, profile, grid))
    return states


def monitor_assumptions(state: CoordinateState, profile: ShearProfile, grid: ChannelGrid) -> dict:
    """Closeness quantities with their configured thresholds."""
    y = grid.nodes
    dyu0 = np.max(np.abs(profile.dy_u0(state.t, y)))
    w_inf = np.max(np.abs(state.w))
    vy_inv = np.max(np.abs(1.0 / state.v_y))
    h = state.v_y - 1.0
    h3 = 0.0
    cur = h
    for _ in range(4):
        h3 += float(np.real(grid.integrate(np.abs(cur) ** 2)))
        cur = grid.d1 @ cur
    h3 = float(np.sqrt(h3))
    checks = {
        "dy_u0_inf": (dyu0, 1.0 / 16.0),
        "v_minus_y_inf": (w_inf, 1.0 / 160.0),
        "vy_inverse_inf": (vy_inv, 2.0),
        "vy_minus_one_h3": (h3, 1.0),
    }
    return {k: {"value": v, "threshold": thr, "ok": bool(v <= thr)} for k, (v, thr) in checks.items()}


# ---------------------------------------------------------------------------
# Gamma stacks


def apply_gamma(grid: ChannelGrid, f: ModeField, state: CoordinateState, t: float | None = None) -> ModeField:
    """Gamma_k f = v_y^{-1} d_y f + i k t f."""
    if t is None:
        t = state.t
    if np.any(state.v_y <= 0.0):
        raise CoordinateDegeneracyError("v_y must be positive")
    vals = (grid.d1 @ f.values) / state.v_y + 1j * f.k * t * f.values
    return ModeField(f.k, vals)


@dataclass
class GammaStack:
    """Table of |k|^m q^n Gamma_k^n omega_k for m + n <= M."""

    k: int
    t: float
    M: int
    grid: ChannelGrid
    gamma_pows: list[np.ndarray]  # Gamma^n omega, n = 0..M
    q_pows: np.ndarray  # q(y)^n, n = 0..M, shape (M+1, ny+1)
    tails: np.ndarray  # spectral tail per n
    tail_tol: float = 1e-4
    _dy_cache: dict = field(default_factory=dict)

    def entry(self, m: int, n: int) -> np.ndarray:
        if m < 0 or n < 0 or m + n > self.M:
            raise KeyError((m, n))
        return abs(self.k) ** m * self.q_pows[n] * self.gamma_pows[n]

    def dy_entry(self, m: int, n: int) -> np.ndarray:
        if (m, n) not in self._dy_cache:
            self._dy_cache[(m, n)] = self.grid.d1 @ self.entry(m, n)
        return self._dy_cache[(m, n)]

    def trusted(self, n: int) -> bool:
        return bool(self.tails[n] <= self.tail_tol)

    def noise(self, n: int) -> float:
        """Measured spectral-noise level of level n, for floor calibration."""
        return float(self.tails[n])

    def noise_dy(self, n: int) -> float:
        """Noise level after one more differentiation of level n."""
        return float(max(self.tails[n], self.tails[min(n + 1, self.M)]))

    def pairs(self):
        for total in range(self.M + 1):
            for m in range(total + 1):
                yield m, total - m


def build_gamma_stack(
    omega_k: ModeField,
    state: CoordinateState,
    M: int,
    grid: ChannelGrid,
    t: float | None = None,
    tail_tol: float = 1e-4,
) -> GammaStack:
    """n-fold Gamma application followed by scaling with q^n |k|^m."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    if t is None:
        t = state.t
    gamma_pows = [omega_k.values.astype(complex)]
    cur = ModeField(omega_k.k, omega_k.values)
    for _ in range(M):
        cur = apply_gamma(grid, cur, state, t)
        gamma_pows.append(cur.values)
    q = eval_q(grid.nodes)
    q_pows = np.array([q**n for n in range(M + 1)])
    tails = np.array([grid.spectral_tail(g) for g in gamma_pows])
    return GammaStack(
        k=omega_k.k,
        t=t,
        M=M,
        grid=grid,
        gamma_pows=gamma_pows,
        q_pows=q_pows,
        tails=tails,
        tail_tol=tail_tol,
    )


def build_field_stack(
    values: np.ndarray,
    state: CoordinateState,
    M: int,
    grid: ChannelGrid,
) -> list[np.ndarray]:
    """dv-bar^n of a real k=0 field (used for G, H, Hbar stacks)."""
    out = [np.asarray(values, dtype=float)]
    for _ in range(M):
        out.append((grid.d1 @ out[-1]) / state.v_y)
    return out
