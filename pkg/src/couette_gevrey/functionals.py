"""Weighted Gevrey energy, dissipation and Cauchy-Kovalevskaya functionals.

Every functional is a truncated double sum over (m, n) with m + n <= M of
nonnegative weighted L^2 norms of stack entries |k|^m q^n Gamma_k^n omega_k.
Sign conventions: the decaying factors phi and lambda enter the CK families
through |phi'|/phi and |lambda'|/lambda so that every CK value is >= 0, and
the W family uses sqrt(-d_t W) which is real since W decays in time.

Gevrey coefficients are combined in log space (a factorial power at m+n=12
is far below the double-precision floor) and only multiplied into norms at
the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coordinates import CoordinateState, GammaStack, build_field_stack
from .spectral import ChannelGrid, ModeField
from .weights import (
    CutoffCascade,
    GevreyCoeffTable,
    WeightParams,
    eval_q,
    eval_W,
    eval_W_derivatives,
)

FAMILIES = ("gamma", "alpha", "mu")
CK_KINDS = ("phi", "lam", "W")


@dataclass
class EvalContext:
    """Shared grid, parameters and weight evaluators for functional sums."""

    grid: ChannelGrid
    params: WeightParams
    cascade: CutoffCascade
    nu: float
    floor_rel: float = 0.0
    tail_multiplier: float = 10.0
    table: GevreyCoeffTable = field(init=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.table = GevreyCoeffTable(self.params)

    def exp_w(self, t: float) -> np.ndarray:
        key = ("eW", round(t, 12))
        if key not in self._cache:
            self._cache[key] = np.exp(eval_W(t, self.grid.nodes, self.nu, self.params))
        return self._cache[key]

    def sqrt_neg_wt(self, t: float) -> np.ndarray:
        key = ("swt", round(t, 12))
        if key not in self._cache:
            wt, _, _ = eval_W_derivatives(t, self.grid.nodes, self.nu, self.params)
            self._cache[key] = np.sqrt(np.maximum(-wt, 0.0))
        return self._cache[key]

    def chi(self, n: int) -> np.ndarray:
        key = ("chi", n)
        if key not in self._cache:
            self._cache[key] = self.cascade.chi(min(n, self.cascade.n_max), self.grid.nodes)
        return self._cache[key]

    def floored(self, values: np.ndarray, tail: float = 0.0) -> np.ndarray:
        """Zero the sub-resolution part of a field before weighting.

        The exponential localization weight reaches e^100 near the walls at
        early times, so any numeric leakage there must be removed before it
        is weighted.  The threshold is relative to the field's peak and is
        calibrated by the field's own measured spectral tail (the trust
        score): genuinely resolved content sits far above it.
        """
        thresh = max(self.floor_rel, self.tail_multiplier * tail)
        if thresh <= 0.0:
            return values
        peak = float(np.max(np.abs(values)))
        if peak == 0.0:
            return values
        out = values.copy()
        out[np.abs(out) < thresh * peak] = 0.0
        return out

    def wsq(self, values: np.ndarray, weight: np.ndarray, tail: float = 0.0) -> float:
        """Quadrature of |values|^2 weight^2."""
        integ = self.grid.integrate(np.abs(self.floored(values, tail)) ** 2 * weight**2)
        return float(np.real(integ))


def _core_sq(ctx: EvalContext, stack: GammaStack, m: int, n: int, family: str, weight: np.ndarray) -> float:
    """The norm content of one (m,n) energy term before coefficients."""
    if family == "gamma":
        return ctx.wsq(stack.entry(m, n), weight, stack.noise(n))
    if family == "alpha":
        return ctx.nu * ctx.wsq(stack.dy_entry(m, n), weight, stack.noise_dy(n))
    if family == "mu":
        return ctx.nu * stack.k**2 * ctx.wsq(stack.entry(m, n), weight, stack.noise(n))
    raise ValueError(f"unknown family {family!r}")


def eval_energy(stack: GammaStack, family: str, ctx: EvalContext, shell_breakdown: bool = False):
    """E^{(family)} truncated at the stack's M, single mode."""
    t = stack.t
    ew = ctx.exp_w(t)
    shells = np.zeros(stack.M + 1)
    for m, n in stack.pairs():
        coef = ctx.table.theta(n) ** 2 * float(ctx.table.a(m, n, t)) ** 2
        shells[m + n] += coef * _core_sq(ctx, stack, m, n, family, ew * ctx.chi(m + n))
    total = float(shells.sum())
    if shell_breakdown:
        return total, shells
    return total


def eval_dissipation(stack: GammaStack, family: str, ctx: EvalContext, shell_breakdown: bool = False):
    """D^{(family)}: same sums with sqrt(nu) grad_k applied once more."""
    t = stack.t
    ew = ctx.exp_w(t)
    nu, k2 = ctx.nu, float(stack.k**2)
    shells = np.zeros(stack.M + 1)
    for m, n in stack.pairs():
        w = ew * ctx.chi(m + n)
        coef = ctx.table.theta(n) ** 2 * float(ctx.table.a(m, n, t)) ** 2
        tn, tdn = stack.noise(n), stack.noise_dy(n)
        if family == "gamma":
            val = nu * (ctx.wsq(stack.dy_entry(m, n), w, tdn) + k2 * ctx.wsq(stack.entry(m, n), w, tn))
        elif family == "alpha":
            dyy = ctx.grid.d1 @ stack.dy_entry(m, n)
            val = nu**2 * (ctx.wsq(dyy, w, tdn) + k2 * ctx.wsq(stack.dy_entry(m, n), w, tdn))
        elif family == "mu":
            val = nu**2 * k2 * (ctx.wsq(stack.dy_entry(m, n), w, tdn) + k2 * ctx.wsq(stack.entry(m, n), w, tn))
        else:
            raise ValueError(f"unknown family {family!r}")
        shells[m + n] += coef * val
    total = float(shells.sum())
    if shell_breakdown:
        return total, shells
    return total


def eval_ck(stack: GammaStack, family: str, kind: str, ctx: EvalContext) -> float:
    """CK^{(family; kind)} with the nonnegative-orientation convention."""
    t = stack.t
    tab = ctx.table
    ew = ctx.exp_w(t)
    if kind == "phi":
        rate = abs(tab.phi_dot(t)) / tab.phi(t)
    elif kind == "lam":
        rate = abs(tab.lam_dot(t)) / tab.lam(t)
    elif kind == "W":
        swt = ctx.sqrt_neg_wt(t)
    else:
        raise ValueError(f"unknown CK kind {kind!r}")
    total = 0.0
    for m, n in stack.pairs():
        coef = tab.theta(n) ** 2 * float(tab.a(m, n, t)) ** 2
        if kind == "phi":
            total += coef * (1.0 + n) * rate * _core_sq(ctx, stack, m, n, family, ew * ctx.chi(m + n))
        elif kind == "lam":
            total += coef * (m + n) * rate * _core_sq(ctx, stack, m, n, family, ew * ctx.chi(m + n))
        else:
            total += coef * _core_sq(ctx, stack, m, n, family, swt * ew * ctx.chi(m + n))
    return float(total)


def hermitian_mode_weight(k: int) -> float:
    return 1.0 if k == 0 else 2.0


def aggregate(stacks: dict[int, GammaStack], fn) -> float:
    """Sum a per-stack evaluator over modes with Hermitian doubling."""
    return float(sum(hermitian_mode_weight(k) * fn(stack) for k, stack in stacks.items()))


def truncation_tail(shells: np.ndarray) -> float:
    total = float(shells.sum())
    if total <= 0.0:
        return 0.0
    return float(shells[-1] / total)


# ---------------------------------------------------------------------------
# coordinate system functionals


def _bracket(t: float) -> float:
    return math.sqrt(1.0 + t * t)


def eval_coord_functionals(
    state: CoordinateState,
    ctx: EvalContext,
    family: str = "gamma",
    M: int = 6,
) -> dict[str, float]:
    """E/D/CK for the coordinate fields G, H, Hbar at the state's time.

    The n-index stacks are dv-bar^n applications (these are k = 0
    quantities); i_iota picks up one extra d_y for the alpha family.
    """
    if family not in ("gamma", "alpha"):
        raise ValueError("coordinate functionals exist for gamma and alpha only")
    i_io = 1 if family == "alpha" else 0
    t = state.t
    tab, p = ctx.table, ctx.params
    grid = ctx.grid
    ew_half = np.sqrt(ctx.exp_w(t))
    swt = ctx.sqrt_neg_wt(t)
    br = _bracket(t)
    pow_t = br ** (3.0 + 2.0 / p.s)
    g_stack = build_field_stack(state.G, state, M, grid)
    h_stack = build_field_stack(state.H, state, M, grid)
    hb_stack = build_field_stack(state.Hbar, state, M, grid)

    def d_y(vals, j):
        out = vals
        for _ in range(j):
            out = grid.d1 @ out
        return out

    out: dict[str, float] = {}
    # Hbar family
    e = d = ck = 0.0
    for n in range(M + 1):
        th2 = tab.theta(n) ** 2
        an1 = float(tab.a(0, n + 1, t))
        an1_dot = float(tab.a_dot(0, n + 1, t))
        fac = ctx.nu ** (i_io / 2.0) * th2 * (n + 1) ** (2.0 * p.s - 2.0) * pow_t
        base = d_y(hb_stack[n], i_io)
        w = ew_half * ctx.chi(n)
        e += fac * an1**2 * ctx.wsq(base, w)
        d += ctx.nu * fac * an1**2 * ctx.wsq(d_y(hb_stack[n], 1 + i_io), w)
        ck += fac * an1**2 * ctx.wsq(base, swt * w)
        ck += fac * (-an1 * an1_dot) * ctx.wsq(base, w)
    out["E_Hbar"], out["D_Hbar"], out["CK_Hbar"] = float(e), float(d), float(ck)

    # G family; the n = 0 shell carries the <t>^(4 - 2 K_eps) weight
    th0 = tab.theta(0) ** 2
    pow0 = br ** (4.0 - 2.0 * p.K_eps)
    ones = np.ones_like(grid.nodes)
    e = th0 * pow0 * ctx.wsq(d_y(g_stack[0], i_io), ones)
    d = ctx.nu * th0 * pow0 * ctx.wsq(d_y(g_stack[0], 1 + i_io), ones)
    ck = th0 * abs(4.0 - 2.0 * p.K_eps) * abs(t) * br ** (2.0 - 2.0 * p.K_eps) * ctx.wsq(
        d_y(g_stack[0], i_io), ones
    )
    for n in range(1, M + 1):
        th2 = tab.theta(n) ** 2
        an = float(tab.a(0, n, t))
        an_dot = float(tab.a_dot(0, n, t))
        base = d_y(g_stack[n], i_io)
        w = ew_half * ctx.chi(n - 1 + i_io)
        e += th2 * an**2 * pow_t * ctx.wsq(base, w)
        d += ctx.nu * th2 * an**2 * pow_t * ctx.wsq(d_y(g_stack[n], 1 + i_io), w)
        ck += th2 * an**2 * pow_t * ctx.wsq(base, swt * w)
        ck += th2 * (-an * an_dot) * pow_t * ctx.wsq(base, ctx.chi(n - 1 + i_io))
    out["E_G"], out["D_G"], out["CK_G"] = float(e), float(d), float(ck)

    # H family
    e = d = ck = 0.0
    for n in range(M + 1):
        th2 = tab.theta(n) ** 2
        an = float(tab.a(0, n, t))
        an_dot = float(tab.a_dot(0, n, t))
        fac = th2 * ctx.nu ** (i_io / 2.0)
        base = d_y(h_stack[n], i_io)
        w = ew_half * ctx.chi(n)
        e += fac * an**2 * ctx.wsq(base, w)
        d += ctx.nu * fac * an**2 * ctx.wsq(d_y(h_stack[n], 1 + i_io), w)
        ck += fac * (-an * an_dot) * ctx.wsq(base, w)
        ck += fac * an**2 * ctx.wsq(base, swt * w)
    out["E_H"], out["D_H"], out["CK_H"] = float(e), float(d), float(ck)
    return out


# ---------------------------------------------------------------------------
# ICC operators


def in_index_set(a: int, b: int, c: int, n: int) -> bool:
    """(a,b,c) admissible for level n: a + b + c <= n, or no boundary weight."""
    return a == 0 or a + b + c <= n


def _divide_by_q_power(grid: ChannelGrid, values: np.ndarray, a: int) -> np.ndarray:
    """values / q^a with the wall limits taken from the linear branch of q.

    Near y = +-1 the weight is exactly 99(1 -+ y), so the endpoint limit is
    the a-th Taylor coefficient of the numerator: N/q^a -> (-+1)^a
    N^{(a)}(+-1) / (a! 99^a).
    """
    if a == 0:
        return values
    q = eval_q(grid.nodes)
    out = np.empty_like(values, dtype=complex)
    out[1:-1] = values[1:-1] / q[1:-1] ** a
    deriv = values
    for _ in range(a):
        deriv = grid.d1 @ deriv
    fact = math.factorial(a) * 99.0**a
    out[0] = deriv[0] / fact
    out[-1] = (-1.0) ** a * deriv[-1] / fact
    return out


def eval_icc(
    f_k: ModeField,
    a: int,
    b: int,
    c: int,
    m: int,
    n: int,
    variant: str,
    coord: CoordinateState,
    ctx: EvalContext,
    t: float | None = None,
) -> tuple[ModeField, bool]:
    """S/J/J0 operator applied to f_k; returns (field, in_index_set).

    Outside the index set the boundary weight (m+n)/q is not defined and the
    paper's indicator makes the operator zero; the flag reports that case.
    """
    if min(a, b, c, m, n) < 0:
        raise ValueError("indices must be nonnegative")
    if t is None:
        t = coord.t
    grid = ctx.grid
    k = f_k.k
    if variant == "J0" and k != 0:
        raise ValueError("J0 is the k = 0 operator")
    if not in_index_set(a, b, c, n):
        return ModeField(k, np.zeros(grid.ny + 1, dtype=complex)), False
    # Gamma^n f (for J0 the vector field is dv-bar, the k=0 Gamma)
    gam = f_k.values.astype(complex)
    for _ in range(n):
        gam = (grid.d1 @ gam) / coord.v_y + 1j * k * t * gam
    q = eval_q(grid.nodes)
    base = abs(k) ** m * q**n * gam
    if variant == "S":
        out = base
        for _ in range(b):
            out = grid.d1 @ out
        out = _divide_by_q_power(grid, out, a) * float(m + n) ** a * abs(k) ** c
        return ModeField(k, out), True
    if variant in ("J", "J0"):
        weight_count = n if variant == "J0" else m + n
        out = ctx.chi(weight_count) * base
        for _ in range(b):
            out = (grid.d1 @ out) / coord.v_y
        out = _divide_by_q_power(grid, out, a) * float(weight_count) ** a * abs(k) ** c
        return ModeField(k, out), True
    raise ValueError(f"unknown ICC variant {variant!r}")


def icc_vector_norm_sq(
    f_k: ModeField,
    level: int,
    m: int,
    n: int,
    variant: str,
    coord: CoordinateState,
    ctx: EvalContext,
    t: float | None = None,
    cumulative: bool = False,
) -> float:
    """||S^{(level)}|| or ||J^{(level)}|| squared: sum over a+b+c = level."""
    total = 0.0
    levels = range(level + 1) if cumulative else (level,)
    for ell in levels:
        for a in range(ell + 1):
            for b in range(ell - a + 1):
                c = ell - a - b
                if variant == "J0" and c != 0:
                    continue
                fld, ok = eval_icc(f_k, a, b, c, m, n, variant, coord, ctx, t)
                if ok:
                    total += ctx.wsq(fld.values, np.ones_like(ctx.grid.nodes))
    return float(total)


# ---------------------------------------------------------------------------
# source pairings


def eval_sources(stack_f: GammaStack, stack_omega: GammaStack, family: str, ctx: EvalContext) -> float:
    """Re pairings of a forcing stack against the solution stack."""
    if stack_f.M != stack_omega.M or stack_f.k != stack_omega.k:
        raise ValueError("stacks must share the truncation and mode")
    if abs(stack_f.t - stack_omega.t) > 1e-12:
        raise ValueError("stacks must share the evaluation time")
    t = stack_omega.t
    ew2 = ctx.exp_w(t) ** 2
    nu, k2 = ctx.nu, float(stack_omega.k**2)
    total = 0.0
    for m, n in stack_omega.pairs():
        coef = ctx.table.theta(n) ** 2 * float(ctx.table.a(m, n, t)) ** 2
        chi2 = ctx.chi(m + n) ** 2
        if family == "gamma":
            pair = stack_f.entry(m, n) * np.conj(stack_omega.entry(m, n))
        elif family == "alpha":
            pair = nu * stack_f.dy_entry(m, n) * np.conj(stack_omega.dy_entry(m, n))
        elif family == "mu":
            pair = nu * k2 * stack_f.entry(m, n) * np.conj(stack_omega.entry(m, n))
        else:
            raise ValueError(f"unknown family {family!r}")
        total += coef * float(np.real(ctx.grid.integrate(pair * chi2 * ew2)))
    return float(total)


# ---------------------------------------------------------------------------
# hypocoercivity tables


def eval_hypocoercivity(stack: GammaStack, ctx: EvalContext, c_alpha: float = 0.125) -> dict:
    """Per-(m,n) energy/dissipation/CK triples of the mixed functional."""
    if not (1.0 / 16.0 <= c_alpha <= 0.5):
        raise ValueError("c_alpha outside its universal range [1/16, 1/2]")
    t = stack.t
    tab = ctx.table
    ew = ctx.exp_w(t)
    swt = ctx.sqrt_neg_wt(t)
    nu, k2 = ctx.nu, float(stack.k**2)
    phi_rate = abs(tab.phi_dot(t)) / tab.phi(t)
    out = {}
    for m, n in stack.pairs():
        a2 = float(tab.a(m, n, t)) ** 2
        w = ew * ctx.chi(m + n)
        tn, tdn = stack.noise(n), stack.noise_dy(n)
        e_alpha = a2 * nu * ctx.wsq(stack.dy_entry(m, n), w, tdn)
        e_mu = a2 * nu * k2 * ctx.wsq(stack.entry(m, n), w, tn)
        e_gamma = a2 * ctx.wsq(stack.entry(m, n), w, tn)
        dyy = ctx.grid.d1 @ stack.dy_entry(m, n)
        d_alpha = a2 * nu**2 * (ctx.wsq(dyy, w, tdn) + k2 * ctx.wsq(stack.dy_entry(m, n), w, tdn))
        d_mu = a2 * nu**2 * k2 * (ctx.wsq(stack.dy_entry(m, n), w, tdn) + k2 * ctx.wsq(stack.entry(m, n), w, tn))
        d_gamma = a2 * nu * (ctx.wsq(stack.dy_entry(m, n), w, tdn) + k2 * ctx.wsq(stack.entry(m, n), w, tn))
        ck_phi = (1.0 + n) * phi_rate * (c_alpha * e_alpha + e_mu + e_gamma)
        ck_w = (
            c_alpha * a2 * nu * ctx.wsq(stack.dy_entry(m, n), swt * w, tdn)
            + a2 * nu * k2 * ctx.wsq(stack.entry(m, n), swt * w, tn)
            + a2 * ctx.wsq(stack.entry(m, n), swt * w, tn)
        )
        out[(m, n)] = {
            "E": c_alpha * e_alpha + e_mu + e_gamma,
            "E_gamma": e_gamma,
            "E_alpha": e_alpha,
            "E_mu": e_mu,
            "D": c_alpha * d_alpha + d_mu + d_gamma,
            "CK_phi": ck_phi,
            "CK_W": ck_w,
        }
    return out


# ---------------------------------------------------------------------------
# switch inequality diagnostics


def d_switch_sides(stack: GammaStack, ctx: EvalContext) -> tuple[float, float]:
    """LHS/RHS of the product-rule switch: moving chi inside the gradient.

    LHS = sum a^2 nu || d_y(chi omega-ring) e^W ||^2, RHS = sum D^gamma
    shells; the measured ratio realizes the stated comparison constant.
    """
    t = stack.t
    ew = ctx.exp_w(t)
    lhs = 0.0
    for m, n in stack.pairs():
        a2 = float(ctx.table.a(m, n, t)) ** 2
        inner = ctx.grid.d1 @ (ctx.chi(m + n) * stack.entry(m, n))
        lhs += a2 * ctx.nu * ctx.wsq(inner, ew, stack.noise_dy(n))
    rhs = eval_dissipation(stack, "gamma", ctx)
    return float(lhs), float(rhs)


def full_report(
    stacks: dict[int, GammaStack],
    ctx: EvalContext,
    coord: CoordinateState | None = None,
    coord_M: int = 6,
) -> dict:
    """All omega families plus coordinate functionals, JSON-friendly."""
    report: dict = {"t": next(iter(stacks.values())).t if stacks else 0.0}
    report["untrusted_levels"] = sorted(
        {n for st in stacks.values() for n in range(st.M + 1) if not st.trusted(n)}
    )
    for fam in FAMILIES:
        e_total, e_shells = 0.0, None
        for k, st in stacks.items():
            wk = hermitian_mode_weight(k)
            e, shells = eval_energy(st, fam, ctx, shell_breakdown=True)
            e_total += wk * e
            e_shells = wk * shells if e_shells is None else e_shells + wk * shells
        report[f"E_{fam}"] = e_total
        report[f"tail_E_{fam}"] = truncation_tail(e_shells if e_shells is not None else np.zeros(1))
        if fam == "gamma" and e_shells is not None:
            report["shells_E_gamma"] = [float(v) for v in e_shells]
        report[f"D_{fam}"] = aggregate(stacks, lambda s, f=fam: eval_dissipation(s, f, ctx))
        for kind in CK_KINDS:
            report[f"CK_{fam}_{kind}"] = aggregate(
                stacks, lambda s, f=fam, kk=kind: eval_ck(s, f, kk, ctx)
            )
    if coord is not None:
        for fam in ("gamma", "alpha"):
            vals = eval_coord_functionals(coord, ctx, fam, M=coord_M)
            for key, val in vals.items():
                report[f"coord_{key}_{fam}"] = val
    return report
