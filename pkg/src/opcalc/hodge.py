"""Hodge splittings for constant and variable coefficients.

The central object is the perturbed operator ``gamma + B1 gamma_tilde B2``
with bounded matrix-valued coefficient fields B1, B2.  Constant
coefficients are handled frequency by frequency; variable coefficients
go through preconditioned Krylov resolvents, with dense assembly as the
oracle on small grids.
"""

from __future__ import annotations

import dataclasses
import re
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import krylov, matcalc, symbols, torus
from .errors import (
    DecompositionFailure,
    HodgeDecompositionUncertain,
    PerturbationTooLarge,
)

OFFRANGE_NILPOTENCE = "offrange_nilpotence"
COERCIVE_MULTIPLIERS = "coercive_multipliers"


@dataclasses.dataclass(frozen=True)
class MatrixField:
    """Pointwise N x N multiplication operator on grid fields."""

    grid: torus.TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape + v.shape[-2:] or v.shape[-1] != v.shape[-2]:
            raise ValueError(f"matrix field shape {v.shape} incompatible with grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("matrix field has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def big_n(self) -> int:
        return self.values.shape[-1]

    @cached_property
    def inf_norm(self) -> float:
        """Essential sup of the pointwise operator norm."""
        flat = self.values.reshape(-1, self.big_n, self.big_n)
        return float(np.linalg.svd(flat, compute_uv=False)[:, 0].max())

    def apply(self, u: torus.GridField) -> torus.GridField:
        return torus.GridField(
            u.grid, np.einsum("...ij,...j->...i", self.values, u.values)
        )

    def adjoint(self) -> "MatrixField":
        return MatrixField(self.grid, np.conj(np.swapaxes(self.values, -1, -2)))

    def __add__(self, other: "MatrixField") -> "MatrixField":
        return MatrixField(self.grid, self.values + other.values)

    def __sub__(self, other: "MatrixField") -> "MatrixField":
        return MatrixField(self.grid, self.values - other.values)

    def __mul__(self, c) -> "MatrixField":
        return MatrixField(self.grid, self.values * c)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, grid: torus.TorusGrid, big_n: int) -> "MatrixField":
        eye = np.broadcast_to(np.eye(big_n, dtype=complex), grid.shape + (big_n, big_n))
        return cls(grid, eye.copy())


def random_direction(grid: torus.TorusGrid, big_n: int, seed: int) -> MatrixField:
    """Random matrix field normalized to sup norm one."""
    rng = np.random.default_rng(seed)
    shape = grid.shape + (big_n, big_n)
    vals = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    e = MatrixField(grid, vals)
    return MatrixField(grid, vals / e.inf_norm)


def diagonal_direction(grid: torus.TorusGrid, big_n: int, seed: int) -> MatrixField:
    """Random pointwise-diagonal matrix field with sup norm one.

    Diagonal coefficients commute with coordinate-aligned kernels and
    ranges, so products of them keep the twisted part nilpotent for the
    bundled symbol pairs; use these to perturb within the admissible class.
    """
    rng = np.random.default_rng(seed)
    shape = grid.shape + (big_n,)
    diag = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    vals = np.zeros(grid.shape + (big_n, big_n), dtype=complex)
    idx = np.arange(big_n)
    vals[..., idx, idx] = diag
    e = MatrixField(grid, vals)
    return MatrixField(grid, vals / e.inf_norm)


def perturbed_identity(
    grid: torus.TorusGrid, big_n: int, eps: float, seed: int, *, diagonal: bool = False
) -> MatrixField:
    direction = diagonal_direction if diagonal else random_direction
    return MatrixField.identity(grid, big_n) + eps * direction(grid, big_n, seed)


_EXPR_RE = re.compile(r"^identity\+([0-9.eE+-]+)\*(random|diagrandom)\((\d+)\)$")


def parse_coefficient(expr: str, grid: torus.TorusGrid, big_n: int) -> MatrixField:
    """CLI coefficient syntax: 'identity', 'identity+eps*random(seed)',
    'identity+eps*diagrandom(seed)', or a path to a binary matrix-field
    file.  The diagonal form stays inside the admissible class for the
    bundled pairs (twisted nilpotence is preserved)."""
    if expr == "identity":
        return MatrixField.identity(grid, big_n)
    m = _EXPR_RE.match(expr.replace(" ", ""))
    if m:
        return perturbed_identity(
            grid, big_n, float(m.group(1)), int(m.group(3)),
            diagonal=m.group(2) == "diagrandom",
        )
    loaded_grid, values = torus.load_field(expr)
    if loaded_grid != grid or values.shape[-1] != big_n:
        raise ValueError(f"{expr}: coefficient file does not match grid/N")
    return MatrixField(grid, values)


@dataclasses.dataclass(frozen=True)
class CoefficientPair:
    b1: MatrixField
    b2: MatrixField

    def __post_init__(self):
        if self.b1.grid != self.b2.grid or self.b1.big_n != self.b2.big_n:
            raise ValueError("coefficient fields must share grid and size")

    @classmethod
    def identity(cls, grid: torus.TorusGrid, big_n: int) -> "CoefficientPair":
        eye = MatrixField.identity(grid, big_n)
        return cls(eye, eye)

    def distance(self, other: "CoefficientPair") -> float:
        """Sup-norm distance: ||B1 - A1|| + ||B2 - A2||."""
        return (self.b1 - other.b1).inf_norm + (self.b2 - other.b2).inf_norm


@dataclasses.dataclass(frozen=True)
class VariableOp:
    """First-order operator: constant part plus coefficient-twisted part."""

    pair: symbols.HodgeDiracSymbolPair
    coeffs: CoefficientPair
    grid: torus.TorusGrid

    def __post_init__(self):
        if self.coeffs.b1.grid != self.grid:
            raise ValueError("coefficients live on a different grid")
        if self.coeffs.b1.big_n != self.pair.big_n:
            raise ValueError("coefficient size does not match symbol size")

    @property
    def big_n(self) -> int:
        return self.pair.big_n

    @property
    def dim(self) -> int:
        return self.grid.size * self.big_n

    @cached_property
    def gamma_op(self) -> torus.MultiplierOp:
        return torus.symbol_multiplier(self.pair.gamma, self.grid)

    @cached_property
    def gamma_tilde_op(self) -> torus.MultiplierOp:
        return torus.symbol_multiplier(self.pair.gamma_tilde, self.grid)

    def apply_twisted(self, u: torus.GridField) -> torus.GridField:
        """B1 gamma_tilde (B2 u)."""
        return self.coeffs.b1.apply(
            torus.apply_multiplier(self.gamma_tilde_op, self.coeffs.b2.apply(u))
        )

    def apply(self, u: torus.GridField) -> torus.GridField:
        return torus.apply_multiplier(self.gamma_op, u) + self.apply_twisted(u)

    def apply_flat(self, vec: np.ndarray) -> np.ndarray:
        u = torus.GridField.from_flat(self.grid, self.big_n, vec)
        return self.apply(u).flat()

    @classmethod
    def constant(
        cls, pair: symbols.HodgeDiracSymbolPair, grid: torus.TorusGrid
    ) -> "VariableOp":
        return cls(pair, CoefficientPair.identity(grid, pair.big_n), grid)


def swap_operator(op: VariableOp) -> VariableOp:
    """The companion operator with the two parts and coefficients exchanged."""
    swapped = symbols.HodgeDiracSymbolPair(op.pair.gamma_tilde, op.pair.gamma)
    return VariableOp(swapped, CoefficientPair(op.coeffs.b2, op.coeffs.b1), op.grid)


# ---------------------------------------------------------------------------
# Projections.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class HodgeProjections:
    """Three complementary projections; callables on grid fields."""

    p0: Callable[[torus.GridField], torus.GridField]
    p_gamma: Callable[[torus.GridField], torus.GridField]
    p_gamma_tilde: Callable[[torus.GridField], torus.GridField]
    multipliers: dict | None = None
    report: dict | None = None


def constant_hodge_projections(
    pair: symbols.HodgeDiracSymbolPair, grid: torus.TorusGrid, *, cond_limit=1e12
) -> HodgeProjections:
    """Frequency-wise projections onto kernel / range(gamma) / range(gamma_tilde).

    At each nonzero frequency the three subspace bases are assembled into
    a basis matrix which is inverted; failure to span raises
    DecompositionFailure.  The zero frequency carries p0 = I.
    """
    n_comp = pair.big_n
    lattice = grid.lattice.reshape(-1, grid.n)
    g_mats = pair.gamma(grid.lattice).reshape(-1, n_comp, n_comp)
    gt_mats = pair.gamma_tilde(grid.lattice).reshape(-1, n_comp, n_comp)
    p0 = np.zeros((lattice.shape[0], n_comp, n_comp), dtype=complex)
    pg = np.zeros_like(p0)
    pgt = np.zeros_like(p0)
    eye = np.eye(n_comp, dtype=complex)
    for i, xi in enumerate(lattice):
        if np.all(xi == 0.0):
            p0[i] = eye
            continue
        g, gt = g_mats[i], gt_mats[i]
        kb = matcalc.kernel_basis(g + gt)
        rg = matcalc.range_basis(g)
        rt = matcalc.range_basis(gt)
        dims = kb.shape[1] + rg.shape[1] + rt.shape[1]
        if dims != n_comp:
            raise DecompositionFailure(
                f"subspace dimensions {kb.shape[1]}+{rg.shape[1]}+{rt.shape[1]} != {n_comp}",
                xi=xi,
            )
        s = np.hstack([kb, rg, rt])
        if np.linalg.cond(s) > cond_limit:
            raise DecompositionFailure("subspace basis matrix ill-conditioned", xi=xi)
        sinv = np.linalg.inv(s)
        k0, k1 = kb.shape[1], kb.shape[1] + rg.shape[1]
        p0[i] = s[:, :k0] @ sinv[:k0]
        pg[i] = s[:, k0:k1] @ sinv[k0:k1]
        pgt[i] = s[:, k1:] @ sinv[k1:]
    shape = grid.shape + (n_comp, n_comp)
    ops = {
        "p0": torus.MultiplierOp(grid, p0.reshape(shape)),
        "p_gamma": torus.MultiplierOp(grid, pg.reshape(shape)),
        "p_gamma_tilde": torus.MultiplierOp(grid, pgt.reshape(shape)),
    }
    return HodgeProjections(
        p0=lambda u: torus.apply_multiplier(ops["p0"], u),
        p_gamma=lambda u: torus.apply_multiplier(ops["p_gamma"], u),
        p_gamma_tilde=lambda u: torus.apply_multiplier(ops["p_gamma_tilde"], u),
        multipliers=ops,
    )


# ---------------------------------------------------------------------------
# Coefficient conditions.
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class CoefficientConditionReport:
    nilpotence_residual: float
    coercivity_primal: float
    coercivity_dual: float
    floor: float
    nilpotence_tol: float
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures

    def describe(self) -> str:
        status = "pass" if self.passed else "fail: " + ", ".join(self.failures)
        return (
            f"{status} (twisted nilpotence residual {self.nilpotence_residual:.2e}, "
            f"coercivity {self.coercivity_primal:.3g} / dual {self.coercivity_dual:.3g})"
        )


def check_coefficient_conditions(
    op: VariableOp,
    *,
    p: float = 2.0,
    trials: int = 8,
    seed: int = 0,
    floor: float = 1e-6,
    nilpotence_tol: float = 1e-8,
    band: int | None = None,
) -> CoefficientConditionReport:
    """Monte-Carlo check of the two coefficient conditions.

    First, the twisted operator must stay nilpotent:
    gamma_tilde B2 B1 gamma_tilde annihilates random band-limited fields.
    Second, B1 must be bounded below on range(gamma_tilde) and B2* on the
    adjoint range; the observed lower bounds are reported.
    """
    rng = np.random.default_rng(seed)
    gt = op.gamma_tilde_op
    gt_adj = gt.adjoint()
    p_dual = p / (p - 1.0)
    nilp = 0.0
    c_primal = np.inf
    c_dual = np.inf
    for _ in range(trials):
        v = torus.random_band_limited(
            op.grid, op.big_n, seed=int(rng.integers(2**31)), band=band
        )
        vn = torus.lp_norm(v, p)
        if vn == 0:
            continue
        w = torus.apply_multiplier(gt, v)
        chain = torus.apply_multiplier(
            gt, op.coeffs.b2.apply(op.coeffs.b1.apply(w))
        )
        nilp = max(nilp, torus.lp_norm(chain, p) / vn)
        wn = torus.lp_norm(w, p)
        if wn > 1e-13 * vn:
            c_primal = min(c_primal, torus.lp_norm(op.coeffs.b1.apply(w), p) / wn)
        wd = torus.apply_multiplier(gt_adj, v)
        wdn = torus.lp_norm(wd, p_dual)
        if wdn > 1e-13 * vn:
            c_dual = min(
                c_dual,
                torus.lp_norm(op.coeffs.b2.adjoint().apply(wd), p_dual) / wdn,
            )
    if not np.isfinite(c_primal):
        c_primal = 0.0
    if not np.isfinite(c_dual):
        c_dual = 0.0
    failures = []
    if nilp > nilpotence_tol:
        failures.append(OFFRANGE_NILPOTENCE)
    if min(c_primal, c_dual) < floor:
        failures.append(COERCIVE_MULTIPLIERS)
    return CoefficientConditionReport(
        nilp, float(c_primal), float(c_dual), floor, nilpotence_tol, failures
    )


# ---------------------------------------------------------------------------
# Resolvents.
# ---------------------------------------------------------------------------


def variable_resolvent(
    op: VariableOp,
    t: float,
    u: torus.GridField,
    *,
    rtol: float = 1e-10,
    restart: int = 50,
    maxiter: int = 5000,
) -> torus.GridField:
    """Solve (I + i t Op) x = u by preconditioned GMRES.

    The preconditioner is the exact constant-coefficient resolvent
    multiplier, which inverts the system exactly at B = I.
    """
    if t == 0:
        return u
    mats = op.pair.total()(op.grid.lattice)
    eye = np.eye(op.big_n, dtype=complex)
    pre_mats = np.linalg.inv(eye + 1j * t * mats)
    pre_op = torus.MultiplierOp(op.grid, pre_mats)

    def matvec(vec):
        f = torus.GridField.from_flat(op.grid, op.big_n, vec)
        return (f + 1j * t * op.apply(f)).flat()

    def precond(vec):
        f = torus.GridField.from_flat(op.grid, op.big_n, vec)
        return torus.apply_multiplier(pre_op, f).flat()

    x = krylov.solve_or_raise(
        matvec,
        u.flat(),
        what=f"resolvent at t={t}",
        rtol=rtol,
        restart=restart,
        maxiter=maxiter,
        precond=precond,
    )
    return torus.GridField.from_flat(op.grid, op.big_n, x)


def smoothing_apply(op: VariableOp, t: float, u: torus.GridField, **kw) -> torus.GridField:
    """(I + t^2 Op^2)^{-1} u via the two commuting resolvent factors."""
    return variable_resolvent(op, -t, variable_resolvent(op, t, u, **kw), **kw)


def bandpass_apply(op: VariableOp, t: float, u: torus.GridField, **kw) -> torus.GridField:
    """t Op (I + t^2 Op^2)^{-1} u, computed from the two resolvents."""
    plus = variable_resolvent(op, t, u, **kw)
    minus = variable_resolvent(op, -t, u, **kw)
    return 0.5j * (plus - minus)


# ---------------------------------------------------------------------------
# Dense assembly (oracle path, small grids).
# ---------------------------------------------------------------------------


def dense_operator(apply_fn, grid: torus.TorusGrid, big_n: int) -> np.ndarray:
    def matvec(vec):
        return apply_fn(torus.GridField.from_flat(grid, big_n, vec)).flat()

    return krylov.dense_from_matvec(matvec, grid.size * big_n)


def assemble_dense(op: VariableOp) -> np.ndarray:
    return dense_operator(op.apply, op.grid, op.big_n)


def dense_matrix_field(mf: MatrixField) -> np.ndarray:
    """Block-diagonal dense matrix of a pointwise multiplication operator."""
    n = mf.big_n
    blocks = mf.values.reshape(-1, n, n)
    dim = blocks.shape[0] * n
    out = np.zeros((dim, dim), dtype=complex)
    for i, b in enumerate(blocks):
        out[i * n : (i + 1) * n, i * n : (i + 1) * n] = b
    return out


def dense_resolvent(op: VariableOp, t: float, u: torus.GridField) -> torus.GridField:
    """LU oracle for the resolvent; use on small grids only."""
    m = assemble_dense(op)
    x = np.linalg.solve(np.eye(op.dim) + 1j * t * m, u.flat())
    return torus.GridField.from_flat(op.grid, op.big_n, x)


def dense_hodge_projections(op: VariableOp):
    """Dense subspace oracle: projections from explicit kernel/range bases."""
    m = assemble_dense(op)
    g = dense_operator(
        lambda u: torus.apply_multiplier(op.gamma_op, u), op.grid, op.big_n
    )
    gt_b = dense_operator(op.apply_twisted, op.grid, op.big_n)
    kb = matcalc.kernel_basis(m)
    rg = matcalc.range_basis(g)
    rt = matcalc.range_basis(gt_b)
    if kb.shape[1] + rg.shape[1] + rt.shape[1] != op.dim:
        raise DecompositionFailure(
            f"dense subspaces do not span: {kb.shape[1]}+{rg.shape[1]}+{rt.shape[1]}"
            f" != {op.dim}"
        )
    s = np.hstack([kb, rg, rt])
    sinv = np.linalg.inv(s)
    k0, k1 = kb.shape[1], kb.shape[1] + rg.shape[1]
    return (
        s[:, :k0] @ sinv[:k0],
        s[:, k0:k1] @ sinv[k0:k1],
        s[:, k1:] @ sinv[k1:],
    )


# ---------------------------------------------------------------------------
# Limit-formula projections for variable coefficients.
# ---------------------------------------------------------------------------


def variable_hodge_projections(
    op: VariableOp,
    t_sequence: Sequence[float] = (2.0**10, 2.0**12, 2.0**14),
    *,
    tol: float = 1e-6,
    probes: int = 3,
    seed: int = 0,
    rtol: float = 1e-10,
) -> HodgeProjections:
    """Projections from the large-t limit formulas.

    p0 ~ (I + t^2 Op^2)^{-1}, p_gamma ~ gamma . t^2 Op (I + t^2 Op^2)^{-1},
    and likewise for the twisted part.  Convergence is accepted when
    successive values along t_sequence agree within tol on random probe
    fields; otherwise HodgeDecompositionUncertain carries the curve.
    """
    if len(t_sequence) < 2:
        raise ValueError("need at least two scales to check convergence")
    # the attainable GMRES residual degrades like eps * t * ||op||; ask only
    # for what floating point can deliver at the largest scales
    mats = op.pair.total()(op.grid.lattice)
    big = float(np.linalg.svd(mats.reshape(-1, op.big_n, op.big_n),
                              compute_uv=False)[:, 0].max())
    big *= max(1.0, op.coeffs.b1.inf_norm * op.coeffs.b2.inf_norm)

    def kw(t):
        floor = 30.0 * np.finfo(float).eps * (1.0 + abs(t) * big)
        return dict(rtol=max(rtol, floor))

    def p0_at(t, u):
        return smoothing_apply(op, t, u, **kw(t))

    def pg_at(t, u):
        return torus.apply_multiplier(op.gamma_op, t * bandpass_apply(op, t, u, **kw(t)))

    def pgt_at(t, u):
        return op.apply_twisted(t * bandpass_apply(op, t, u, **kw(t)))

    rng = np.random.default_rng(seed)
    fields = []
    for _ in range(probes):
        f = torus.random_band_limited(op.grid, op.big_n, seed=int(rng.integers(2**31)))
        fields.append(f * (1.0 / torus.lp_norm(f, 2.0)))
    curve = []
    prev = None
    for t in t_sequence:
        vals = [
            [p0_at(t, f) for f in fields],
            [pg_at(t, f) for f in fields],
            [pgt_at(t, f) for f in fields],
        ]
        if prev is not None:
            diff = max(
                torus.lp_norm(a - b, 2.0)
                for row_new, row_old in zip(vals, prev)
                for a, b in zip(row_new, row_old)
            )
            curve.append({"t": t, "max_diff": diff})
        prev = vals
    worst = max(c["max_diff"] for c in curve)
    if worst > tol:
        raise HodgeDecompositionUncertain(
            f"limit formulas not settled: max successive difference {worst:.3e}",
            curve=curve,
        )
    t_final = t_sequence[-1]
    return HodgeProjections(
        p0=lambda u: p0_at(t_final, u),
        p_gamma=lambda u: pg_at(t_final, u),
        p_gamma_tilde=lambda u: pgt_at(t_final, u),
        report={"curve": curve, "t_final": t_final},
    )


# ---------------------------------------------------------------------------
# Perturbation machinery.
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class SplitPerturbation:
    p0_new: np.ndarray
    p1_new: np.ndarray
    shift0: float
    shift1: float


def perturb_splitting(p0: np.ndarray, p1: np.ndarray, t_op: np.ndarray) -> SplitPerturbation:
    """Perturb a complementary splitting by a small map on range(p1).

    Builds U = (I - T p1)^{-1} and the tilted projections p0 U and
    (I - T p1) p1 U; requires ||T|| < 1/(2 ||p1||).
    """
    p0 = np.asarray(p0, dtype=complex)
    p1 = np.asarray(p1, dtype=complex)
    t_op = np.asarray(t_op, dtype=complex)
    norm_t = matcalc.operator_norm(t_op)
    norm_p1 = matcalc.operator_norm(p1)
    if norm_t >= 1.0 / (2.0 * norm_p1):
        raise PerturbationTooLarge(
            f"||T|| = {norm_t:.3e} >= 1/(2||p1||) = {1/(2*norm_p1):.3e}"
        )
    n = p0.shape[0]
    eye = np.eye(n)
    try:
        u = np.linalg.solve(eye - t_op @ p1, eye)
    except np.linalg.LinAlgError as exc:
        raise PerturbationTooLarge("I - T p1 numerically singular") from exc
    p0_new = p0 @ u
    p1_new = (eye - t_op @ p1) @ p1 @ u
    return SplitPerturbation(
        p0_new,
        p1_new,
        matcalc.operator_norm(p0_new - p0),
        matcalc.operator_norm(p1_new - p1),
    )


@dataclasses.dataclass
class PerturbationReport:
    delta: float
    diff_p0: float
    diff_p_gamma: float
    diff_p_gamma_tilde: float
    diff_restricted_inverse: float
    ratios: dict | None

    def describe(self) -> str:
        if self.ratios is None:
            return "delta = 0; ratios undefined"
        parts = ", ".join(f"{k}={v:.3g}" for k, v in self.ratios.items())
        return f"delta = {self.delta:.4g}: {parts}"


def hodge_perturbation_report(
    opa: VariableOp, opb: VariableOp, *, power_iters: int = 100, seed: int = 0
) -> PerturbationReport:
    """Operator-norm distances between the Hodge projections of two
    operators sharing a symbol pair, normalized by the coefficient
    distance.  Dense path; intended for small grids."""
    if opa.grid != opb.grid or opa.pair != opb.pair:
        raise ValueError("operators must share grid and symbol pair")
    delta = opb.coeffs.distance(opa.coeffs)
    pa = dense_hodge_projections(opa)
    pb = dense_hodge_projections(opb)
    diffs = [
        krylov.operator_norm_power(b - a, iters=power_iters, seed=seed)
        for a, b in zip(pa, pb)
    ]
    # restricted inverse: basis of range(gamma_tilde) mapped through A1, B1
    gt = dense_operator(
        lambda u: torus.apply_multiplier(opa.gamma_tilde_op, u), opa.grid, opa.big_n
    )
    v = matcalc.range_basis(gt)
    wa = dense_matrix_field(opa.coeffs.b1) @ v
    wb = dense_matrix_field(opb.coeffs.b1) @ v
    inv_a = v @ np.linalg.lstsq(wa, pa[2], rcond=None)[0]
    inv_b = v @ np.linalg.lstsq(wb, pb[2], rcond=None)[0]
    diff_inv = krylov.operator_norm_power(inv_b - inv_a, iters=power_iters, seed=seed)
    ratios = None
    if delta > 0:
        ratios = {
            "p0": diffs[0] / delta,
            "p_gamma": diffs[1] / delta,
            "p_gamma_tilde": diffs[2] / delta,
            "restricted_inverse": diff_inv / delta,
        }
    return PerturbationReport(delta, diffs[0], diffs[1], diffs[2], diff_inv, ratios)


def underline_intertwining_residual(
    op: VariableOp, t: float, *, seed: int = 0, rtol: float = 1e-11
) -> float:
    """Residual of the companion-operator intertwining on range(gamma_tilde).

    Checks gamma B1 (I + (t Op_swap)^2)^{-1} v = gamma (I + (t Op)^2)^{-1} B1 v
    for v = gamma_tilde(w) with random w; exact in exact arithmetic when the
    twisted-nilpotence and coercivity conditions hold.
    """
    swapped = swap_operator(op)
    w = torus.random_band_limited(op.grid, op.big_n, seed=seed)
    v = torus.apply_multiplier(op.gamma_tilde_op, w)
    vn = torus.lp_norm(v, 2.0)
    if vn == 0:
        return 0.0
    lhs = torus.apply_multiplier(
        op.gamma_op, op.coeffs.b1.apply(smoothing_apply(swapped, t, v, rtol=rtol))
    )
    rhs = torus.apply_multiplier(
        op.gamma_op, smoothing_apply(op, t, op.coeffs.b1.apply(v), rtol=rtol)
    )
    return torus.lp_norm(lhs - rhs, 2.0) / vn
