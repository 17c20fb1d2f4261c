"""Correspondence between composed first-order operators and their block form.

A first-order coercive operator composed with a bounded multiplication,
``u -> D(A u)``, embeds into a two-component twisted operator whose
functional calculus can be transported back and forth.  This module
builds that block operator, checks the transport identities, and probes
holomorphic and Lipschitz dependence on the coefficient.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np

from . import hodge, krylov, matcalc, symbols, torus
from .errors import CoercivityError, ProbeAborted


@dataclasses.dataclass(frozen=True)
class FirstOrderD:
    """First-order symbol verified coercive-on-range with bisectorial spectrum."""

    symbol: symbols.HomogeneousSymbol
    params: matcalc.BisectorParams

    def __post_init__(self):
        if self.symbol.k != 1:
            raise ValueError("first-order operator requires k = 1")

    @classmethod
    def verified(
        cls, symbol: symbols.HomogeneousSymbol, sample: symbols.SphereSample | None = None
    ) -> "FirstOrderD":
        report = symbols.verify_symbol_conditions(symbol, sample)
        if not report.passed:
            raise CoercivityError(
                "first-order symbol conditions fail: " + ", ".join(report.failures)
            )
        return cls(symbol, report.params)


@dataclasses.dataclass(frozen=True)
class CompositionOp:
    """The operator u -> D(A u): multiplier after pointwise multiplication."""

    d_op: torus.MultiplierOp
    a: hodge.MatrixField

    @property
    def grid(self):
        return self.d_op.grid

    @property
    def big_n(self):
        return self.d_op.big_n

    @property
    def dim(self):
        return self.grid.size * self.big_n

    def apply(self, u: torus.GridField) -> torus.GridField:
        return torus.apply_multiplier(self.d_op, self.a.apply(u))


def composition(d: FirstOrderD, a: hodge.MatrixField, grid: torus.TorusGrid) -> CompositionOp:
    return CompositionOp(torus.symbol_multiplier(d.symbol, grid), a)


def _embed_block(mat: np.ndarray, row: int, col: int, size: int) -> np.ndarray:
    out = np.zeros((2 * size, 2 * size), dtype=complex)
    out[row * size : (row + 1) * size, col * size : (col + 1) * size] = mat
    return out


def block_pair(d: FirstOrderD) -> symbols.HodgeDiracSymbolPair:
    """Two-component pair with the first-order coefficients in off-diagonal
    blocks: the plain part lowers, the twisted part raises."""
    n, size = d.symbol.n, d.symbol.big_n
    g_coeffs = {}
    gt_coeffs = {}
    for theta, mat in d.symbol.coeffs.items():
        g_coeffs[theta] = _embed_block(mat, 1, 0, size)
        gt_coeffs[theta] = _embed_block(mat, 0, 1, size)
    return symbols.HodgeDiracSymbolPair(
        symbols.HomogeneousSymbol(n, 2 * size, 1, g_coeffs),
        symbols.HomogeneousSymbol(n, 2 * size, 1, gt_coeffs),
    )


def block_coefficients(a: hodge.MatrixField) -> hodge.CoefficientPair:
    """B1 = diag(A, 0), B2 = diag(0, A) on the doubled component space."""
    grid, size = a.grid, a.big_n
    zeros = np.zeros(grid.shape + (2 * size, 2 * size), dtype=complex)
    b1 = zeros.copy()
    b1[..., :size, :size] = a.values
    b2 = zeros.copy()
    b2[..., size:, size:] = a.values
    return hodge.CoefficientPair(
        hodge.MatrixField(grid, b1), hodge.MatrixField(grid, b2)
    )


def build_block(
    d: FirstOrderD,
    a: hodge.MatrixField,
    *,
    check: bool = True,
    floor: float = 1e-6,
    seed: int = 0,
) -> hodge.VariableOp:
    """Assemble the doubled-space twisted operator for u -> D(A u).

    The result acts as [[0, A D A], [D, 0]] on component pairs.  With
    ``check=True`` the coercivity of A on range(D) and of A* on the
    adjoint range is verified and CoercivityError raised on failure.
    """
    op = hodge.VariableOp(block_pair(d), block_coefficients(a), a.grid)
    if check:
        report = hodge.check_coefficient_conditions(op, seed=seed, floor=floor)
        if not report.passed:
            raise CoercivityError(
                "block coefficients fail: " + report.describe()
            )
    return op


def split_components(v: torus.GridField, size: int) -> tuple[torus.GridField, torus.GridField]:
    return (
        torus.GridField(v.grid, v.values[..., :size]),
        torus.GridField(v.grid, v.values[..., size:]),
    )


def stack_components(u1: torus.GridField, u2: torus.GridField) -> torus.GridField:
    return torus.GridField(
        u1.grid, np.concatenate([u1.values, u2.values], axis=-1)
    )


# ---------------------------------------------------------------------------
# Matrix-free contour calculus.
# ---------------------------------------------------------------------------


def discrete_contour(
    params: matcalc.BisectorParams,
    grid: torus.TorusGrid,
    *,
    coeff_distance: float = 0.0,
    coeff_sup: float = 1.0,
    nodes: int = 128,
) -> matcalc.ContourSpec:
    """Contour enclosing the discrete nonzero spectrum with coefficient slack.

    Radii follow the measured sphere constants scaled to the frequency
    lattice: inner radius a quarter of the deflated coercivity scale,
    outer radius four times the inflated sup.
    """
    scale = 2 * math.pi / grid.length
    xi_min = scale
    xi_max = scale * (grid.g / 2) * math.sqrt(grid.n)
    kappa_est = params.kappa * xi_min * max(0.05, 1.0 - coeff_distance)
    m_est = params.big_m * xi_max * max(1.0, coeff_sup)
    omega_est = min(params.omega + min(0.4, 2.0 * coeff_distance), math.pi / 2 - 0.05)
    theta = 0.5 * (omega_est + math.pi / 2)
    return matcalc.ContourSpec(theta, kappa_est / 4.0, 4.0 * m_est * (1.0 + coeff_sup**2), nodes)


DENSE_CALCULUS_LIMIT = 1024


def contour_calculus(
    apply_fn: Callable[[torus.GridField], torus.GridField],
    u: torus.GridField,
    f: Callable,
    contour: matcalc.ContourSpec,
    *,
    precond_for: Callable[[complex], torus.MultiplierOp] | None = None,
    solver: str = "auto",
    dense_mat: np.ndarray | None = None,
    rtol: float = 1e-12,
    restart: int = 50,
    maxiter: int = 5000,
) -> torus.GridField:
    """f of a matrix-free operator applied to a field, via the contour.

    Requires f(0) = 0 (all members of the bundled test family vanish at
    the origin, so no kernel-projection term is needed).  Each contour
    node costs one shifted solve.  'dense' assembles the operator once
    and batch-factorizes the shifted systems, which is far cheaper at
    desk scale; 'gmres' runs preconditioned Krylov solves and is the
    path for dimensions past DENSE_CALCULUS_LIMIT.  'auto' picks by size.
    """
    if abs(complex(f(0.0))) > 1e-13:
        raise ValueError("contour calculus requires f(0) = 0")
    grid, big_n = u.grid, u.big_n
    dim = grid.size * big_n
    if solver == "auto":
        solver = "dense" if dim <= DENSE_CALCULUS_LIMIT else "gmres"
    acc = np.zeros(dim, dtype=complex)
    b = u.flat()
    if solver == "dense":
        if dense_mat is None:
            dense_mat = hodge.dense_operator(apply_fn, grid, big_n)
        eye = np.eye(dim)
        chunk = max(1, 5_000_000 // (dim * dim))
        for piece in contour.pieces():
            z, w = matcalc._gauss_nodes(piece, contour.nodes_per_segment)
            fz = matcalc._feval(f, z)
            for lo in range(0, len(z), chunk):
                zs = z[lo : lo + chunk]
                mats = zs[:, None, None] * eye - dense_mat
                rhs = np.broadcast_to(b[:, None], (len(zs), dim, 1))
                sols = np.linalg.solve(mats, rhs)[..., 0]
                acc += (fz[lo : lo + chunk] * w[lo : lo + chunk]) @ sols
    elif solver == "gmres":
        for piece in contour.pieces():
            z, w = matcalc._gauss_nodes(piece, contour.nodes_per_segment)
            for zz, ww in zip(z, w):
                pre = None
                if precond_for is not None:
                    pre_op = precond_for(zz)
                    pre = lambda vec, _op=pre_op: torus.apply_multiplier(
                        _op, torus.GridField.from_flat(grid, big_n, vec)
                    ).flat()
                x = krylov.solve_or_raise(
                    lambda vec: zz * vec
                    - apply_fn(torus.GridField.from_flat(grid, big_n, vec)).flat(),
                    b,
                    what=f"shifted solve at z={zz:.4g}",
                    rtol=rtol,
                    restart=restart,
                    maxiter=maxiter,
                    precond=pre,
                )
                acc += complex(f(zz)) * ww * x
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return torus.GridField.from_flat(grid, big_n, acc / (2j * math.pi))


def shifted_symbol_precond(s: symbols.HomogeneousSymbol, grid: torus.TorusGrid):
    """Factory z -> multiplier (z - S(xi))^{-1}, the exact constant-
    coefficient inverse used to precondition shifted solves."""
    mats = s(grid.lattice)
    eye = np.eye(s.big_n, dtype=complex)

    def factory(z: complex) -> torus.MultiplierOp:
        return torus.MultiplierOp(grid, np.linalg.inv(z * eye - mats))

    return factory


def composition_calculus(
    op: CompositionOp,
    f: Callable,
    u: torus.GridField,
    d: FirstOrderD,
    *,
    nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
    dense_mat: np.ndarray | None = None,
    contour: matcalc.ContourSpec | None = None,
) -> torus.GridField:
    """f(D A) u through the contour calculus on the undoubled space.

    Pass an explicit contour when comparing values across a coefficient
    family: a shared contour makes the quadrature error vary analytically
    with the coefficient, so it cancels in differences and Cauchy means.
    """
    if contour is None:
        dist = (op.a - hodge.MatrixField.identity(op.grid, op.big_n)).inf_norm
        contour = discrete_contour(
            d.params, op.grid, coeff_distance=dist, coeff_sup=op.a.inf_norm, nodes=nodes
        )
    return contour_calculus(
        op.apply,
        u,
        f,
        contour,
        precond_for=shifted_symbol_precond(d.symbol, op.grid),
        solver=solver,
        rtol=rtol,
        dense_mat=dense_mat,
    )


def block_calculus(
    block_op: hodge.VariableOp,
    f: Callable,
    v: torus.GridField,
    d: FirstOrderD,
    *,
    nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
    dense_mat: np.ndarray | None = None,
) -> torus.GridField:
    """f of the doubled-space operator applied to a stacked field."""
    eye = hodge.MatrixField.identity(block_op.grid, block_op.big_n)
    b1 = block_op.coeffs.b1
    dist = min((b1 + block_op.coeffs.b2 - eye).inf_norm, 2.0)
    sup = max(b1.inf_norm, block_op.coeffs.b2.inf_norm, 1.0)
    contour = discrete_contour(
        d.params, block_op.grid, coeff_distance=dist, coeff_sup=sup, nodes=nodes
    )
    return contour_calculus(
        block_op.apply,
        v,
        f,
        contour,
        precond_for=shifted_symbol_precond(block_op.pair.total(), block_op.grid),
        solver=solver,
        rtol=rtol,
        dense_mat=dense_mat,
    )


def intertwine_check(
    d: FirstOrderD,
    a: hodge.MatrixField,
    f: Callable,
    *,
    trials: int = 3,
    nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
    seed: int = 0,
) -> float:
    """Max relative residual of f(block)(Au, u) = (A f(DA) u, f(DA) u)."""
    grid = a.grid
    block_op = build_block(d, a, seed=seed)
    comp = composition(d, a, grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    dense_block = dense_half = None
    if solver == "dense":
        dense_block = hodge.assemble_dense(block_op)
        dense_half = hodge.dense_operator(comp.apply, grid, comp.big_n)
    for _ in range(trials):
        u = torus.random_band_limited(grid, comp.big_n, seed=int(rng.integers(2**31)))
        v = stack_components(a.apply(u), u)
        lhs = block_calculus(
            block_op, f, v, d, nodes=nodes, solver=solver, rtol=rtol, dense_mat=dense_block
        )
        x = composition_calculus(
            comp, f, u, d, nodes=nodes, solver=solver, rtol=rtol, dense_mat=dense_half
        )
        rhs = stack_components(a.apply(x), x)
        denom = torus.lp_norm(v, 2.0)
        if denom == 0:
            continue
        worst = max(worst, torus.lp_norm(lhs - rhs, 2.0) / denom)
    return worst


def block_resolvent_product(
    d: FirstOrderD,
    a: hodge.MatrixField,
    t: float,
    v: torus.GridField,
    *,
    rtol: float = 1e-12,
) -> torus.GridField:
    """Resolvent of the block operator via the three-factor product formula.

    Applies, in order: a shear by the plain part, the central smoothing
    inverse (I + t^2 (DA)^2)^{-1}, and a shear by the twisted part.
    """
    grid = a.grid
    comp = composition(d, a, grid)
    size = comp.big_n
    u1, u2 = split_components(v, size)
    d_u1 = torus.apply_multiplier(comp.d_op, u1)
    rhs = u2 - 1j * t * d_u1
    mats = d.symbol(grid.lattice)
    eye = np.eye(size, dtype=complex)
    pre = torus.MultiplierOp(grid, np.linalg.inv(eye + (t * t) * (mats @ mats)))

    def matvec(vec):
        f = torus.GridField.from_flat(grid, size, vec)
        return (f + (t * t) * comp.apply(comp.apply(f))).flat()

    y = krylov.solve_or_raise(
        matvec,
        rhs.flat(),
        what="central block solve",
        rtol=rtol,
        precond=lambda vec: torus.apply_multiplier(
            pre, torus.GridField.from_flat(grid, size, vec)
        ).flat(),
    )
    y2 = torus.GridField.from_flat(grid, size, y)
    ada_y2 = a.apply(torus.apply_multiplier(comp.d_op, a.apply(y2)))
    return stack_components(u1 - 1j * t * ada_y2, y2)


# ---------------------------------------------------------------------------
# Triple-space similarity transport.
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class SimilarityMaps:
    """split : u -> (kernel part, untwisted twisted-range part, plain-range
    part) on the tripled space; assemble is its left inverse."""

    split: Callable[[torus.GridField], torus.GridField]
    assemble: Callable[[torus.GridField], torus.GridField]
    triple_apply: Callable[[torus.GridField], torus.GridField]
    triple_symbol: symbols.HomogeneousSymbol
    size: int


def build_similarity(
    pair: symbols.HodgeDiracSymbolPair,
    coeffs: hodge.CoefficientPair,
    grid: torus.TorusGrid,
) -> SimilarityMaps:
    """Maps transporting the twisted operator to a composed first-order one.

    Dense path: the Hodge projections and the restricted inverse of B1 on
    range(gamma_tilde) are assembled explicitly; intended for small grids.
    """
    op = hodge.VariableOp(pair, coeffs, grid)
    size = pair.big_n
    p0, pg, pgt = hodge.dense_hodge_projections(op)
    gt = hodge.dense_operator(
        lambda u: torus.apply_multiplier(op.gamma_tilde_op, u), grid, size
    )
    v_basis = matcalc.range_basis(gt)
    w = hodge.dense_matrix_field(coeffs.b1) @ v_basis
    b1_restricted_inv = v_basis @ np.linalg.pinv(w, rcond=1e-12)

    def split(u: torus.GridField) -> torus.GridField:
        x = u.flat()
        parts = [p0 @ x, b1_restricted_inv @ (pgt @ x), pg @ x]
        vals = np.concatenate(
            [pp.reshape(grid.shape + (size,)) for pp in parts], axis=-1
        )
        return torus.GridField(grid, vals)

    b1_dense = hodge.dense_matrix_field(coeffs.b1)

    def assemble(v3: torus.GridField) -> torus.GridField:
        vals = v3.values
        x0 = vals[..., :size].reshape(-1)
        x1 = vals[..., size : 2 * size].reshape(-1)
        x2 = vals[..., 2 * size :].reshape(-1)
        out = p0 @ x0 + pg @ x2 + pgt @ (b1_dense @ x1)
        return torus.GridField.from_flat(grid, size, out)

    def triple_apply(v3: torus.GridField) -> torus.GridField:
        vals = v3.values
        u1 = torus.GridField(grid, vals[..., size : 2 * size])
        u2 = torus.GridField(grid, vals[..., 2 * size :])
        mid = torus.apply_multiplier(op.gamma_tilde_op, coeffs.b2.apply(u2))
        last = torus.apply_multiplier(op.gamma_op, coeffs.b1.apply(u1))
        zeros = np.zeros_like(vals[..., :size])
        return torus.GridField(
            grid, np.concatenate([zeros, mid.values, last.values], axis=-1)
        )

    # constant-coefficient symbol of the tripled operator, for preconditioning
    tri_coeffs = {}
    for theta in set(pair.gamma.coeffs) | set(pair.gamma_tilde.coeffs):
        g = pair.gamma.coeffs.get(theta, np.zeros((size, size)))
        gtm = pair.gamma_tilde.coeffs.get(theta, np.zeros((size, size)))
        block = np.zeros((3 * size, 3 * size), dtype=complex)
        block[size : 2 * size, 2 * size :] = gtm
        block[2 * size :, size : 2 * size] = g
        tri_coeffs[theta] = block
    tri_symbol = symbols.HomogeneousSymbol(pair.n, 3 * size, 1, tri_coeffs)
    return SimilarityMaps(split, assemble, triple_apply, tri_symbol, size)


def similarity_calculus(
    maps: SimilarityMaps,
    f: Callable,
    u: torus.GridField,
    params: matcalc.BisectorParams,
    *,
    coeff_distance: float = 0.0,
    coeff_sup: float = 1.0,
    nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
) -> torus.GridField:
    """f of the twisted operator via transport through the tripled space."""
    grid = u.grid
    contour = discrete_contour(
        params, grid, coeff_distance=coeff_distance, coeff_sup=coeff_sup, nodes=nodes
    )
    fd = contour_calculus(
        maps.triple_apply,
        maps.split(u),
        f,
        contour,
        precond_for=shifted_symbol_precond(maps.triple_symbol, grid),
        solver=solver,
        rtol=rtol,
    )
    return maps.assemble(fd)


# ---------------------------------------------------------------------------
# Holomorphy and Lipschitz probes.
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class CoefficientPath:
    """Affine coefficient path z -> base + z * direction.

    The direction is normalized to sup norm one; the degenerate zero
    direction (a constant path) is also accepted.
    """

    base: hodge.MatrixField
    direction: hodge.MatrixField

    def __post_init__(self):
        nrm = self.direction.inf_norm
        if nrm != 0.0 and abs(nrm - 1.0) > 1e-8:
            raise ValueError("direction must have sup norm 1 (or be zero)")

    def at(self, z: complex) -> hodge.MatrixField:
        return hodge.MatrixField(
            self.base.grid, self.base.values + z * self.direction.values
        )


def coercivity_margins(
    d: FirstOrderD, a: hodge.MatrixField, *, trials: int = 4, seed: int = 0
) -> tuple[float, float]:
    """Observed lower bounds of A on range(D) and A* on the adjoint range."""
    grid = a.grid
    d_op = torus.symbol_multiplier(d.symbol, grid)
    d_adj = d_op.adjoint()
    rng = np.random.default_rng(seed)
    c = cd = np.inf
    for _ in range(trials):
        v = torus.random_band_limited(grid, a.big_n, seed=int(rng.integers(2**31)))
        w = torus.apply_multiplier(d_op, v)
        wn = torus.lp_norm(w, 2.0)
        if wn > 1e-13:
            c = min(c, torus.lp_norm(a.apply(w), 2.0) / wn)
        wd = torus.apply_multiplier(d_adj, v)
        wdn = torus.lp_norm(wd, 2.0)
        if wdn > 1e-13:
            cd = min(cd, torus.lp_norm(a.adjoint().apply(wd), 2.0) / wdn)
    return float(c), float(cd)


@dataclasses.dataclass
class HolomorphyReport:
    residual: float
    nodes: int
    radius: float
    center_norm: float


def admissible_radius(
    path: CoefficientPath,
    d: FirstOrderD,
    *,
    floor: float = 1e-6,
    probe_nodes: int = 8,
    seed: int = 0,
) -> float:
    """Largest dyadic-halving radius whose whole circle keeps the
    coercivity margins above the floor."""
    for r in (1.0, 0.5, 0.25, 0.125, 0.0625):
        ok = True
        for z in r * np.exp(2j * math.pi * np.arange(probe_nodes) / probe_nodes):
            c, cd = coercivity_margins(d, path.at(z), seed=seed)
            if min(c, cd) < floor:
                ok = False
                break
        if ok:
            return r
    return 0.03125


def holomorphy_probe(
    path: CoefficientPath,
    d: FirstOrderD,
    f: Callable,
    u: torus.GridField,
    *,
    radius: float | None = None,
    nodes: int = 16,
    floor: float = 1e-6,
    calculus_nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
    seed: int = 0,
) -> HolomorphyReport:
    """Mean-value test of analytic dependence on the coefficient.

    Compares f(D A_0) u with the average of f(D A_z) u over an equispaced
    circle |z| = radius (the trapezoid Cauchy integral of g(z)/z).  All
    circle nodes must keep the coercivity margins above the floor.  The
    default radius is half the largest scale whose circle still passes
    the margin check.
    """
    grid = u.grid
    if radius is None:
        radius = 0.5 * admissible_radius(path, d, floor=floor, seed=seed)
    zs = radius * np.exp(2j * math.pi * np.arange(nodes) / nodes)
    for z in zs:
        c, cd = coercivity_margins(d, path.at(z), seed=seed)
        if min(c, cd) < floor:
            raise ProbeAborted(
                f"coercivity margin {min(c, cd):.3e} below floor at node {z:.6g}",
                node=z,
            )
    # one contour for the whole disc: quadrature error then varies
    # analytically with z and cancels in the Cauchy mean
    base_dist = (path.base - hodge.MatrixField.identity(grid, u.big_n)).inf_norm
    contour = discrete_contour(
        d.params,
        grid,
        coeff_distance=base_dist + radius,
        coeff_sup=path.base.inf_norm + radius,
        nodes=calculus_nodes,
    )
    center = composition_calculus(
        composition(d, path.at(0.0), grid), f, u, d,
        solver=solver, rtol=rtol, contour=contour,
    )
    acc = np.zeros_like(center.values)
    for z in zs:
        val = composition_calculus(
            composition(d, path.at(z), grid), f, u, d,
            solver=solver, rtol=rtol, contour=contour,
        )
        acc += val.values
    mean = torus.GridField(grid, acc / nodes)
    cn = torus.lp_norm(center, 2.0)
    denom = cn if cn > 0 else torus.lp_norm(u, 2.0)
    residual = torus.lp_norm(mean - center, 2.0) / denom
    return HolomorphyReport(residual, nodes, radius, cn)


def sup_norm_on_bisector(f: Callable, theta: float, *, decades=(-6, 6), samples=4000) -> float:
    """Numerical sup of |f| over the boundary rays of the bisector."""
    rr = np.logspace(decades[0], decades[1], samples)
    worst = 0.0
    for ang in (theta, -theta, math.pi - theta, math.pi + theta):
        vals = np.abs([complex(f(r * np.exp(1j * ang))) for r in rr])
        worst = max(worst, float(vals.max()))
    return worst


@dataclasses.dataclass
class LipschitzReport:
    max_ratio: float
    distance: float
    f_sup: float


def lipschitz_probe(
    d: FirstOrderD,
    a: hodge.MatrixField,
    a_tilde: hodge.MatrixField,
    f: Callable,
    *,
    trials: int = 3,
    p: float = 2.0,
    calculus_nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
    seed: int = 0,
) -> LipschitzReport:
    """Observed ratio ||f(DA)u - f(DA~)u||_p / (||A - A~|| ||f||_sup ||u||_p)."""
    grid = a.grid
    dist = (a - a_tilde).inf_norm
    theta = 0.5 * (d.params.omega + math.pi / 2)
    f_sup = sup_norm_on_bisector(f, theta)
    if dist == 0:
        return LipschitzReport(0.0, 0.0, f_sup)
    comp_a = composition(d, a, grid)
    comp_b = composition(d, a_tilde, grid)
    eye = hodge.MatrixField.identity(grid, a.big_n)
    contour = discrete_contour(
        d.params,
        grid,
        coeff_distance=max((a - eye).inf_norm, (a_tilde - eye).inf_norm),
        coeff_sup=max(a.inf_norm, a_tilde.inf_norm),
        nodes=calculus_nodes,
    )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = torus.random_band_limited(grid, a.big_n, seed=int(rng.integers(2**31)))
        un = torus.lp_norm(u, p)
        if un == 0:
            continue
        fa = composition_calculus(comp_a, f, u, d, solver=solver, rtol=rtol,
                                  contour=contour)
        fb = composition_calculus(comp_b, f, u, d, solver=solver, rtol=rtol,
                                  contour=contour)
        worst = max(worst, torus.lp_norm(fa - fb, p) / (dist * f_sup * un))
    return LipschitzReport(worst, dist, f_sup)


def lipschitz_triple_decomposition(
    pair: symbols.HodgeDiracSymbolPair,
    coeffs_a: hodge.CoefficientPair,
    coeffs_b: hodge.CoefficientPair,
    f: Callable,
    u: torus.GridField,
    params: matcalc.BisectorParams,
    *,
    nodes: int = 128,
    solver: str = "auto",
    rtol: float = 1e-12,
) -> dict:
    """Direct difference of the transported calculi against its three-term
    split (map difference, calculus difference, split difference).

    The identity is algebraically exact; the residual reflects solver and
    quadrature tolerance only.
    """
    grid = u.grid
    maps_a = build_similarity(pair, coeffs_a, grid)
    maps_b = build_similarity(pair, coeffs_b, grid)
    dist = coeffs_a.distance(coeffs_b)
    sup = max(
        coeffs_a.b1.inf_norm, coeffs_a.b2.inf_norm,
        coeffs_b.b1.inf_norm, coeffs_b.b2.inf_norm, 1.0,
    )
    contour = discrete_contour(
        params, grid, coeff_distance=dist, coeff_sup=sup, nodes=nodes
    )

    def fd(maps: SimilarityMaps, v: torus.GridField) -> torus.GridField:
        return contour_calculus(
            maps.triple_apply, v, f, contour,
            precond_for=shifted_symbol_precond(maps.triple_symbol, grid),
            solver=solver, rtol=rtol,
        )

    sa_u = maps_a.split(u)
    sb_u = maps_b.split(u)
    fda_sa = fd(maps_a, sa_u)
    direct = maps_a.assemble(fda_sa) - maps_b.assemble(fd(maps_b, sb_u))
    term1 = maps_a.assemble(fda_sa) - maps_b.assemble(fda_sa)
    term2 = maps_b.assemble(fda_sa - fd(maps_b, sa_u))
    term3 = maps_b.assemble(fd(maps_b, sa_u - sb_u))
    recombined = term1 + term2 + term3
    un = torus.lp_norm(u, 2.0)
    return {
        "direct_norm": torus.lp_norm(direct, 2.0),
        "identity_residual": torus.lp_norm(direct - recombined, 2.0) / max(un, 1e-300),
        "distance": dist,
    }


# Bundled bounded-holomorphic test family; every member vanishes at 0 and
# is bounded on any bisector of half-angle < pi/4.
def f_rational_odd(z):
    return z / (1.0 + z * z)


def f_rational_even(z):
    z2 = z * z
    return z2 / (1.0 + z2) ** 2


def f_sign_approx(z, eps: float = 0.1):
    return z / np.sqrt(z * z + eps * eps)


TEST_FAMILY = {
    "rational_odd": f_rational_odd,
    "rational_even": f_rational_even,
    "sign_approx": f_sign_approx,
}
