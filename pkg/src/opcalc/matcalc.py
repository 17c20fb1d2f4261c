"""Finite-dimensional complex spectral core.

Eigenvalues, kernel/range splittings, resolvents, and contour-integral
matrix functions for operators whose nonzero spectrum lies in a bisector
around the real axis.  Everything here works on plain square complex
ndarrays; all routines are pure functions of their inputs.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Callable

import numpy as np

from .errors import (
    ContourTooClose,
    EigensolverError,
    NearSingular,
    NotBisectorial,
    SplitUndefined,
)

# Singular values below RANK_TOL * s_max count as zero in all rank decisions.
RANK_TOL = 1e-10
# Eigenvalues below ZERO_EIG_TOL * |T| are classified as the zero eigenvalue.
ZERO_EIG_TOL = 1e-10


def _as_matrix(t) -> np.ndarray:
    a = np.asarray(t, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def operator_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a), 2))


@dataclasses.dataclass(frozen=True)
class BisectorParams:
    """Measured bisector data: half-angle, coercivity floor, sup norm."""

    omega: float
    kappa: float
    big_m: float

    def __post_init__(self):
        if not (0.0 <= self.omega < math.pi / 2):
            raise ValueError(f"omega out of [0, pi/2): {self.omega}")
        if self.kappa < 0 or self.big_m < self.kappa - 1e-12:
            raise ValueError(f"need 0 <= kappa <= big_m, got {self.kappa}, {self.big_m}")


@dataclasses.dataclass(frozen=True)
class ContourSpec:
    """Truncated-bisector integration path.

    The path is the positively oriented boundary of
    ``{r_inner <= |z| <= r_outer}`` intersected with the bisector of
    half-angle ``theta_prime``; it has two annular-sector components.
    """

    theta_prime: float
    r_inner: float
    r_outer: float
    nodes_per_segment: int = 256

    def __post_init__(self):
        if not (0.0 < self.theta_prime < math.pi / 2):
            raise ValueError("theta_prime must lie in (0, pi/2)")
        if not (0.0 < self.r_inner < self.r_outer):
            raise ValueError("need 0 < r_inner < r_outer")
        if self.nodes_per_segment < 8:
            raise ValueError("nodes_per_segment must be >= 8")

    def pieces(self):
        """Arcs and segments, oriented anticlockwise around each component."""
        th, r0, r1 = self.theta_prime, self.r_inner, self.r_outer
        out = []
        for base in (0.0, math.pi):
            a0, a1 = base - th, base + th
            out.append(("arc", r1, a0, a1))
            out.append(("seg", r1 * np.exp(1j * a1), r0 * np.exp(1j * a1)))
            out.append(("arc", r0, a1, a0))
            out.append(("seg", r0 * np.exp(1j * a0), r1 * np.exp(1j * a0)))
        return out


def spectrum(t) -> np.ndarray:
    """Eigenvalues with multiplicity, ordered by (modulus, argument)."""
    a = _as_matrix(t)
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigensolver did not converge: {exc}") from exc
    order = np.lexsort((np.angle(lam), np.abs(lam)))
    return lam[order]


def numerical_rank(a, tol=RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(a, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def kernel_basis(a, tol=RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical kernel, as columns."""
    a = np.asarray(a, dtype=complex)
    _, s, vh = np.linalg.svd(a)
    cut = tol * s[0] if s.size and s[0] > 0 else np.inf
    rank = int(np.sum(s > cut))
    return vh[rank:].conj().T


def range_basis(a, tol=RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space, as columns."""
    a = np.asarray(a, dtype=complex)
    u, s, _ = np.linalg.svd(a)
    cut = tol * s[0] if s.size and s[0] > 0 else np.inf
    rank = int(np.sum(s > cut))
    return u[:, :rank]


def principal_angles(u, v) -> np.ndarray:
    """Principal angles between the column spans of two orthonormal bases.

    Sine-based formulation: the singular values of (I - u u^H) v are the
    sines of the angles, which stays accurate for angles near zero where
    the cosine route loses half the digits.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[1] == 0 and v.shape[1] == 0:
        return np.zeros(0)
    if u.shape[1] != v.shape[1]:
        return np.array([math.pi / 2])
    resid = v - u @ (u.conj().T @ v)
    s = np.linalg.svd(resid, compute_uv=False)
    return np.sort(np.arcsin(np.clip(s, 0.0, 1.0)))[::-1]


def _classify(lam: np.ndarray, scale: float):
    """Split eigenvalues into the zero cluster and the rest."""
    zero_tol = ZERO_EIG_TOL * max(scale, 1e-300)
    mask = np.abs(lam) > zero_tol
    return lam[mask], zero_tol


def split_via_bases(t) -> tuple[np.ndarray, np.ndarray]:
    """Dense invariant-subspace route to the kernel/range splitting.

    Assembles orthonormal bases of ker(T) and of the column space and
    inverts the joint basis matrix.  Serves as the independent
    cross-check for the contour route in :func:`spectral_split`.
    """
    a = _as_matrix(t)
    n = a.shape[0]
    k = kernel_basis(a)
    r = range_basis(a)
    if k.shape[1] + r.shape[1] != n:
        raise SplitUndefined(
            f"dim ker + dim ran = {k.shape[1]} + {r.shape[1]} != {n}"
        )
    s = np.hstack([k, r])
    try:
        sinv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise SplitUndefined("kernel and range overlap numerically") from exc
    p_ker = s[:, : k.shape[1]] @ sinv[: k.shape[1], :]
    return p_ker, np.eye(n) - p_ker


def spectral_split(t, *, nodes=128, check=True, check_tol=1e-8):
    """Complementary projections (p_ker, p_ran) onto ker(T) and ran(T).

    p_ker is computed as the Riesz contour integral of the resolvent
    around the zero eigenvalue only; raises SplitUndefined when 0 is a
    defective eigenvalue (rank T^2 < rank T), in which case no such
    splitting exists.  With ``check=True`` the result is cross-checked
    against the dense invariant-subspace oracle.
    """
    a = _as_matrix(t)
    n = a.shape[0]
    big_m = operator_norm(a)
    if numerical_rank(a @ a) < numerical_rank(a):
        raise SplitUndefined("rank(T^2) < rank(T): zero eigenvalue is defective")
    if numerical_rank(a) == 0:
        return np.eye(n), np.zeros((n, n))
    lam = spectrum(a)
    nz, zero_tol = _classify(lam, big_m)
    if nz.size == n:
        # invertible: nothing to project out
        return np.zeros((n, n)), np.eye(n)
    min_nz = float(np.abs(nz).min())
    if min_nz < 10 * zero_tol:
        raise SplitUndefined(
            f"nonzero spectrum at {min_nz:.3e} cannot be separated from 0"
        )
    radius = 0.5 * min_nz
    # Trapezoid on a circle is spectrally accurate; dz = i*lambda dtheta.
    theta = 2 * math.pi * np.arange(nodes) / nodes
    zs = radius * np.exp(1j * theta)
    rhs = np.broadcast_to(np.eye(n), (nodes, n, n))
    res = np.linalg.solve(zs[:, None, None] * np.eye(n) - a, rhs)
    p_ker = np.einsum("k,kij->ij", zs, res) / nodes
    p_ran = np.eye(n) - p_ker
    if check:
        pk_oracle, _ = split_via_bases(a)
        if operator_norm(p_ker - pk_oracle) > check_tol * max(1.0, operator_norm(p_ker)):
            raise SplitUndefined("contour and subspace splittings disagree")
    return p_ker, p_ran


def bisector_params(t, *, angle_tol=1e-9) -> BisectorParams:
    """Measured (omega, kappa, big_m) of a matrix; see BisectorParams.

    omega is the smallest bisector half-angle containing the nonzero
    spectrum, kappa the smallest nonzero eigenvalue modulus, big_m the
    operator norm.  Raises NotBisectorial when omega reaches pi/2.
    """
    a = _as_matrix(t)
    big_m = operator_norm(a)
    lam = spectrum(a)
    nz, _ = _classify(lam, big_m)
    if nz.size == 0:
        return BisectorParams(0.0, big_m, big_m)
    angles = np.minimum(np.abs(np.angle(nz)), np.abs(np.angle(-nz)))
    omega = float(angles.max())
    if omega >= math.pi / 2 - angle_tol:
        raise NotBisectorial(f"spectral angle {omega:.6f} reaches pi/2")
    kappa = float(np.abs(nz).min())
    return BisectorParams(omega, kappa, big_m)


def default_contour(params: BisectorParams, nodes=256) -> ContourSpec:
    """Contour enclosing the annulus A(kappa, big_m) inside the bisector.

    theta' is the midpoint of (omega, pi/2); radii kappa/2 and 2*big_m.
    """
    theta = 0.5 * (params.omega + math.pi / 2)
    return ContourSpec(theta, 0.5 * params.kappa, 2.0 * params.big_m, nodes)


@functools.lru_cache(maxsize=32)
def _leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _gauss_nodes(piece, m):
    """Quadrature nodes z and weights w*dz for one contour piece.

    Gauss-Legendre per piece: the plain trapezoid rule loses too much
    accuracy at the contour corners to certify 1e-8 agreement.
    """
    x, w = _leggauss(m)
    tt = 0.5 * (x + 1.0)
    wt = 0.5 * w
    if piece[0] == "arc":
        _, r, a0, a1 = piece
        ang = a0 + (a1 - a0) * tt
        z = r * np.exp(1j * ang)
        dz = 1j * r * np.exp(1j * ang) * (a1 - a0)
    else:
        _, z0, z1 = piece
        z = z0 + (z1 - z0) * tt
        dz = np.full(m, z1 - z0)
    return z, wt * dz


def _feval(f: Callable, z: np.ndarray) -> np.ndarray:
    """Evaluate a scalar function on an array, vectorized when possible."""
    try:
        out = np.asarray(f(z), dtype=complex)
        if out.shape == z.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.asarray([complex(f(zz)) for zz in z])


def _check_enclosed(nz: np.ndarray, spec: ContourSpec, margin: float):
    mods = np.abs(nz)
    angs = np.minimum(np.abs(np.angle(nz)), np.abs(np.angle(-nz)))
    ok_r = (mods >= spec.r_inner * (1 + margin)) & (mods <= spec.r_outer * (1 - margin))
    ok_a = angs <= spec.theta_prime - margin
    bad = ~(ok_r & ok_a)
    if np.any(bad):
        raise ContourTooClose(
            f"eigenvalue {nz[bad][0]:.6g} within margin of the contour"
        )


def contour_fc(t, f: Callable, spec: ContourSpec | None = None, *, margin=1e-6):
    """Matrix function f(T) via the truncated-bisector Dunford integral.

    Returns ``f(0) * p_ker + (2 pi i)^{-1} * integral of f(z)(z-T)^{-1} dz``
    over the positively oriented boundary of the truncated bisector.  The
    nonzero spectrum must lie strictly inside the contour; f must be
    holomorphic on a neighbourhood of the enclosed region and defined at 0.
    """
    a = _as_matrix(t)
    n = a.shape[0]
    p_ker, _ = spectral_split(a)
    lam = spectrum(a)
    nz, _ = _classify(lam, operator_norm(a))
    f0 = complex(f(0.0))
    if nz.size == 0:
        return f0 * p_ker
    if spec is None:
        spec = default_contour(bisector_params(a))
    _check_enclosed(nz, spec, margin)
    acc = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for piece in spec.pieces():
        z, w = _gauss_nodes(piece, spec.nodes_per_segment)
        fz = _feval(f, z)
        rhs = np.broadcast_to(eye, (len(z), n, n))
        res = np.linalg.solve(z[:, None, None] * eye - a, rhs)
        acc += np.einsum("k,kij->ij", fz * w, res)
    return f0 * p_ker + acc / (2j * math.pi)


def matrix_function_eig(t, f: Callable) -> np.ndarray:
    """Eigendecomposition route f(T) = V f(L) V^{-1} (diagonalizable T).

    Independent of the contour machinery; used as its oracle.
    """
    a = _as_matrix(t)
    lam, v = np.linalg.eig(a)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > 1e8:
        raise EigensolverError(f"eigenvector matrix too ill-conditioned: {cond:.2e}")
    fl = np.asarray([complex(f(z)) for z in lam])
    return v @ (fl[:, None] * np.linalg.inv(v))


def resolvent(t, lam: complex, *, margin=1e-10, residual_tol=1e-10) -> np.ndarray:
    """(lam*I - T)^{-1} by dense solve, with a residual guarantee."""
    a = _as_matrix(t)
    n = a.shape[0]
    spec = spectrum(a)
    scale = max(abs(lam), operator_norm(a), 1.0)
    if np.min(np.abs(spec - lam)) < margin * scale:
        raise NearSingular(f"lambda={lam} within margin of the spectrum")
    x = np.linalg.solve(lam * np.eye(n) - a, np.eye(n))
    res = operator_norm((lam * np.eye(n) - a) @ x - np.eye(n))
    if res > residual_tol:
        raise NearSingular(f"resolvent residual {res:.3e} exceeds {residual_tol}")
    return x
