"""Discrete periodic function spaces and the FFT multiplier engine.

Fields live on a uniform n-dimensional periodic grid with g points per
axis (g a power of two) and values in C^N.  All frequency-diagonal
operators are applied as forward FFT, per-frequency matrix multiply,
inverse FFT; this is exact on band-limited data, which is the modeling
decision that stands in for the continuum: continuum statements are
probed on band-limited periodic fields.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import matcalc, symbols
from .errors import NotInvertible

FIELD_MAGIC = b"TORUSFLD"
LAYOUT_VECTOR = 1  # row-major spatial axes, trailing component axis
LAYOUT_MATRIX = 2  # row-major spatial axes, trailing (N, N) matrix axes


def _is_pow2(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclasses.dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid: n axes, g points per axis, period length."""

    n: int
    g: int
    length: float = 2 * math.pi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.g < 4 or not _is_pow2(self.g):
            raise ValueError("g must be a power of two, >= 4")
        if not (self.length > 0):
            raise ValueError("length must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.g,) * self.n

    @property
    def size(self) -> int:
        return self.g**self.n

    @property
    def cell_width(self) -> float:
        return self.length / self.g

    @property
    def cell_volume(self) -> float:
        return self.cell_width**self.n

    @cached_property
    def axis_integers(self) -> np.ndarray:
        """Integer frequencies per axis, in FFT bin order, Nyquist = +g/2."""
        m = np.arange(self.g)
        m = np.where(m > self.g // 2, m - self.g, m)
        return m

    @cached_property
    def lattice(self) -> np.ndarray:
        """Physical frequencies, shape (g,)*n + (n,): 2*pi/length * integers."""
        scale = 2 * math.pi / self.length
        axes = np.meshgrid(*([self.axis_integers] * self.n), indexing="ij")
        return scale * np.stack(axes, axis=-1).astype(float)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Cell coordinates x_j = j * length / g, shape (g,)*n + (n,)."""
        x = np.arange(self.g) * self.cell_width
        axes = np.meshgrid(*([x] * self.n), indexing="ij")
        return np.stack(axes, axis=-1)


@dataclasses.dataclass(frozen=True)
class GridField:
    """Function on the grid with values in C^N."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape[:-1] != self.grid.shape or v.ndim != self.grid.n + 1:
            raise ValueError(f"values shape {v.shape} incompatible with grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def big_n(self) -> int:
        return self.values.shape[-1]

    def __add__(self, other):
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridField(self.grid, self.values * c)

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @staticmethod
    def from_flat(grid: TorusGrid, big_n: int, vec: np.ndarray) -> "GridField":
        return GridField(grid, np.asarray(vec, dtype=complex).reshape(grid.shape + (big_n,)))


def zero_field(grid: TorusGrid, big_n: int) -> GridField:
    return GridField(grid, np.zeros(grid.shape + (big_n,), dtype=complex))


def fft_field(u: GridField) -> np.ndarray:
    return np.fft.fftn(u.values, axes=tuple(range(u.grid.n)))


def ifft_field(grid: TorusGrid, hat: np.ndarray) -> GridField:
    return GridField(grid, np.fft.ifftn(hat, axes=tuple(range(grid.n))))


@dataclasses.dataclass(frozen=True)
class MultiplierOp:
    """Frequency-diagonal operator: one N x N matrix per lattice frequency."""

    grid: TorusGrid
    mats: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mats, dtype=complex)
        if m.shape[: self.grid.n] != self.grid.shape or m.ndim != self.grid.n + 2:
            raise ValueError(f"mats shape {m.shape} incompatible with grid")
        if m.shape[-1] != m.shape[-2]:
            raise ValueError("per-frequency entries must be square")
        if not np.all(np.isfinite(m)):
            raise ValueError("multiplier has non-finite entries")
        object.__setattr__(self, "mats", m)

    @property
    def big_n(self) -> int:
        return self.mats.shape[-1]

    @property
    def zero_mode(self) -> np.ndarray:
        return self.mats[(0,) * self.grid.n]

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable, zero_mode=None) -> "MultiplierOp":
        """Build from fn(lattice) -> stacked matrices; optional zero-mode override."""
        mats = np.asarray(fn(grid.lattice), dtype=complex)
        if zero_mode is not None:
            mats = mats.copy()
            mats[(0,) * grid.n] = np.asarray(zero_mode, dtype=complex)
        return cls(grid, mats)

    @classmethod
    def from_symbol(
        cls, grid: TorusGrid, s: symbols.HomogeneousSymbol, zero_mode=None
    ) -> "MultiplierOp":
        return cls.from_function(grid, s, zero_mode)

    @classmethod
    def identity(cls, grid: TorusGrid, big_n: int) -> "MultiplierOp":
        eye = np.broadcast_to(np.eye(big_n, dtype=complex), grid.shape + (big_n, big_n))
        return cls(grid, eye.copy())

    def __matmul__(self, other: "MultiplierOp") -> "MultiplierOp":
        return MultiplierOp(self.grid, self.mats @ other.mats)

    def __add__(self, other: "MultiplierOp") -> "MultiplierOp":
        return MultiplierOp(self.grid, self.mats + other.mats)

    def __sub__(self, other: "MultiplierOp") -> "MultiplierOp":
        return MultiplierOp(self.grid, self.mats - other.mats)

    def __mul__(self, c) -> "MultiplierOp":
        return MultiplierOp(self.grid, self.mats * c)

    __rmul__ = __mul__

    def adjoint(self) -> "MultiplierOp":
        return MultiplierOp(self.grid, np.conj(np.swapaxes(self.mats, -1, -2)))


def apply_multiplier(m: MultiplierOp, u: GridField) -> GridField:
    """FFT, per-frequency matrix multiply, inverse FFT."""
    if m.grid != u.grid or m.big_n != u.big_n:
        raise ValueError("grid or component mismatch between operator and field")
    hat = fft_field(u)
    out = np.einsum("...ij,...j->...i", m.mats, hat)
    return ifft_field(u.grid, out)


def symbol_multiplier(s: symbols.HomogeneousSymbol, grid: TorusGrid) -> MultiplierOp:
    """Multiplier of a homogeneous symbol; zero frequency maps to 0 (k >= 1)."""
    return MultiplierOp.from_symbol(grid, s)


def gradient_multiplier(grid: TorusGrid, big_n: int) -> list[MultiplierOp]:
    """Partial-derivative multipliers i*xi_j * I, one per axis."""
    out = []
    for j in range(grid.n):
        xi_j = grid.lattice[..., j]
        mats = 1j * xi_j[..., None, None] * np.eye(big_n)
        out.append(MultiplierOp(grid, mats))
    return out


def _batched_inv(mats: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.inv(mats)
    except np.linalg.LinAlgError as exc:
        raise NotInvertible(f"{what} is singular at some lattice frequency") from exc


def resolvent_multipliers(
    pair: symbols.HodgeDiracSymbolPair, grid: TorusGrid, t: complex
) -> tuple[MultiplierOp, MultiplierOp, MultiplierOp]:
    """(r, p, q) multipliers of the pair's total symbol S at scale t:

    r = (I + i t S)^{-1},  p = (I + t^2 S^2)^{-1},  q = t S p.

    The zero frequency carries S(0) = 0, so r and p act as the identity
    and q as zero there.
    """
    mats = pair.total()(grid.lattice)
    eye = np.eye(pair.big_n, dtype=complex)
    r = _batched_inv(eye + 1j * t * mats, "I + i t S")
    p = _batched_inv(eye + (t * t) * (mats @ mats), "I + t^2 S^2")
    q = t * mats @ p
    return (
        MultiplierOp(grid, r),
        MultiplierOp(grid, p),
        MultiplierOp(grid, q),
    )


def matrix_function_multiplier(
    s: symbols.HomogeneousSymbol,
    f: Callable,
    grid: TorusGrid,
    *,
    cond_limit=1e8,
) -> MultiplierOp:
    """Multiplier with per-frequency matrices f(S(xi)).

    Uses the batched eigendecomposition where well-conditioned and falls
    back to the contour calculus pointwise otherwise.
    """
    mats = s(grid.lattice)
    flat = mats.reshape(-1, s.big_n, s.big_n)
    lam, v = np.linalg.eig(flat)
    fl = np.vectorize(lambda z: complex(f(z)))(lam)
    out = np.empty_like(flat)
    conds = np.linalg.cond(v)
    good = conds < cond_limit
    if np.any(good):
        vg = v[good]
        out[good] = vg @ (fl[good][:, :, None] * np.linalg.inv(vg))
    for idx in np.nonzero(~good)[0]:
        out[idx] = matcalc.contour_fc(flat[idx], f)
    return MultiplierOp(grid, out.reshape(mats.shape))


def kernel_range_multipliers(
    s: symbols.HomogeneousSymbol, grid: TorusGrid
) -> tuple[MultiplierOp, MultiplierOp]:
    """Pointwise spectral projections onto ker and ran of the symbol.

    At the zero frequency the symbol vanishes, so the kernel projection
    is the identity there.
    """
    mats = s(grid.lattice).reshape(-1, s.big_n, s.big_n)
    p_ker = np.empty_like(mats)
    for i, m in enumerate(mats):
        p_ker[i], _ = matcalc.spectral_split(m)
    p_ker = p_ker.reshape(grid.shape + (s.big_n, s.big_n))
    eye = np.eye(s.big_n, dtype=complex)
    return MultiplierOp(grid, p_ker), MultiplierOp(grid, eye - p_ker)


def translate(u: GridField, z) -> GridField:
    """Translation u(. - z), as modulation by exp(-i xi . z) in frequency."""
    z = np.asarray(z, dtype=float).reshape(u.grid.n)
    phase = np.exp(-1j * np.tensordot(u.grid.lattice, z, axes=([-1], [0])))
    hat = fft_field(u) * phase[..., None]
    return ifft_field(u.grid, hat)


def lp_norm(u: GridField, p: float) -> float:
    """Midpoint-rule L^p norm with the Euclidean norm on components."""
    if not (1.0 < p < math.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    mags = np.linalg.norm(u.values, axis=-1)
    return float((np.sum(mags**p) * u.grid.cell_volume) ** (1.0 / p))


def dyadic_average(u: GridField, cells: int) -> GridField:
    """Mean over dyadic blocks of side `cells` grid cells; idempotent."""
    g, n = u.grid.g, u.grid.n
    if cells < 1 or not _is_pow2(cells) or g % cells != 0:
        raise ValueError(f"block side {cells} must be a power of two dividing {g}")
    if cells == 1:
        return u
    shape = ()
    for _ in range(n):
        shape += (g // cells, cells)
    v = u.values.reshape(shape + (u.big_n,))
    mean_axes = tuple(2 * i + 1 for i in range(n))
    m = v.mean(axis=mean_axes, keepdims=True)
    return GridField(u.grid, np.broadcast_to(m, v.shape).reshape(u.values.shape))


# ---------------------------------------------------------------------------
# Random and structured test fields.
# ---------------------------------------------------------------------------


def plane_wave(grid: TorusGrid, freq: Sequence[int], vector) -> GridField:
    """Single-frequency field exp(i x . xi) * vector."""
    vec = np.asarray(vector, dtype=complex)
    x = grid.coordinates
    xi = 2 * math.pi / grid.length * np.asarray(freq, dtype=float)
    phase = np.exp(1j * np.tensordot(x, xi, axes=([-1], [0])))
    return GridField(grid, phase[..., None] * vec)


def random_band_limited(
    grid: TorusGrid,
    big_n: int,
    *,
    band: int | None = None,
    seed: int = 0,
    kill_zero_mode: bool = False,
) -> GridField:
    """Random complex field supported on |integer frequency| <= band per axis."""
    rng = np.random.default_rng(seed)
    if band is None:
        band = grid.g // 4
    hat = np.zeros(grid.shape + (big_n,), dtype=complex)
    mask = np.abs(grid.axis_integers) <= band
    sel = np.ix_(*([np.nonzero(mask)[0]] * grid.n))
    shape = tuple(int(mask.sum()) for _ in range(grid.n)) + (big_n,)
    hat[sel] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if kill_zero_mode:
        hat[(0,) * grid.n] = 0.0
    return ifft_field(grid, hat)


def random_kernel_field(
    pair: symbols.HodgeDiracSymbolPair, grid: TorusGrid, *, seed: int = 0, band=None
) -> GridField:
    """Random field built from per-frequency kernels of the total symbol."""
    rng = np.random.default_rng(seed)
    if band is None:
        band = grid.g // 4
    total = pair.total()
    hat = np.zeros(grid.shape + (pair.big_n,), dtype=complex)
    lattice = grid.lattice.reshape(-1, grid.n)
    ints = np.stack(
        np.meshgrid(*([grid.axis_integers] * grid.n), indexing="ij"), axis=-1
    ).reshape(-1, grid.n)
    flat = hat.reshape(-1, pair.big_n)
    for i, (xi, mi) in enumerate(zip(lattice, ints)):
        if np.any(np.abs(mi) > band):
            continue
        if np.all(mi == 0):
            flat[i] = rng.standard_normal(pair.big_n) + 1j * rng.standard_normal(
                pair.big_n
            )
            continue
        kb = matcalc.kernel_basis(total(xi))
        if kb.shape[1] == 0:
            continue
        c = rng.standard_normal(kb.shape[1]) + 1j * rng.standard_normal(kb.shape[1])
        flat[i] = kb @ c
    return ifft_field(grid, flat.reshape(hat.shape))


# ---------------------------------------------------------------------------
# Probes for the constant-coefficient theory.
# ---------------------------------------------------------------------------


def resolvent_bound_probe(
    pair: symbols.HodgeDiracSymbolPair,
    grid: TorusGrid,
    *,
    theta_prime: float,
    n_lambda: int = 50,
    n_fields: int = 200,
    p: float = 2.0,
    seed: int = 0,
) -> float:
    """Estimated sup over sampled lambda outside the bisector of the norm
    of lambda*(lambda - S)^{-1} acting on random fields."""
    rng = np.random.default_rng(seed)
    mats = pair.total()(grid.lattice)
    eye = np.eye(pair.big_n, dtype=complex)
    worst = 0.0
    fields = [
        random_band_limited(grid, pair.big_n, seed=int(rng.integers(2**31)))
        for _ in range(n_fields)
    ]
    for _ in range(n_lambda):
        ang = rng.uniform(theta_prime, math.pi - theta_prime)
        if rng.uniform() < 0.5:
            ang = -ang
        radius = 10.0 ** rng.uniform(-2, 2)
        lam = radius * np.exp(1j * ang)
        op = MultiplierOp(grid, lam * _batched_inv(lam * eye - mats, "lambda - S"))
        for u in fields:
            denom = lp_norm(u, p)
            if denom == 0:
                continue
            worst = max(worst, lp_norm(apply_multiplier(op, u), p) / denom)
    return worst


def coercivity_probe(
    pair: symbols.HodgeDiracSymbolPair,
    grid: TorusGrid,
    *,
    p: float = 2.0,
    trials: int = 10,
    seed: int = 0,
) -> float:
    """Largest observed ratio of gradient norm to operator norm on the range."""
    total = pair.total()
    pi_op = symbol_multiplier(total, grid)
    _, p_ran = kernel_range_multipliers(total, grid)
    grads = gradient_multiplier(grid, pair.big_n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = random_band_limited(grid, pair.big_n, seed=int(rng.integers(2**31)))
        u = apply_multiplier(p_ran, v)
        denom = lp_norm(apply_multiplier(pi_op, u), p)
        if denom < 1e-12:
            continue
        grad_vals = np.concatenate(
            [apply_multiplier(gop, u).values for gop in grads], axis=-1
        )
        worst = max(worst, lp_norm(GridField(grid, grad_vals), p) / denom)
    return worst


# ---------------------------------------------------------------------------
# Binary field files.  Layout (little endian):
#   bytes  0-7   magic "TORUSFLD"
#   bytes  8-11  uint32 layout tag (1 = vector field, 2 = matrix field)
#   bytes 12-15  uint32 n
#   bytes 16-19  uint32 g
#   bytes 20-23  uint32 N
#   bytes 24-31  float64 period length
# followed by the values as complex64, C order, shape (g,)*n + (N,) for
# tag 1 and (g,)*n + (N, N) for tag 2.
# ---------------------------------------------------------------------------


def save_field(path, u) -> None:
    values = u.values
    tag = LAYOUT_VECTOR if values.ndim == u.grid.n + 1 else LAYOUT_MATRIX
    header = FIELD_MAGIC + struct.pack(
        "<IIIId", tag, u.grid.n, u.grid.g, values.shape[-1], u.grid.length
    )
    assert len(header) == 32
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values.astype(np.complex64)).tobytes())


def load_field(path):
    """Load a vector field (GridField) or matrix field values from disk."""
    with open(path, "rb") as fh:
        header = fh.read(32)
        if len(header) != 32 or header[:8] != FIELD_MAGIC:
            raise ValueError(f"{path}: not a torus field file")
        tag, n, g, big_n, length = struct.unpack("<IIIId", header[8:])
        grid = TorusGrid(int(n), int(g), float(length))
        if tag == LAYOUT_VECTOR:
            shape = grid.shape + (int(big_n),)
        elif tag == LAYOUT_MATRIX:
            shape = grid.shape + (int(big_n), int(big_n))
        else:
            raise ValueError(f"{path}: unknown layout tag {tag}")
        data = np.frombuffer(fh.read(), dtype=np.complex64).reshape(shape)
    values = data.astype(complex)
    if tag == LAYOUT_VECTOR:
        return GridField(grid, values)
    return grid, values
