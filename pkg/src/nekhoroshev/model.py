"""Nearly integrable Hamiltonians H0(I) + eps H1(I, theta, x, y): the
unperturbed part, Fourier data sampled on a slow-variable grid, weighted
norms, and the splitting around a rational frequency."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .lattice import FrequencyVector

# ---------------------------------------------------------------- slow grid

_FD_EDGE = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)


def fd4(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order finite difference along one axis, one-sided at the ends."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    N = v.shape[0]
    if N < 5:
        raise ValueError("fourth-order differences need at least 5 points per axis")
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / 12.0
    head, tail = v[:5], v[N - 5:][::-1]
    for i, st in enumerate(_FD_EDGE):
        out[i] = np.tensordot(st, head, axes=(0, 0))
        out[N - 1 - i] = -np.tensordot(st, tail, axes=(0, 0))
    return np.moveaxis(out / h, 0, axis)


@dataclass(frozen=True)
class SlowGrid:
    """Tensor grid over the slow variables (I_1..I_n, x_1..x_m, y_1..y_m)."""

    axes: tuple
    n_actions: int

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in axes:
            if a.ndim != 1 or len(a) < 1:
                raise ValueError("each axis must be a nonempty 1-d array")
            if len(a) > 2 and not np.allclose(np.diff(a), a[1] - a[0]):
                raise ValueError("axes must be uniform")
        if (len(axes) - self.n_actions) % 2:
            raise ValueError("need an even number of degenerate axes")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def box(cls, n: int, m: int = 0, half_width=1.0, points: int = 9, center=None) -> "SlowGrid":
        dims = n + 2 * m
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (dims,))
        c = np.zeros(dims) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(np.linspace(c[i] - hw[i], c[i] + hw[i], points) for i in range(dims)), n)

    @property
    def m(self) -> int:
        return (len(self.axes) - self.n_actions) // 2

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes)

    def points(self) -> np.ndarray:
        """Array of shape grid.shape + (dims,)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def actions(self) -> np.ndarray:
        return self.points()[..., : self.n_actions]

    def derivative(self, values: np.ndarray, j: int) -> np.ndarray:
        """d/d(slow_j) of values with trailing axes equal to self.shape."""
        lead = np.ndim(values) - self.dims
        return fd4(values, self.spacing[j], lead + j)


# ---------------------------------------------------------------- H0

class QuadraticH0:
    """H0(I) = 1/2 <A I, I> + <b, I> + c."""

    def __init__(self, A, b=None, c: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        self.A = 0.5 * (A + A.T)
        self.b = np.zeros(len(A)) if b is None else np.asarray(b, dtype=float)
        self.c = float(c)

    @property
    def n(self) -> int:
        return len(self.A)

    def value(self, I):
        I = np.asarray(I, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", I, self.A, I) + I @ self.b + self.c

    def grad(self, I):
        return np.asarray(I, dtype=float) @ self.A + self.b

    def hessian(self, I):
        I = np.asarray(I, dtype=float)
        return np.broadcast_to(self.A, I.shape[:-1] + self.A.shape)

    def third(self, I):
        I = np.asarray(I, dtype=float)
        return np.zeros(I.shape[:-1] + (self.n,) * 3)

    def shifted(self, shift) -> "QuadraticH0":
        s = np.asarray(shift, dtype=float)
        return QuadraticH0(self.A, self.b + self.A @ s, float(self.value(s)))


class PolynomialH0:
    """H0(I) = sum_j c_j prod_i I_i^{e_ji}."""

    def __init__(self, terms, n: int | None = None):
        terms = [(tuple(int(e) for e in ex), float(cf)) for ex, cf in terms]
        if not terms and n is None:
            raise ValueError("empty polynomial needs n")
        self._n = n if n is not None else len(terms[0][0])
        if any(len(ex) != self._n for ex, _ in terms):
            raise ValueError("exponent length mismatch")
        self.exps = np.array([ex for ex, _ in terms], dtype=np.int64).reshape(-1, self._n)
        self.coefs = np.array([cf for _, cf in terms])

    @property
    def n(self) -> int:
        return self._n

    def _deriv(self, I, orders):
        """sum_j c_j d^orders prod I^e, orders a multi-index."""
        I = np.asarray(I, dtype=float)
        out = np.zeros(I.shape[:-1])
        for ex, cf in zip(self.exps, self.coefs):
            fac = cf
            term = np.ones(I.shape[:-1])
            for i in range(self._n):
                e, o = ex[i], orders[i]
                if o > e:
                    fac = 0.0
                    break
                fac *= math.perm(e, o)
                term = term * I[..., i] ** (e - o)
            if fac:
                out = out + fac * term
        return out

    def value(self, I):
        return self._deriv(I, (0,) * self._n)

    def _tensor(self, I, rank):
        I = np.asarray(I, dtype=float)
        out = np.zeros(I.shape[:-1] + (self._n,) * rank)
        for idx in itertools.product(range(self._n), repeat=rank):
            orders = [0] * self._n
            for i in idx:
                orders[i] += 1
            out[(...,) + idx] = self._deriv(I, orders)
        return out

    def grad(self, I):
        return self._tensor(I, 1)

    def hessian(self, I):
        return self._tensor(I, 2)

    def third(self, I):
        return self._tensor(I, 3)

    def shifted(self, shift) -> "ShiftedH0":
        return ShiftedH0(self, shift)


class ShiftedH0:
    """H0(shift + J) as a function of J."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = np.asarray(shift, dtype=float)

    @property
    def n(self) -> int:
        return self.base.n

    def value(self, J):
        return self.base.value(self.shift + np.asarray(J, dtype=float))

    def grad(self, J):
        return self.base.grad(self.shift + np.asarray(J, dtype=float))

    def hessian(self, J):
        return self.base.hessian(self.shift + np.asarray(J, dtype=float))

    def third(self, J):
        return self.base.third(self.shift + np.asarray(J, dtype=float))

    def shifted(self, shift) -> "ShiftedH0":
        return ShiftedH0(self.base, self.shift + np.asarray(shift, dtype=float))


# ---------------------------------------------------------------- Fourier data

@dataclass(frozen=True)
class FourierField:
    """sum_k f^k(slow) e^{i<k,theta>}; coefficients are scalars (constant in the
    slow variables) or arrays of the grid's shape."""

    n: int
    modes: Mapping
    truncation_radius: int
    grid: SlowGrid | None = None

    def __post_init__(self):
        modes = {}
        for k, v in dict(self.modes).items():
            k = tuple(int(x) for x in k)
            if len(k) != self.n:
                raise ValueError(f"mode {k} has wrong dimension")
            if sum(abs(x) for x in k) > self.truncation_radius:
                raise ValueError(f"mode {k} exceeds truncation radius {self.truncation_radius}")
            v = np.asarray(v, dtype=complex)
            if self.grid is not None and v.shape not in ((), self.grid.shape):
                raise ValueError("coefficient shape does not match the grid")
            modes[k] = v
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_rows(cls, rows, n: int, truncation_radius: int | None = None,
                  grid: SlowGrid | None = None) -> "FourierField":
        """Rows [k_1..k_n, re, im] for constant coefficients; the conjugate
        partner at -k is added unless given explicitly."""
        modes: dict = {}
        for row in rows:
            k = tuple(int(v) for v in row[:n])
            modes[k] = complex(row[n], row[n + 1])
        for k, v in list(modes.items()):
            mk = tuple(-x for x in k)
            if mk not in modes:
                modes[mk] = v.conjugate()
            elif any(k) and abs(modes[mk] - v.conjugate()) > 1e-14 * max(1.0, abs(v)):
                raise ValueError(f"modes {k} and {mk} are not complex conjugates")
        if any(k == (0,) * n for k in modes) and abs(modes[(0,) * n].imag) > 0:
            raise ValueError("mean mode must be real")
        radius = max((sum(abs(x) for x in k) for k in modes), default=0)
        tr = radius if truncation_radius is None else truncation_radius
        f = cls(n, modes, tr)
        return f.on_grid(grid) if grid is not None else f

    @classmethod
    def zeros(cls, n: int, truncation_radius: int = 0, grid: SlowGrid | None = None) -> "FourierField":
        return cls(n, {}, truncation_radius, grid)

    def on_grid(self, grid: SlowGrid) -> "FourierField":
        modes = {k: np.broadcast_to(v, grid.shape).copy() for k, v in self.modes.items()}
        return FourierField(self.n, modes, self.truncation_radius, grid)

    def with_radius(self, radius: int) -> "FourierField":
        keep = {k: v for k, v in self.modes.items() if sum(map(abs, k)) <= radius}
        return FourierField(self.n, keep, radius, self.grid)

    def __add__(self, other: "FourierField") -> "FourierField":
        modes = dict(self.modes)
        for k, v in other.modes.items():
            modes[k] = modes[k] + v if k in modes else v
        return FourierField(self.n, modes, max(self.truncation_radius, other.truncation_radius),
                            self.grid or other.grid)

    def scale(self, c) -> "FourierField":
        return FourierField(self.n, {k: c * v for k, v in self.modes.items()},
                            self.truncation_radius, self.grid)

    def keys_array(self) -> np.ndarray:
        return np.array(list(self.modes), dtype=np.int64).reshape(-1, self.n)

    def abs_coeffs(self) -> np.ndarray:
        """|f^k| stacked over modes, shape (N,) + slow shape."""
        if not self.modes:
            return np.zeros((0,))
        return np.abs(np.stack([np.broadcast_to(v, self._shape) for v in self.modes.values()]))

    @property
    def _shape(self) -> tuple:
        if self.grid is not None:
            return self.grid.shape
        shapes = {np.shape(v) for v in self.modes.values()}
        return max(shapes, key=len) if shapes else ()

    def d_theta(self, j: int) -> "FourierField":
        return FourierField(self.n, {k: 1j * k[j] * v for k, v in self.modes.items()},
                            self.truncation_radius, self.grid)

    def d_slow(self, j: int) -> "FourierField":
        if self.grid is None:
            return FourierField(self.n, {k: np.zeros_like(v) for k, v in self.modes.items()},
                                self.truncation_radius)
        return FourierField(self.n, {k: self.grid.derivative(np.broadcast_to(v, self.grid.shape), j)
                                     for k, v in self.modes.items()},
                            self.truncation_radius, self.grid)

    def reality_defect(self) -> float:
        """max |f^{-k} - conj f^k| over modes and grid."""
        worst = 0.0
        for k, v in self.modes.items():
            mk = tuple(-x for x in k)
            w = self.modes.get(mk, 0.0)
            worst = max(worst, float(np.max(np.abs(w - np.conj(v)))))
        return worst

    def evaluate(self, theta, index=None):
        """Real part of sum_k f^k e^{i<k,theta>} at one slow grid index (or for
        constant coefficients)."""
        theta = np.asarray(theta, dtype=float)
        total = 0.0
        for k, v in self.modes.items():
            c = v if index is None or np.ndim(v) == 0 else v[index]
            total = total + c * np.exp(1j * (theta @ np.array(k, dtype=float)))
        return np.real(total)


def fourier_norm(f: FourierField, rho_prime: float, rho: float | None = None) -> float:
    """sup over slow samples of sum_k |f^k| e^{|k|_1 rho'} (real-grid estimate)."""
    if rho_prime < 0:
        raise ValueError("rho_prime must be nonnegative")
    if rho is not None and rho_prime > rho * (1 + 1e-15):
        raise ValueError(f"rho_prime = {rho_prime} exceeds the analyticity width rho = {rho}")
    if not f.modes:
        return 0.0
    ks = f.keys_array()
    w = np.exp(np.abs(ks).sum(axis=1) * rho_prime)
    a = f.abs_coeffs()
    total = np.tensordot(w, a, axes=(0, 0))
    return float(np.max(total))


def split_resonant(f: FourierField, omega: FrequencyVector) -> tuple[FourierField, FourierField]:
    """(resonant part <k,p> = 0, nonresonant part), exact integer test."""
    res, non = {}, {}
    p = omega.p
    for k, v in f.modes.items():
        (res if sum(a * b for a, b in zip(k, p)) == 0 else non)[k] = v
    return (FourierField(f.n, res, f.truncation_radius, f.grid),
            FourierField(f.n, non, f.truncation_radius, f.grid))


def gradient_norms(f: FourierField, rho_prime: float, rho: float | None = None) -> list[float]:
    """Norms of each partial derivative: theta_j exactly, slow_j by fd4."""
    out = [fourier_norm(f.d_theta(j), rho_prime, rho) for j in range(f.n)]
    if f.grid is not None:
        out += [fourier_norm(f.d_slow(j), rho_prime, rho) for j in range(f.grid.dims)]
    return out


def mu_of(f: FourierField, rho: float) -> float:
    """max(||H1||_rho, ||grad H1||_rho)."""
    return max([fourier_norm(f, rho, rho)] + gradient_norms(f, rho, rho))


# ---------------------------------------------------------------- spec

@dataclass(frozen=True)
class ConvexityConstants:
    m_minus: float
    m_plus: float
    grad_inf: float
    grad3_inf: float = 0.0

    def __post_init__(self):
        if not (0 < self.m_minus <= self.m_plus * (1 + 1e-12)):
            raise ValueError(f"need 0 < m_minus <= m_plus, got {self.m_minus}, {self.m_plus}")
        if not self.grad_inf > 0:
            raise ValueError("grad_inf must be positive")
        if self.grad3_inf < 0:
            raise ValueError("grad3_inf must be nonnegative")


@dataclass(frozen=True)
class HamiltonianSpec:
    n: int
    m: int
    h0: object
    perturbation: FourierField
    rho: float
    sigma: float
    convexity: ConvexityConstants | None = None
    action_box: tuple = field(default=())

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if not (self.rho > 0 and self.sigma > 0):
            raise ValueError("rho and sigma must be positive")
        if self.perturbation.n != self.n:
            raise ValueError("perturbation dimension mismatch")
        if self.h0.n != self.n:
            raise ValueError("H0 dimension mismatch")
        if not math.isfinite(fourier_norm(self.perturbation, self.rho)):
            raise ValueError("perturbation norm at rho is not finite")
        if not self.action_box:
            object.__setattr__(self, "action_box", tuple((-1.0, 1.0) for _ in range(self.n)))
        box = tuple((float(a), float(b)) for a, b in self.action_box)
        if len(box) != self.n or any(a >= b for a, b in box):
            raise ValueError("action_box must be n increasing intervals")
        object.__setattr__(self, "action_box", box)
        if self.convexity is None:
            object.__setattr__(self, "convexity", estimate_convexity(self, 9))

    @property
    def mu(self) -> float:
        return mu_of(self.perturbation, self.rho)

    def in_domain(self, I) -> bool:
        I = np.asarray(I, dtype=float)
        return all(a <= v <= b for v, (a, b) in zip(I, self.action_box))

    def frequency(self, I) -> np.ndarray:
        return self.h0.grad(I)


def _box_points(box, resolution: int) -> np.ndarray:
    axes = [np.linspace(a, b, resolution) for a, b in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def estimate_convexity(spec: HamiltonianSpec, grid_resolution: int) -> ConvexityConstants:
    """Grid estimate of the Hessian bounds and gradient sup norms over the action box.

    M- is the smallest Rayleigh quotient, M+ the largest spectral norm; the
    third-derivative norm is max_i sum_{jk} |d^3 H0 / dI_i dI_j dI_k|.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    pts = _box_points(spec.action_box, grid_resolution)
    eig = np.linalg.eigvalsh(spec.h0.hessian(pts))
    m_minus = float(eig.min())
    if m_minus <= 0:
        raise ValueError(f"H0 is not quasi-convex on the grid: min Rayleigh quotient {m_minus}")
    m_plus = float(np.abs(eig).max())
    grad_inf = float(np.abs(spec.h0.grad(pts)).max())
    third = spec.h0.third(pts)
    grad3 = float(np.abs(third).reshape(len(pts), spec.n, -1).sum(axis=2).max()) if third.size else 0.0
    return ConvexityConstants(m_minus, m_plus, grad_inf, grad3)


# ---------------------------------------------------------------- G

@dataclass(frozen=True)
class GPart:
    """G(I) = H0(I) - <w*, I> - H0(0) in translated actions."""

    h0: object
    omega: np.ndarray
    h0_origin: float
    R: float
    g_max: float
    grad_max: float

    def value(self, I):
        I = np.asarray(I, dtype=float)
        return self.h0.value(I) - I @ self.omega - self.h0_origin

    def grad(self, I):
        return self.h0.grad(I) - self.omega


def _ball_points(n: int, R: float, points: int) -> np.ndarray:
    pts = _box_points([(-R, R)] * n, points)
    return pts[np.linalg.norm(pts, axis=1) <= R * (1 + 1e-12)]


def taylor_split(spec: HamiltonianSpec, omega: FrequencyVector, R: float,
                 points: int = 9, tol: float = 1e-10) -> GPart:
    """Build G and certify |G| <= M+ R^2/2 and |grad G|_2 <= M+ R on a grid of
    the ball of radius R (actions already translated so grad H0(0) = w*)."""
    w = omega.omega
    g0 = spec.h0.grad(np.zeros(spec.n))
    if np.max(np.abs(g0 - w)) > tol:
        raise ValueError(f"grad H0(0) = {g0} differs from omega* = {w}: translate actions first")
    h_origin = float(spec.h0.value(np.zeros(spec.n)))
    pts = _ball_points(spec.n, R, points)
    G = spec.h0.value(pts) - pts @ w - h_origin
    dG = spec.h0.grad(pts) - w
    g_max = float(np.abs(G).max())
    grad_max = float(np.linalg.norm(dG, axis=1).max())
    mp = spec.convexity.m_plus
    if g_max > mp * R**2 / 2 * (1 + 1e-12) + 1e-15:
        raise ValueError(f"|G| = {g_max} exceeds M+ R^2/2 = {mp * R**2 / 2}: bad convexity constants")
    if grad_max > mp * R * (1 + 1e-12) + 1e-15:
        raise ValueError(f"|grad G| = {grad_max} exceeds M+ R = {mp * R}: bad convexity constants")
    return GPart(spec.h0, w, h_origin, float(R), g_max, grad_max)


# ---------------------------------------------------------------- analytic perturbation

@dataclass(frozen=True)
class TrigPerturbation:
    """H1 = sum_k (c_k + <d_k, z>) e^{i<k,theta>} with z = (I, x, y); every mode
    carries its conjugate partner so H1 is real."""

    n: int
    m: int
    ks: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        ks = np.asarray(self.ks, dtype=np.int64).reshape(-1, self.n)
        c = np.asarray(self.c, dtype=complex).reshape(len(ks))
        d = np.asarray(self.d, dtype=complex).reshape(len(ks), self.n + 2 * self.m)
        index = {tuple(k): i for i, k in enumerate(ks)}
        if len(index) != len(ks):
            raise ValueError("duplicate modes")
        for i, k in enumerate(ks):
            j = index.get(tuple(-k))
            if j is None or abs(c[j] - np.conj(c[i])) > 1e-14 or np.abs(d[j] - np.conj(d[i])).max(initial=0) > 1e-14:
                raise ValueError(f"mode {tuple(k)} lacks a conjugate partner")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_rows(cls, rows, n: int, m: int = 0) -> "TrigPerturbation":
        """rows: dicts with k, re, im and optional slope_re, slope_im over (I, x, y),
        or flat lists [k_1..k_n, re, im] for constant coefficients."""
        dims = n + 2 * m
        modes: dict = {}
        for row in rows:
            if not isinstance(row, dict):
                row = list(row)
                if len(row) != n + 2:
                    raise ValueError(f"list row needs {n + 2} entries, got {len(row)}")
                row = {"k": row[:n], "re": row[n], "im": row[n + 1]}
            k = tuple(int(v) for v in row["k"])
            if len(k) != n:
                raise ValueError(f"mode {k} has wrong dimension")
            c = complex(row.get("re", 0.0), row.get("im", 0.0))
            d = np.asarray(row.get("slope_re", np.zeros(dims)), dtype=float) \
                + 1j * np.asarray(row.get("slope_im", np.zeros(dims)), dtype=float)
            if d.shape != (dims,):
                raise ValueError(f"slope of mode {k} must have {dims} entries")
            if k in modes:
                raise ValueError(f"mode {k} given twice")
            modes[k] = (c, d)
        for k, (c, d) in list(modes.items()):
            mk = tuple(-v for v in k)
            if mk not in modes:
                modes[mk] = (np.conj(c), np.conj(d))
        if (0,) * n in modes:
            c, d = modes[(0,) * n]
            if abs(c.imag) > 0 or np.abs(d.imag).max() > 0:
                raise ValueError("mean mode must be real")
        ks = np.array(list(modes), dtype=np.int64).reshape(-1, n)
        return cls(n, m, ks, np.array([v[0] for v in modes.values()]),
                   np.array([v[1] for v in modes.values()]).reshape(len(ks), dims))

    @property
    def radius(self) -> int:
        return int(np.abs(self.ks).sum(axis=1).max(initial=0))

    def sample(self, grid: SlowGrid, radius: int | None = None, shift=None) -> FourierField:
        """Coefficients at grid points z + shift as a FourierField."""
        z = grid.points()
        if shift is not None:
            z = z + np.asarray(shift, dtype=float)
        modes = {tuple(int(v) for v in k): self.c[i] + z @ self.d[i] for i, k in enumerate(self.ks)}
        return FourierField(self.n, modes, self.radius if radius is None else radius, grid)

    def value(self, I, theta, x=(), y=()):
        z = np.concatenate([np.asarray(I, float), np.asarray(x, float), np.asarray(y, float)])
        e = np.exp(1j * (self.ks @ np.asarray(theta, float)))
        return float(np.real(((self.c + self.d @ z) * e).sum()))
