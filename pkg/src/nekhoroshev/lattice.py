"""Resonance-lattice geometry: rational frequency, cutoff diamond, the
time-dependent partition D+/D-/D0/D>, the sign function and its integral."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

DIAMOND_CAP = 10**8
# relative slack on the closed membership test, absorbs rounding of rho3*K
_BOUNDARY_RTOL = 1e-12


class Region(enum.IntEnum):
    MINUS = -1
    ZERO = 0
    PLUS = 1
    GREATER = 2

    @property
    def label(self) -> str:
        return {-1: "Dminus", 0: "D0", 1: "Dplus", 2: "Dgreater"}[int(self)]


@dataclass(frozen=True)
class FrequencyVector:
    """omega* = p / t_bar with integer p, gcd(p) = 1."""

    p: tuple[int, ...]
    t_bar: float

    def __post_init__(self):
        p = tuple(int(v) for v in self.p)
        if len(p) < 1:
            raise ValueError("empty frequency vector")
        if not all(float(v) == q for v, q in zip(self.p, p)):
            raise ValueError(f"p must be integer, got {self.p}")
        if reduce(math.gcd, (abs(v) for v in p)) != 1:
            raise ValueError(f"gcd of p must be 1, got {p}")
        if not (self.t_bar > 0 and math.isfinite(self.t_bar)):
            raise ValueError("t_bar must be positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t_bar", float(self.t_bar))

    @classmethod
    def from_integers(cls, p, t_bar: float) -> "FrequencyVector":
        """Divide out the common factor g of p, rescaling t_bar by 1/g so
        omega* is unchanged."""
        p = [int(v) for v in p]
        g = reduce(math.gcd, (abs(v) for v in p))
        if g == 0:
            raise ValueError("p must be nonzero")
        return cls(tuple(v // g for v in p), t_bar / g)

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def p_array(self) -> np.ndarray:
        return np.array(self.p, dtype=np.int64)

    @property
    def omega(self) -> np.ndarray:
        return self.p_array / self.t_bar

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.t_bar

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.omega))

    def level(self, k) -> np.ndarray | int:
        """Exact integer <k, p>; vectorised over leading axes."""
        out = np.asarray(k, dtype=np.int64) @ self.p_array
        return int(out) if np.ndim(out) == 0 else out

    def inner(self, k):
        """<k, omega*> as a float."""
        return self.level(k) / self.t_bar


@dataclass(frozen=True)
class PartitionParams:
    rho_split: tuple[float, float, float]
    K: float
    R: float = math.nan

    def __post_init__(self):
        rs = tuple(float(v) for v in self.rho_split)
        if len(rs) != 3 or min(rs) <= 0:
            raise ValueError(f"rho_split must be three positive reals, got {self.rho_split}")
        if not self.K > 0:
            raise ValueError("K must be positive")
        object.__setattr__(self, "rho_split", rs)
        object.__setattr__(self, "K", float(self.K))

    @classmethod
    def from_constants(cls, rho_split, R: float, m_plus: float, omega: FrequencyVector):
        rho1, _, rho3 = rho_split
        return cls(tuple(rho_split), rho1 / (rho3 * m_plus * R * omega.t_bar), R)

    @property
    def rho1(self) -> float:
        return self.rho_split[0]

    @property
    def rho2(self) -> float:
        return self.rho_split[1]

    @property
    def rho3(self) -> float:
        return self.rho_split[2]

    @property
    def rho(self) -> float:
        return self.rho1 + 2 * self.rho2 + self.rho3

    def check(self, rho: float, m_plus: float | None = None,
              omega: FrequencyVector | None = None, tol: float = 1e-12) -> None:
        if abs(self.rho - rho) > tol * max(1.0, rho):
            raise ValueError(f"rho1+2rho2+rho3 = {self.rho!r} != rho = {rho!r}")
        if m_plus is not None and omega is not None and math.isfinite(self.R):
            k_expected = self.rho1 / (self.rho3 * m_plus * self.R * omega.t_bar)
            if abs(self.K - k_expected) > tol * max(1.0, k_expected):
                raise ValueError(f"K = {self.K!r} inconsistent with rho1/(rho3 M+ R Tbar) = {k_expected!r}")

    @property
    def radius(self) -> int:
        """Largest integer l1-norm inside the diamond."""
        return int(math.floor(self.K * (1 + _BOUNDARY_RTOL)))


# ---------------------------------------------------------------- diamond

def diamond_count(K: float, n: int) -> int:
    """Exact number of integer points with |k|_1 <= K in Z^n."""
    R = int(math.floor(K))
    if R < 0:
        return 0
    return sum(2**j * math.comb(n, j) * math.comb(R, j) for j in range(min(n, R) + 1))


def diamond_volume_bound(K: float, n: int) -> float:
    """The continuum count (2K)^n / n! used in the closed-form estimates."""
    return (2.0 * K) ** n / math.factorial(n)


@lru_cache(maxsize=64)
def _diamond(R: int, n: int) -> np.ndarray:
    if n == 1:
        return np.arange(-R, R + 1, dtype=np.int64)[:, None]
    blocks = []
    for a in range(-R, R + 1):
        sub = _diamond(R - abs(a), n - 1)
        blocks.append(np.hstack([np.full((len(sub), 1), a, dtype=np.int64), sub]))
    out = np.vstack(blocks)
    out.flags.writeable = False
    return out


def enumerate_diamond(K: float, n: int, cap: int = DIAMOND_CAP) -> np.ndarray:
    """All k in Z^n with |k|_1 <= K as rows, lexicographic order."""
    if K < 0 or n < 1:
        raise ValueError("need K >= 0 and n >= 1")
    count = diamond_count(K, n)
    if count > cap:
        raise ValueError(f"diamond of radius {K} in dimension {n} has {count} points > cap {cap}")
    return _diamond(int(math.floor(K)), n)


# ---------------------------------------------------------------- partition

def _arrays(ks, omega: FrequencyVector):
    ks = np.asarray(ks, dtype=np.int64)
    return np.abs(ks).sum(axis=-1), omega.level(ks)


def exit_delta_from(norm, level, params: PartitionParams, t_bar: float):
    """delta_exit = rho3 (K - |k|) T / |<k,p>|; nan for resonant modes or
    modes outside the diamond at delta = 0."""
    norm = np.asarray(norm, dtype=float)
    level = np.asarray(level)
    inside = (level != 0) & (norm * params.rho3 <= params.rho3 * params.K * (1 + _BOUNDARY_RTOL))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = params.rho3 * np.maximum(params.K - norm, 0.0) * t_bar / np.abs(level)
    return np.where(inside, val, np.nan)


def classify_from(norm, level, delta: float, params: PartitionParams, t_bar: float):
    """Vectorised region codes from (|k|_1, <k,p>)."""
    norm = np.asarray(norm, dtype=float)
    level = np.asarray(level)
    lhs = norm * params.rho3 + np.abs(level) * (delta / t_bar)
    inside = lhs <= params.rho3 * params.K * (1 + _BOUNDARY_RTOL)
    code = np.where(inside, np.sign(level), int(Region.GREATER))
    return np.where(level == 0, int(Region.ZERO), code).astype(np.int8)


def s_from(norm, level, delta: float, params: PartitionParams, t_bar: float):
    ex = exit_delta_from(norm, level, params, t_bar)
    val = np.sign(level) * np.minimum(delta, np.nan_to_num(ex, nan=0.0))
    return np.where(np.isnan(ex), 0.0, val)


def classify_many(ks, delta: float, params: PartitionParams, omega: FrequencyVector) -> np.ndarray:
    norm, level = _arrays(ks, omega)
    return classify_from(norm, level, delta, params, omega.t_bar)


def classify(k, delta: float, params: PartitionParams, omega: FrequencyVector) -> Region:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return Region(int(classify_many(np.asarray(k)[None, :], delta, params, omega)[0]))


def sigma_many(ks, delta: float, params: PartitionParams, omega: FrequencyVector) -> np.ndarray:
    code = classify_many(ks, delta, params, omega)
    return np.where(np.abs(code) == 1, code, 0).astype(np.int8)


def sigma_k(k, delta: float, params: PartitionParams, omega: FrequencyVector) -> int:
    return int(sigma_many(np.asarray(k)[None, :], delta, params, omega)[0])


def exit_delta(k, params: PartitionParams, omega: FrequencyVector):
    norm, level = _arrays(k, omega)
    out = exit_delta_from(norm, level, params, omega.t_bar)
    return float(out) if np.ndim(out) == 0 else out


def s_many(ks, delta: float, params: PartitionParams, omega: FrequencyVector) -> np.ndarray:
    norm, level = _arrays(ks, omega)
    return s_from(norm, level, delta, params, omega.t_bar)


def s_k(k, delta: float, params: PartitionParams, omega: FrequencyVector) -> float:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return float(s_many(np.asarray(k)[None, :], delta, params, omega)[0])


def stopping_time(params: PartitionParams, omega: FrequencyVector) -> float:
    """Exact delta* by enumeration of D+-(0); certified against K T rho3."""
    ks = enumerate_diamond(params.K, omega.n)
    ex = exit_delta(ks, params, omega)
    ex = ex[~np.isnan(ex)] if np.ndim(ex) else np.array([])
    dstar = float(ex.max()) if ex.size else 0.0
    bound = params.K * omega.t_bar * params.rho3
    if dstar > bound * (1 + 1e-12):
        raise AssertionError(f"stopping time {dstar} exceeds K*Tbar*rho3 = {bound}")
    return dstar


def exit_breakpoints(params: PartitionParams, omega: FrequencyVector) -> np.ndarray:
    """Sorted distinct positive exit times; D+- is constant between them."""
    ks = enumerate_diamond(params.K, omega.n)
    ex = np.atleast_1d(exit_delta(ks, params, omega))
    ex = ex[~np.isnan(ex) & (ex > 0)]
    return np.unique(ex)


def partition_counts(delta: float, params: PartitionParams, omega: FrequencyVector,
                     radius: int | None = None) -> dict[str, int]:
    """Class counts over the diamond of the given radius (default floor K)."""
    R = params.radius if radius is None else radius
    ks = enumerate_diamond(R, omega.n)
    code = classify_many(ks, delta, params, omega)
    return {
        "n_plus": int((code == 1).sum()),
        "n_minus": int((code == -1).sum()),
        "n_zero": int((code == 0).sum()),
        "n_greater": int((code == 2).sum()),
    }
