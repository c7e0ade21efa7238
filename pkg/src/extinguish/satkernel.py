"""The regularized saturation kernel and numerical checks of its monotonicity.

    g(z) = (|z|^2 + eps)^(-(1-m)/2) z

is monotone for every eps >= 0, and the pairing

    Z = (g(z1) - g(z2)) * conj(z1 - z2)

lies in the sector 2 sqrt(m) |Im Z| <= (1 - m) Re Z.  ``certify_region``
samples pairs at scale and reports the worst defects.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .coeffset import Classification, classify_coefficient
from .errors import DomainError, SingularArgument

DEFECT_RTOL = 1e-12


@dataclass(frozen=True)
class SatParams:
    m: float
    eps: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.m <= 1.0):
            raise DomainError(f"m={self.m} outside [0, 1]")
        if not self.eps >= 0.0:
            raise DomainError(f"eps={self.eps} must be >= 0")

    @property
    def singular(self) -> bool:
        """True when g is multivalued at the origin (m = eps = 0)."""
        return self.m == 0.0 and self.eps == 0.0


def weight(s, p: SatParams):
    """(s + eps)^(-(1-m)/2) for s = |z|^2; the scalar factor of g."""
    s = np.asarray(s, dtype=float)
    if p.m == 1.0:
        return np.ones_like(s)
    with np.errstate(divide="ignore"):
        return (s + p.eps) ** (-(1.0 - p.m) / 2.0)


def saturate(z, p: SatParams):
    """Evaluate g at a complex scalar or array.

    For eps = 0 and m > 0 the value at z = 0 is 0 (continuous extension).
    """
    z = np.asarray(z, dtype=complex)
    s = z.real**2 + z.imag**2
    if p.m == 1.0:
        out = z.copy()
    elif p.eps > 0.0:
        out = z * weight(s, p)
    else:
        # |z| via hypot: |z|^2 underflows for tiny nonzero z
        r = np.abs(z)
        zero = r == 0.0
        if p.m == 0.0 and np.any(zero):
            raise SingularArgument("g_0^0 is multivalued at z = 0; use eps > 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            rs = np.where(zero, 1.0, r)
            unit = z.real / rs + 1j * (z.imag / rs)
            out = np.where(zero, 0.0, unit * rs**p.m)
    return out[()] if out.ndim == 0 else out


def radial_profile(t, p: SatParams):
    """f(t) = (t^2 + eps)^((m-1)/2) t, the nondecreasing modulus map of g."""
    t = np.asarray(t, dtype=float)
    if p.eps == 0.0:
        return np.where(t == 0.0, 0.0, np.abs(t) ** p.m * np.sign(t))
    return t * weight(t * t, p)


@dataclass(frozen=True)
class PairingSample:
    z1: complex
    z2: complex
    Z: complex
    monotone_defect: float
    sector_defect: float


def pairing_values(z1, z2, p: SatParams):
    """Vectorized pairing: returns (Z, Re Z, sector defect)."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    if p.m == 1.0:
        # exactly real; a complex product may leave fused-multiply roundoff in Im
        d = z1 - z2
        Z = np.asarray(d.real**2 + d.imag**2, dtype=complex)
    else:
        Z = np.asarray((saturate(z1, p) - saturate(z2, p)) * np.conj(z1 - z2), dtype=complex)
    sector = (1.0 - p.m) * Z.real - 2.0 * math.sqrt(p.m) * np.abs(Z.imag)
    return Z, Z.real, sector


def pairing(z1: complex, z2: complex, p: SatParams) -> PairingSample:
    Z, mono, sector = pairing_values(z1, z2, p)
    return PairingSample(
        z1=complex(z1), z2=complex(z2), Z=complex(Z), monotone_defect=float(mono), sector_defect=float(sector)
    )


def damping_defect(z1, z2, a: complex, p: SatParams):
    """Re(-i a Z); nonnegative whenever a is in C(m)."""
    if classify_coefficient(a, p.m) is Classification.OutsideC:
        raise DomainError(f"a={a} lies outside C({p.m})")
    Z, _, _ = pairing_values(z1, z2, p)
    out = (-1j * complex(a) * Z).real
    return float(out) if np.ndim(out) == 0 else out


def _f_components(t, s, theta, p: SatParams):
    wt = weight(t * t, p)
    ws = weight(s * s, p)
    A = t * t * s * s * (wt - ws) ** 2
    B = t * t * wt + s * s * ws
    C = t * s * (wt + ws)
    return A, B, C


def sector_ratio_bound(t, s, theta, p: SatParams):
    """Squared ratio |Im Z| / Re Z in polar variables and its closed-form bound.

    ``t = |z1| > s = |z2| > 0`` and ``theta = Arg(conj(z1) z2)``.  Returns
    ``(ratio_sq, bound)`` with ratio_sq = A (1 - cos^2 theta) / (B - C cos theta)^2
    and bound = (1-m)^2 / (4m) * t^2 s^2 / ((t^2 + eps)(s^2 + eps)).
    Broadcasts over array arguments.
    """
    if not (0.0 < p.m < 1.0):
        raise DomainError("sector ratio is defined for 0 < m < 1")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(s <= 0.0) or np.any(t <= s):
        raise DomainError("sector ratio requires t > s > 0")
    A, B, C = _f_components(t, s, theta, p)
    c = np.cos(theta)
    ratio_sq = A * (1.0 - c * c) / (B - C * c) ** 2
    bound = (1.0 - p.m) ** 2 / (4.0 * p.m) * (t * t * s * s) / ((t * t + p.eps) * (s * s + p.eps))
    if ratio_sq.ndim == 0:
        return float(ratio_sq), float(bound)
    return ratio_sq, np.broadcast_to(bound, ratio_sq.shape)


def boundary_coefficients(m: float) -> list[complex]:
    """Coefficients on the edge of C(m) used by the damping check."""
    if m == 0.0:
        return [1j]
    if m == 1.0:
        return [1.0 + 1e-3j, -1.0 + 1e-3j]
    re = 2.0 * math.sqrt(m)
    im = 1.0 - m
    return [complex(re, im), complex(-re, im)]


def sample_pairs(n: int, rng: np.random.Generator, nonzero: bool = False):
    """Draw ``n`` pairs: log-uniform moduli on six decades plus tight strata.

    A quarter of the pairs are generic; the rest concentrate on |z1| ~ |z2|,
    Arg difference ~ 0 and Arg difference ~ pi.  With ``nonzero=False`` a
    small share of pairs has one argument exactly at the origin.
    """
    k = max(n // 4, 1)
    sizes = [n - 3 * k, k, k, k] if n >= 4 else [n, 0, 0, 0]
    r1, r2, d = [], [], []
    # generic
    g = sizes[0]
    r1.append(10.0 ** rng.uniform(-3, 3, g))
    r2.append(10.0 ** rng.uniform(-3, 3, g))
    d.append(rng.uniform(-math.pi, math.pi, g))
    # |z1| ~ |z2|
    g = sizes[1]
    base = 10.0 ** rng.uniform(-3, 3, g)
    r1.append(base)
    r2.append(base * (1.0 + 10.0 ** rng.uniform(-12, -1, g) * rng.choice([-1.0, 0.0, 1.0], g)))
    d.append(rng.uniform(-math.pi, math.pi, g))
    # theta ~ 0 and theta ~ pi
    for offset in (0.0, math.pi):
        g = sizes[2]
        r1.append(10.0 ** rng.uniform(-3, 3, g))
        r2.append(10.0 ** rng.uniform(-3, 3, g))
        d.append(offset + 10.0 ** rng.uniform(-12, -1, g) * rng.choice([-1.0, 1.0], g))
    r1 = np.concatenate(r1)
    r2 = np.concatenate(r2)
    d = np.concatenate(d)
    phase = rng.uniform(-math.pi, math.pi, r1.size)
    z1 = r1 * np.exp(1j * phase)
    z2 = r2 * np.exp(1j * (phase + d))
    if not nonzero and z1.size >= 20:
        idx = rng.choice(z1.size, size=z1.size // 100, replace=False)
        half = idx.size // 2
        z1[idx[:half]] = 0.0
        z2[idx[half:]] = 0.0
    return z1, z2


@dataclass
class CertificationReport:
    m: float
    eps: float
    sample_count: int
    seed: int
    min_monotone_defect: float
    min_sector_defect: float
    min_damping_defect: float
    max_ratio_over_bound: float
    worst_monotone_scaled: float
    worst_sector_scaled: float
    worst_damping_scaled: float

    @property
    def passed(self) -> bool:
        """All scaled defects within tolerance (scaled values <= 1 mean pass)."""
        return (
            self.worst_monotone_scaled <= 1.0
            and self.worst_sector_scaled <= 1.0
            and self.worst_damping_scaled <= 1.0
            and self.max_ratio_over_bound <= 1.0 + 1e-10
        )

    def to_text(self) -> str:
        rows = asdict(self)
        rows["passed"] = self.passed
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in rows.items())

    @classmethod
    def from_text(cls, text: str) -> "CertificationReport":
        vals = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            k, v = (x.strip() for x in line.split("=", 1))
            vals[k] = v
        vals.pop("passed", None)
        kw = {k: (int(v) if k in ("sample_count", "seed") else float(v)) for k, v in vals.items()}
        return cls(**kw)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _chunk_stats(args):
    m, eps, n, seed, chunk = args
    p = SatParams(m, eps)
    rng = np.random.default_rng([seed, chunk])
    z1, z2 = sample_pairs(n, rng, nonzero=p.singular)
    Z, mono, sector = pairing_values(z1, z2, p)
    scale = DEFECT_RTOL * (np.abs(Z) + 1.0)
    out = {
        "min_mono": float(mono.min()),
        "min_sector": float(sector.min()),
        "worst_mono": float(np.max(-mono / scale)),
        "worst_sector": float(np.max(-sector / scale)),
    }
    dmin, dworst = math.inf, -math.inf
    for a in boundary_coefficients(m):
        dd = (-1j * a * Z).real
        dmin = min(dmin, float(dd.min()))
        dworst = max(dworst, float(np.max(-dd / (scale * abs(a)))))
    out["min_damp"] = dmin
    out["worst_damp"] = dworst
    ratio = -math.inf
    if 0.0 < m < 1.0:
        t = np.abs(z1)
        s = np.abs(z2)
        sel = (t > 0.0) & (s > 0.0) & (t != s)
        t, s = t[sel], s[sel]
        hi, lo = np.maximum(t, s), np.minimum(t, s)
        theta = np.angle(np.conj(z1[sel]) * z2[sel])
        keep = hi > lo
        if np.any(keep):
            r, b = sector_ratio_bound(hi[keep], lo[keep], theta[keep], p)
            ratio = float(np.max(r / b))
    out["max_ratio"] = ratio
    return out


def certify_region(p: SatParams, sample_count: int, seed: int, workers: int | None = None,
                   chunk_size: int = 250_000) -> CertificationReport:
    """Sample ``sample_count`` seeded pairs and report the worst defects.

    Work is split into fixed chunks (each with its own derived seed) so the
    result does not depend on the number of workers.
    """
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    nchunks = -(-sample_count // chunk_size)
    jobs = []
    left = sample_count
    for c in range(nchunks):
        n = min(chunk_size, left)
        left -= n
        jobs.append((p.m, p.eps, n, seed, c))
    if workers is None:
        workers = _default_workers()
    if workers > 1 and nchunks > 1:
        with ProcessPoolExecutor(max_workers=min(workers, nchunks)) as pool:
            stats = list(pool.map(_chunk_stats, jobs))
    else:
        stats = [_chunk_stats(j) for j in jobs]
    return CertificationReport(
        m=p.m,
        eps=p.eps,
        sample_count=sample_count,
        seed=seed,
        min_monotone_defect=min(s["min_mono"] for s in stats),
        min_sector_defect=min(s["min_sector"] for s in stats),
        min_damping_defect=min(s["min_damp"] for s in stats),
        max_ratio_over_bound=max(s["max_ratio"] for s in stats),
        worst_monotone_scaled=max(s["worst_mono"] for s in stats),
        worst_sector_scaled=max(s["worst_sector"] for s in stats),
        worst_damping_scaled=max(s["worst_damp"] for s in stats),
    )


def _default_workers() -> int:
    cap = os.environ.get("EXTINGUISH_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n
