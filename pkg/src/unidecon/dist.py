"""Distribution models, samplers and convolution densities.

A :class:`DistributionModel` describes either the hidden distribution ``F0``
of ``U`` or the exposure-length distribution ``FE`` of ``E``.  Observations
are ``S = U + V`` with ``V`` uniform on ``[0, 1]`` (fixed model) or uniform on
``[0, E]`` given ``E`` (mixed model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, DomainError

KINDS = ("truncexp", "uniform", "degenerate", "empirical")

_ALIASES = {
    "truncexp": "truncexp",
    "truncated-exponential": "truncexp",
    "uniform": "uniform",
    "unif": "uniform",
    "degenerate": "degenerate",
    "point": "degenerate",
    "empirical": "empirical",
    "step": "empirical",
}


@dataclass(frozen=True)
class DistributionModel:
    """Distribution with a known, bounded support.

    Parameters
    ----------
    kind : str
        One of ``truncexp`` (exponential with ``rate`` truncated to
        ``[lower, upper]``), ``uniform`` (on ``[lower, upper]``),
        ``degenerate`` (point mass at ``lower == upper``) or ``empirical``
        (finite masses at ``points``).
    lower, upper : float
        Support endpoints. ``upper`` is the upper support point ``M``.
    rate : float
        Exponential rate, truncexp only.
    points, masses : tuple of float
        Atoms and their probabilities, empirical only.
    """

    kind: str
    lower: float = 0.0
    upper: float = 1.0
    rate: float = 1.0
    points: tuple = field(default=(), repr=False)
    masses: tuple = field(default=(), repr=False)

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigurationError("support endpoints must be finite")
        if kind in ("truncexp", "uniform") and not self.upper > self.lower:
            raise ConfigurationError(
                f"{kind} needs upper > lower, got [{self.lower}, {self.upper}]"
            )
        if kind == "truncexp" and not self.rate > 0:
            raise ConfigurationError(f"truncexp needs rate > 0, got {self.rate}")
        if kind == "degenerate" and self.lower != self.upper:
            raise ConfigurationError("degenerate distribution needs lower == upper")
        if kind == "empirical":
            pts = np.asarray(self.points, dtype=float)
            w = np.asarray(self.masses, dtype=float)
            if pts.ndim != 1 or pts.size == 0 or pts.shape != w.shape:
                raise ConfigurationError("empirical needs matching points and masses")
            if np.any(np.diff(pts) <= 0):
                raise ConfigurationError("empirical points must be strictly increasing")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ConfigurationError("empirical masses must be >= 0 and sum to 1")
            object.__setattr__(self, "points", tuple(pts.tolist()))
            object.__setattr__(self, "masses", tuple(w.tolist()))
            object.__setattr__(self, "lower", float(pts[0]))
            object.__setattr__(self, "upper", float(pts[-1]))

    # -- evaluation -----------------------------------------------------

    @property
    def M(self) -> float:
        return self.upper

    @property
    def is_continuous(self) -> bool:
        return self.kind in ("truncexp", "uniform")

    def cdf(self, x):
        """Right-continuous distribution function, clamped outside the support."""
        x = np.asarray(x, dtype=float)
        a, b = self.lower, self.upper
        if self.kind == "truncexp":
            z = np.clip(x, a, b) - a
            out = np.expm1(-self.rate * z) / np.expm1(-self.rate * (b - a))
        elif self.kind == "uniform":
            out = (np.clip(x, a, b) - a) / (b - a)
        elif self.kind == "degenerate":
            out = (x >= a).astype(float)
        else:
            cum = np.concatenate([[0.0], np.cumsum(self.masses)])
            cum[-1] = 1.0
            out = cum[np.searchsorted(np.asarray(self.points), x, side="right")]
        out = np.where(x < a, 0.0, np.where(x >= b, 1.0, out))
        return out if out.ndim else float(out)

    def density(self, x):
        """Lebesgue density; only defined for the continuous kinds."""
        if not self.is_continuous:
            raise DomainError(f"{self.kind} distribution has no Lebesgue density")
        x = np.asarray(x, dtype=float)
        a, b = self.lower, self.upper
        inside = (x >= a) & (x <= b)
        if self.kind == "truncexp":
            val = self.rate * np.exp(-self.rate * (x - a)) / -np.expm1(-self.rate * (b - a))
        else:
            val = np.full(x.shape, 1.0 / (b - a))
        out = np.where(inside, val, 0.0)
        return out if out.ndim else float(out)

    def quantile(self, u):
        """Left-continuous inverse of :meth:`cdf` on ``[0, 1]``."""
        u = np.asarray(u, dtype=float)
        a, b = self.lower, self.upper
        if self.kind == "truncexp":
            out = a - np.log1p(u * np.expm1(-self.rate * (b - a))) / self.rate
            out = np.clip(out, a, b)
        elif self.kind == "uniform":
            out = a + u * (b - a)
        elif self.kind == "degenerate":
            out = np.full(u.shape, a)
        else:
            cum = np.cumsum(self.masses)
            cum[-1] = 1.0
            idx = np.minimum(np.searchsorted(cum, u, side="left"), len(cum) - 1)
            out = np.asarray(self.points)[idx]
        return out if out.ndim else float(out)

    def breakpoints(self):
        """Points where the cdf is not smooth (used as quadrature panel edges)."""
        if self.kind == "empirical":
            return np.asarray(self.points)
        return np.array(sorted({self.lower, self.upper}))

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        """Plain-text ``key = value`` block."""
        lines = [f"kind = {self.kind}"]
        if self.kind == "empirical":
            lines.append("points = " + ",".join(repr(p) for p in self.points))
            lines.append("masses = " + ",".join(repr(w) for w in self.masses))
        else:
            lines.append(f"lower = {self.lower!r}")
            lines.append(f"upper = {self.upper!r}")
            if self.kind == "truncexp":
                lines.append(f"rate = {self.rate!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DistributionModel":
        fields = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"expected key = value, got {raw!r}")
            key, value = (p.strip() for p in line.split("=", 1))
            fields[key] = value
        if "kind" not in fields:
            raise ConfigurationError("distribution block lacks 'kind'")
        kind = fields.pop("kind")
        try:
            if _ALIASES.get(kind) == "empirical":
                pts = tuple(float(v) for v in fields.pop("points").split(","))
                ws = tuple(float(v) for v in fields.pop("masses").split(","))
                kwargs = dict(points=pts, masses=ws)
            elif _ALIASES.get(kind) == "degenerate":
                c = float(fields.pop("at", fields.pop("lower", "nan")))
                fields.pop("upper", None)
                kwargs = dict(lower=c, upper=c)
            else:
                kwargs = {k: float(fields.pop(k)) for k in ("lower", "upper", "rate") if k in fields}
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"bad distribution block: {exc}") from exc
        if fields:
            raise ConfigurationError(f"unknown distribution keys: {sorted(fields)}")
        return cls(kind, **kwargs)

    @classmethod
    def parse(cls, spec: str) -> "DistributionModel":
        """Parse a compact spec such as ``truncexp:0:2``, ``uniform:0.5:1.5``,
        ``truncexp:0:2:0.5`` (with rate) or ``degenerate:1``."""
        parts = [p.strip() for p in spec.split(":")]
        kind = _ALIASES.get(parts[0])
        try:
            nums = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ConfigurationError(f"bad distribution spec {spec!r}") from exc
        if kind == "degenerate" and len(nums) == 1:
            return cls(kind, lower=nums[0], upper=nums[0])
        if kind == "uniform" and len(nums) == 2:
            return cls(kind, lower=nums[0], upper=nums[1])
        if kind == "truncexp" and len(nums) in (2, 3):
            return cls(kind, lower=nums[0], upper=nums[1], rate=nums[2] if len(nums) == 3 else 1.0)
        raise ConfigurationError(f"bad distribution spec {spec!r}")

    def spec(self) -> str:
        if self.kind == "degenerate":
            return f"degenerate:{self.lower!r}"
        if self.kind == "uniform":
            return f"uniform:{self.lower!r}:{self.upper!r}"
        if self.kind == "truncexp":
            return f"truncexp:{self.lower!r}:{self.upper!r}:{self.rate!r}"
        return "empirical"


def truncated_exponential(upper=2.0, rate=1.0, lower=0.0):
    return DistributionModel("truncexp", lower=lower, upper=upper, rate=rate)


def uniform(lower=0.0, upper=1.0):
    return DistributionModel("uniform", lower=lower, upper=upper)


def degenerate(at=1.0):
    return DistributionModel("degenerate", lower=at, upper=at)


def empirical(points, masses):
    return DistributionModel("empirical", points=tuple(points), masses=tuple(masses))


def load_distribution(spec: str) -> DistributionModel:
    """Accept either a compact spec string or a path to a key=value file."""
    if ":" not in spec:
        try:
            with open(spec, encoding="utf-8") as fh:
                return DistributionModel.from_text(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read distribution file {spec!r}: {exc}") from exc
    return DistributionModel.parse(spec)


# -- observations and seeds -----------------------------------------------


@dataclass
class ObservationSet:
    """Sample of the fixed model (``s`` only) or the mixed model (``e``, ``s``)."""

    model_kind: str
    s_values: np.ndarray
    e_values: np.ndarray | None = None

    def __post_init__(self):
        self.s_values = np.asarray(self.s_values, dtype=float).ravel()
        if self.model_kind not in ("fixed", "mixed"):
            raise ConfigurationError(f"model_kind must be fixed or mixed, got {self.model_kind!r}")
        if not np.all(np.isfinite(self.s_values)) or np.any(self.s_values < 0):
            raise DomainError("observations s must be finite and >= 0")
        if self.model_kind == "fixed":
            if self.e_values is not None and len(self.e_values):
                raise ConfigurationError("fixed-model observations carry no e values")
            self.e_values = np.empty(0)
        else:
            if self.model_kind == "fixed":
                raise ConfigurationError("mixed-model observations need e values")
            self.e_values = np.asarray(self.e_values, dtype=float).ravel()
            if self.e_values.shape != self.s_values.shape:
                raise DataError("e and s must have the same length")
            if not np.all(np.isfinite(self.e_values)) or np.any(self.e_values <= 0):
                raise DomainError("exposure lengths e must be finite and > 0")

    @classmethod
    def fixed(cls, s):
        return cls("fixed", s)

    @classmethod
    def mixed(cls, e, s):
        return cls("mixed", s, e)

    @property
    def n(self) -> int:
        return self.s_values.size

    def __len__(self):
        return self.n

    @property
    def interval_lengths(self) -> np.ndarray:
        if self.model_kind == "fixed":
            return np.ones_like(self.s_values)
        return self.e_values

    def left_endpoints(self) -> np.ndarray:
        """``S - 1`` (fixed) or ``S - E`` (mixed): the open left end of each
        interval ``(L, S]`` known to contain ``U``."""
        if self.model_kind == "fixed":
            return self.s_values - 1.0
        return self.s_values - self.e_values


@dataclass(frozen=True)
class SeedSpec:
    """Counter-based seed: generator is a pure function of both fields."""

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed) & (2**64 - 1),
                                     spawn_key=(int(self.stream_index),))
        return np.random.default_rng(seq)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, SeedSpec):
        return seed.generator()
    if isinstance(seed, np.random.Generator):
        return seed
    return SeedSpec(int(seed)).generator()


def sample_fixed(F0: DistributionModel, n: int, seed) -> ObservationSet:
    """Draw ``S = U + V`` with ``U ~ F0`` by inversion and ``V ~ Uniform(0, 1)``."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    rng = _rng(seed)
    u = F0.quantile(rng.random(n))
    v = rng.random(n)
    return ObservationSet.fixed(u + v)


def sample_mixed(F0: DistributionModel, FE: DistributionModel, n: int, seed) -> ObservationSet:
    """Draw pairs ``(E, U + V)`` with ``V | E ~ Uniform(0, E)``.

    Random numbers are consumed in the order U, V, E, so a degenerate ``FE``
    at 1 reproduces :func:`sample_fixed` exactly for the same seed.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if FE.lower <= 0:
        raise ConfigurationError("FE must be supported away from zero")
    rng = _rng(seed)
    u = F0.quantile(rng.random(n))
    v01 = rng.random(n)
    e = FE.quantile(rng.random(n))
    return ObservationSet.mixed(e, u + e * v01)


def convolution_density_fixed(F0: DistributionModel, s):
    """Density of ``S`` in the fixed model: ``F0(s) - F0(s - 1)``."""
    s = np.asarray(s, dtype=float)
    out = F0.cdf(s) - F0.cdf(s - 1.0)
    return out if np.ndim(out) else float(out)


def convolution_density_mixed(F0: DistributionModel, e, s):
    """Conditional density of ``S`` given ``E = e``: ``(F0(s) - F0(s - e)) / e``."""
    e = np.asarray(e, dtype=float)
    if np.any(e <= 0):
        raise DomainError("exposure length e must be > 0")
    s = np.asarray(s, dtype=float)
    out = (F0.cdf(s) - F0.cdf(s - e)) / e
    return out if np.ndim(out) else float(out)
