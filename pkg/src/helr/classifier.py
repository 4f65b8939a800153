"""Lookup-table likelihood-ratio classifier and its evaluation tools.

A feature pair (one template value, one probe value) is modeled per feature
as standard-normal marginals that are correlated for genuine comparisons and
independent for impostor comparisons.  Each feature axis is cut into n
equiprobable bins; the per-cell log-likelihood ratio, quantized by a step
delta, fills an n x n integer table per feature.  Scoring a comparison is
then one cell lookup per feature plus a sum, which is what lets the
protocols run it under additive encryption.

Also here: synthetic correlated-Gaussian pair generation (stands in for real
datasets), model estimation from labeled pairs, DET/EER metrics, and the
binary table / feature-vector file formats.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ConfigError, DecodeError, InsufficientDataError, IntegrationError

# Integration window: borders at +/-inf are truncated here.
_TRUNC = 8.5
_QUAD_ABS_TOL = 1e-10
_RHO_MIN, _RHO_MAX = 1e-4, 1 - 1e-4

TABLE_MAGIC = b"HELRTAB\x00"
VECTOR_MAGIC = b"HELRVEC\x00"
FILE_VERSION = 1


class ModelProvenance(enum.Enum):
    ESTIMATED = "estimated"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class FeatureModel:
    """Per-feature genuine correlations; marginals are N(0,1) after whitening."""

    k: int
    rho: tuple[float, ...]
    provenance: ModelProvenance

    def __post_init__(self):
        if self.k != len(self.rho):
            raise ConfigError("rho length must equal feature count")
        if any(not (0.0 < r < 1.0) for r in self.rho):
            raise ConfigError("correlations must lie strictly inside (0, 1)")


def synthetic_model(rho) -> FeatureModel:
    rho = tuple(float(r) for r in np.atleast_1d(rho))
    return FeatureModel(k=len(rho), rho=rho, provenance=ModelProvenance.SYNTHETIC)


@dataclass(frozen=True)
class BinBorders:
    n: int
    borders: tuple[float, ...]  # n-1 strictly increasing quantiles


def norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def norm_icdf(p: float) -> float:
    """Standard-normal quantile by bisection on the erf-based CDF."""
    if not 0.0 < p < 1.0:
        raise ConfigError("quantile probability must be in (0, 1)")
    lo, hi = -40.0, 40.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if norm_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=None)
def bin_borders(n: int) -> BinBorders:
    """n-1 borders at standard-normal quantiles j/n (equiprobable bins)."""
    if n < 2:
        raise ConfigError("feature level must be at least 2")
    return BinBorders(n=n, borders=tuple(norm_icdf(j / n) for j in range(1, n)))


def quantize_feature(a: float, borders: BinBorders) -> int:
    """Bin index in [0, n-1]; values equal to a border go to the upper bin."""
    for j, border in enumerate(borders.borders):
        if a < border:
            return j
    return borders.n - 1


def quantize_vector(values, borders: BinBorders) -> np.ndarray:
    """Vectorized quantization (same strict-inequality rule)."""
    return np.searchsorted(np.asarray(borders.borders), np.asarray(values), side="right")


def _cell_edges(borders: BinBorders) -> np.ndarray:
    return np.concatenate(([-np.inf], borders.borders, [np.inf]))


def impostor_cell_prob(n: int) -> float:
    """Equiprobable grid: every cell carries exactly 1/n^2."""
    if n < 2:
        raise ConfigError("feature level must be at least 2")
    return 1.0 / (n * n)


def genuine_cell_prob(rho: float, borders: BinBorders, row: int, col: int) -> float:
    """Bivariate standard-normal rectangle probability with correlation rho.

    Adaptive 1-D quadrature of phi(x) * [Phi((b2-rho*x)/s) - Phi((b1-rho*x)/s)]
    over the row interval, absolute tolerance 1e-10.
    """
    n = borders.n
    if not (0 <= row < n and 0 <= col < n):
        raise ConfigError("cell indices out of range")
    edges = _cell_edges(borders)
    x1, x2 = max(edges[row], -_TRUNC), min(edges[row + 1], _TRUNC)
    y1, y2 = edges[col], edges[col + 1]
    s = math.sqrt(1.0 - rho * rho)
    inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)

    def integrand(x):
        return (inv_sqrt2pi * math.exp(-0.5 * x * x)
                * (ndtr((y2 - rho * x) / s) - ndtr((y1 - rho * x) / s)))

    val, err = integrate.quad(integrand, x1, x2, epsabs=_QUAD_ABS_TOL, limit=200)
    if err > 1e-8:
        raise IntegrationError(f"cell ({row},{col}) quadrature error {err:.2e}")
    return float(val)


@lru_cache(maxsize=8)
def _gl_nodes(order: int = 96):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _cell_prob_matrix(rho: float, borders: BinBorders) -> np.ndarray:
    """All n x n genuine cell probabilities at once (fixed-order Gauss-Legendre
    per row strip; same integrand as genuine_cell_prob)."""
    n = borders.n
    edges = _cell_edges(borders)
    s = math.sqrt(1.0 - rho * rho)
    nodes, weights = _gl_nodes()
    out = np.empty((n, n))
    inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)
    for row in range(n):
        x1, x2 = max(edges[row], -_TRUNC), min(edges[row + 1], _TRUNC)
        mid, half = 0.5 * (x2 + x1), 0.5 * (x2 - x1)
        x = mid + half * nodes
        wx = weights * half * inv_sqrt2pi * np.exp(-0.5 * x * x)
        col_cdf = ndtr((edges[None, :] - rho * x[:, None]) / s)
        out[row] = wx @ (col_cdf[:, 1:] - col_cdf[:, :-1])
    return out


@dataclass(frozen=True)
class LookupTableSet:
    """k quantized n x n score tables plus the public classifier parameters.

    ``s_max`` is the declared protocol bound for the comparison window; by
    default it is the maximum achievable table sum, but a tighter declared
    bound is valid as long as every actual comparison sum stays below it.
    """

    tables: np.ndarray  # (k, n, n) int32, read-only
    delta: float
    theta: int
    s_max: int

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=np.int32)
        t.setflags(write=False)
        object.__setattr__(self, "tables", t)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ConfigError("tables must be a (k, n, n) array")
        if self.delta <= 0:
            raise ConfigError("score step must be positive")
        if self.theta > self.s_max:
            raise ConfigError("threshold above the declared maximum score")

    @property
    def k(self) -> int:
        return self.tables.shape[0]

    @property
    def n(self) -> int:
        return self.tables.shape[1]

    @property
    def s_min(self) -> int:
        return int(self.tables.min(axis=(1, 2)).sum())

    @property
    def max_achievable(self) -> int:
        return int(self.tables.max(axis=(1, 2)).sum())

    @property
    def window_len(self) -> int:
        return self.s_max - self.theta + 1

    def with_theta(self, theta: int, s_max: int | None = None) -> "LookupTableSet":
        return LookupTableSet(tables=self.tables, delta=self.delta, theta=theta,
                              s_max=self.s_max if s_max is None else s_max)


def impostor_score_pmf(tables: np.ndarray):
    """Exact final-score distribution under the impostor hypothesis: each
    cell of each table is equally likely, scores add across features.

    Returns (offset, pmf) with pmf[i] = P(S = offset + i).
    """
    pmf = np.array([1.0])
    offset = 0
    for t in np.asarray(tables):
        vals = t.ravel().astype(np.int64)
        lo, hi = int(vals.min()), int(vals.max())
        cell = np.bincount(vals - lo, minlength=hi - lo + 1).astype(float)
        cell /= cell.sum()
        pmf = np.convolve(pmf, cell)
        offset += lo
    return offset, pmf


def theta_at_fmr(tables: np.ndarray, target_fmr: float, s_max: int) -> int:
    """Smallest threshold whose exact impostor tail P(S >= theta) <= target."""
    offset, pmf = impostor_score_pmf(tables)
    tail = np.cumsum(pmf[::-1])[::-1]
    idx = np.nonzero(tail <= target_fmr)[0]
    theta = offset + (int(idx[0]) if idx.size else len(pmf))
    return min(theta, s_max)


def build_tables(model: FeatureModel, n: int, delta: float,
                 theta: int | None = None, target_fmr: float = 1e-3) -> LookupTableSet:
    """Quantized LLR tables: cell (r, c) of table i is
    round(log(genuine_cell_prob / impostor_cell_prob) / delta).

    S_max is the maximum achievable sum; theta defaults to the exact-FMR
    calibration against the impostor score distribution.
    """
    if delta <= 0:
        raise ConfigError("score step must be positive")
    borders = bin_borders(n)
    imp = impostor_cell_prob(n)
    tables = np.empty((model.k, n, n), dtype=np.int32)
    for i, rho in enumerate(model.rho):
        probs = np.maximum(_cell_prob_matrix(rho, borders), 1e-300)
        tables[i] = np.rint(np.log(probs / imp) / delta).astype(np.int32)
    s_max = int(tables.max(axis=(1, 2)).sum())
    if theta is None:
        theta = theta_at_fmr(tables, target_fmr, s_max)
    return LookupTableSet(tables=tables, delta=float(delta), theta=int(theta), s_max=s_max)


def score(tables: LookupTableSet, a_hat, b_hat) -> int:
    """Sum of selected cells; the verification decision is score >= theta."""
    a_hat = np.asarray(a_hat)
    b_hat = np.asarray(b_hat)
    if a_hat.shape != (tables.k,) or b_hat.shape != (tables.k,):
        raise ConfigError(f"quantized vectors must have length {tables.k}")
    if ((a_hat < 0) | (a_hat >= tables.n) | (b_hat < 0) | (b_hat >= tables.n)).any():
        raise ConfigError("quantized values out of range")
    return int(tables.tables[np.arange(tables.k), a_hat, b_hat].sum())


def score_pairs(tables: LookupTableSet, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized scores for raw feature pairs, quantizing both sides."""
    borders = bin_borders(tables.n)
    a_hat = quantize_vector(a, borders)
    b_hat = quantize_vector(b, borders)
    feat = np.arange(tables.k)
    return tables.tables[feat[None, :], a_hat, b_hat].sum(axis=1)


def exact_llr_pairs(model: FeatureModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real-valued log-likelihood-ratio scores (correlated vs independent
    bivariate normal), the un-quantized baseline the tables approximate."""
    rho = np.asarray(model.rho)
    s2 = 1.0 - rho**2
    ll = (-0.5 * np.log(s2)
          - (a**2 - 2 * rho * a * b + b**2) / (2 * s2)
          + 0.5 * (a**2 + b**2))
    return ll.sum(axis=1)


def estimate_model(a: np.ndarray, b: np.ndarray, genuine: np.ndarray) -> FeatureModel:
    """Per-feature Pearson correlation over the genuine pairs, after
    standardizing every feature to zero mean / unit variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    genuine = np.asarray(genuine, dtype=bool)
    if a.shape != b.shape or a.ndim != 2 or genuine.shape != (a.shape[0],):
        raise ConfigError("need matching (m, k) pair arrays and m labels")
    if int(genuine.sum()) < 2:
        raise InsufficientDataError("need at least 2 genuine pairs")
    stacked = np.vstack([a, b])
    mu = stacked.mean(axis=0)
    sd = stacked.std(axis=0)
    sd[sd == 0] = 1.0
    ga = (a[genuine] - mu) / sd
    gb = (b[genuine] - mu) / sd
    ga_c = ga - ga.mean(axis=0)
    gb_c = gb - gb.mean(axis=0)
    denom = np.sqrt((ga_c**2).sum(axis=0) * (gb_c**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, (ga_c * gb_c).sum(axis=0) / np.where(denom > 0, denom, 1.0), 0.0)
    corr = np.clip(np.nan_to_num(corr, nan=0.0), _RHO_MIN, _RHO_MAX)
    return FeatureModel(k=a.shape[1], rho=tuple(float(c) for c in corr),
                        provenance=ModelProvenance.ESTIMATED)


def synth_pairs(model: FeatureModel, count: int, genuine: bool, rng: np.random.Generator):
    """Sample feature-vector pairs from the model.

    Genuine pairs share a latent component of variance rho_i per feature, so
    each marginal stays N(0,1) with pairwise correlation rho_i; impostor
    pairs are fully independent.
    """
    k = model.k
    if not genuine:
        return rng.standard_normal((count, k)), rng.standard_normal((count, k))
    rho = np.asarray(model.rho)
    w = rng.standard_normal((count, k)) * np.sqrt(rho)
    noise = np.sqrt(1.0 - rho)
    a = w + rng.standard_normal((count, k)) * noise
    b = w + rng.standard_normal((count, k)) * noise
    return a, b


def synth_user_probes(model: FeatureModel, count: int, rng: np.random.Generator):
    """One enrollment feature vector plus ``count`` genuine probes for the
    same identity (all sharing the identity's latent component)."""
    rho = np.asarray(model.rho)
    w = rng.standard_normal(model.k) * np.sqrt(rho)
    noise = np.sqrt(1.0 - rho)
    features = w + rng.standard_normal(model.k) * noise
    probes = w + rng.standard_normal((count, model.k)) * noise
    return features, probes


# -- decision error trade-off metrics -----------------------------------------

@dataclass(frozen=True)
class DetMetrics:
    eer: float
    eer_threshold: float
    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray

    def fnmr_at_fmr(self, target: float) -> float:
        """FNMR at the first threshold whose FMR drops to the target."""
        idx = np.nonzero(self.fmr <= target)[0]
        if idx.size == 0:
            return float(self.fnmr[-1])
        return float(self.fnmr[idx[0]])

    def points(self):
        return list(zip(self.thresholds.tolist(), self.fmr.tolist(), self.fnmr.tolist()))


def det_metrics(genuine_scores, impostor_scores) -> DetMetrics:
    """Threshold sweep over the observed score range; EER by interpolating
    the FNMR/FMR crossing."""
    gen = np.sort(np.asarray(genuine_scores, dtype=float))
    imp = np.sort(np.asarray(impostor_scores, dtype=float))
    if gen.size == 0 or imp.size == 0:
        raise ConfigError("score lists must be nonempty")
    ts = np.unique(np.concatenate([gen, imp]))
    ts = np.concatenate([ts, [ts[-1] + 1.0]])  # final point: FMR = 0, FNMR = 1
    fmr = 1.0 - np.searchsorted(imp, ts, side="left") / imp.size   # P(imp >= t)
    fnmr = np.searchsorted(gen, ts, side="left") / gen.size        # P(gen <  t)

    diff = fnmr - fmr  # nondecreasing in t
    i = int(np.argmax(diff >= 0))
    if diff[i] == 0:
        eer, thr = float(fnmr[i]), float(ts[i])
    elif i == 0:
        eer, thr = float(0.5 * (fnmr[0] + fmr[0])), float(ts[0])
    else:
        w = -diff[i - 1] / (diff[i] - diff[i - 1])
        e1 = fmr[i - 1] + w * (fmr[i] - fmr[i - 1])
        e2 = fnmr[i - 1] + w * (fnmr[i] - fnmr[i - 1])
        eer = float(0.5 * (e1 + e2))
        thr = float(ts[i - 1] + w * (ts[i] - ts[i - 1]))
    return DetMetrics(eer=eer, eer_threshold=thr, thresholds=ts, fmr=fmr, fnmr=fnmr)


# -- file formats (little-endian) ----------------------------------------------

_TABLE_HEADER = struct.Struct("<8sHIIQqq")
_VECTOR_HEADER = struct.Struct("<8sHII")


def tables_to_bytes(ts: LookupTableSet) -> bytes:
    header = _TABLE_HEADER.pack(
        TABLE_MAGIC, FILE_VERSION, ts.k, ts.n,
        round(ts.delta * (1 << 32)), ts.theta, ts.s_max,
    )
    return header + ts.tables.astype("<i4").tobytes()


def tables_from_bytes(data: bytes) -> LookupTableSet:
    if len(data) < _TABLE_HEADER.size:
        raise DecodeError("truncated table file")
    magic, version, k, n, delta_fp, theta, s_max = _TABLE_HEADER.unpack_from(data)
    if magic != TABLE_MAGIC:
        raise DecodeError("bad table file magic")
    if version != FILE_VERSION:
        raise DecodeError(f"unsupported table file version {version}")
    want = _TABLE_HEADER.size + k * n * n * 4
    if len(data) != want:
        raise DecodeError(f"table file must be {want} bytes, got {len(data)}")
    cells = np.frombuffer(data, dtype="<i4", offset=_TABLE_HEADER.size).reshape(k, n, n)
    return LookupTableSet(tables=cells, delta=delta_fp / (1 << 32), theta=theta, s_max=s_max)


def save_tables(ts: LookupTableSet, path):
    with open(path, "wb") as fh:
        fh.write(tables_to_bytes(ts))


def load_tables(path) -> LookupTableSet:
    with open(path, "rb") as fh:
        return tables_from_bytes(fh.read())


def vectors_to_bytes(rows: np.ndarray) -> bytes:
    rows = np.asarray(rows, dtype="<f8")
    if rows.ndim != 2:
        raise ConfigError("feature vectors must form an (m, k) array")
    header = _VECTOR_HEADER.pack(VECTOR_MAGIC, FILE_VERSION, rows.shape[1], rows.shape[0])
    return header + rows.tobytes()


def vectors_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _VECTOR_HEADER.size:
        raise DecodeError("truncated vector file")
    magic, version, k, count = _VECTOR_HEADER.unpack_from(data)
    if magic != VECTOR_MAGIC:
        raise DecodeError("bad vector file magic")
    if version != FILE_VERSION:
        raise DecodeError(f"unsupported vector file version {version}")
    want = _VECTOR_HEADER.size + count * k * 8
    if len(data) != want:
        raise DecodeError(f"vector file must be {want} bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_VECTOR_HEADER.size).reshape(count, k).copy()


def save_vectors(rows: np.ndarray, path):
    with open(path, "wb") as fh:
        fh.write(vectors_to_bytes(rows))


def load_vectors(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return vectors_from_bytes(fh.read())
