"""Normality and correlation tests over design-of-experiment tables.

A DOE table sweeps one design factor and records the resulting spring
stiffness and maximum von Mises stress.  For each response the analysis
first checks normality (Shapiro-Wilk); a normal response is correlated with
the factor by Pearson's r, otherwise by Spearman's rank correlation.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateSampleError, InvalidArgumentError, ParseError

ALPHA = 0.05
DOE_HEADER = "factor_name,factor_value,stiffness_nm_per_deg,max_vms_mpa"
RESPONSES = ("stiffness_nm_per_deg", "max_vms_mpa")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    reject: bool  # p < alpha
    test: str = ""

    __test__ = False  # not a pytest class


def _result(stat: float, p: float, name: str, alpha: float = ALPHA) -> TestResult:
    p = min(max(float(p), 0.0), 1.0)
    return TestResult(float(stat), p, p < alpha, name)


# --- Shapiro-Wilk (Royston's AS R94 approximation) -------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(c, x: float) -> float:
    return sum(ci * x**i for i, ci in enumerate(c))


def shapiro_wilk_coefficients(n: int) -> np.ndarray:
    """Weights a_1..a_n (antisymmetric, unit norm) for sample size ``n``."""
    if n < 3:
        raise InvalidArgumentError("n must be >= 3")
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    i = np.arange(1, n + 1)
    m = stats.norm.ppf((i - 0.375) / (n + 0.25))
    mm = float(m @ m)
    c = m / math.sqrt(mm)
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    an = c[-1] + _poly(_C1, u)
    if n > 5:
        an1 = c[-2] + _poly(_C2, u)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a[2:-2] = m[2:-2] / math.sqrt(phi)
        a[-2], a[1] = an1, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a[1:-1] = m[1:-1] / math.sqrt(phi)
    a[-1], a[0] = an, -an
    return a


def shapiro_wilk(sample, alpha: float = ALPHA) -> TestResult:
    """W statistic and p-value; ``reject`` means normality is rejected at ``alpha``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if not 3 <= n <= 5000:
        raise InvalidArgumentError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("sample contains non-finite values")
    ss = float(np.sum((x - x.mean()) ** 2))
    if ss == 0.0 or x[0] == x[-1]:
        raise DegenerateSampleError("all sample values are identical")
    a = shapiro_wilk_coefficients(n)
    w = min(float(a @ x) ** 2 / ss, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return _result(w, max(p, 0.0), "shapiro-wilk", alpha)
    w1 = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return _result(w, 0.0, "shapiro-wilk", alpha)
        y = -math.log(gamma - w1)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        y = w1
        mu = _poly(_C5, ln)
        sigma = math.exp(_poly(_C6, ln))
    p = float(stats.norm.sf((y - mu) / sigma)) if math.isfinite(y) else 1.0
    return _result(w, p, "shapiro-wilk", alpha)


# --- correlation ------------------------------------------------------------


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InvalidArgumentError("x and y must have equal length")
    if x.size < 3:
        raise InvalidArgumentError("need at least 3 pairs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("inputs contain non-finite values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateSampleError("constant input")
    return x, y


def _corr_test(x: np.ndarray, y: np.ndarray, name: str, alpha: float) -> TestResult:
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(dx @ dy / math.sqrt(float(dx @ dx) * float(dy @ dy)))
    r = min(max(r, -1.0), 1.0)
    df = x.size - 2
    if abs(r) == 1.0:
        p = 0.0
    elif df == 0:
        p = 1.0
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
        p = 2.0 * float(stats.t.sf(abs(t), df))
    return _result(r, p, name, alpha)


def pearson(x, y, alpha: float = ALPHA) -> TestResult:
    """Sample correlation r; two-sided p from Student's t with n-2 dof."""
    x, y = _pair(x, y)
    return _corr_test(x, y, "pearson", alpha)


def spearman(x, y, alpha: float = ALPHA) -> TestResult:
    """Pearson correlation of average ranks; p from the same t approximation."""
    x, y = _pair(x, y)
    return _corr_test(stats.rankdata(x), stats.rankdata(y), "spearman", alpha)


# --- DOE tables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DoeTable:
    factor_name: str
    rows: np.ndarray  # (n, 3): factor value, stiffness Nm/deg, max VMS MPa
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 3:
            raise InvalidArgumentError("rows must be (n, 3)")
        if rows.shape[0] < 3:
            raise InvalidArgumentError(f"table {self.factor_name!r} needs at least 3 rows")
        if np.unique(rows[:, 0]).size != rows.shape[0]:
            raise InvalidArgumentError(f"table {self.factor_name!r} repeats a factor value")
        if not np.all(np.isfinite(rows)):
            raise InvalidArgumentError("table contains non-finite values")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def factor(self) -> np.ndarray:
        return self.rows[:, 0]

    def response(self, name: str) -> np.ndarray:
        return self.rows[:, 1 + RESPONSES.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(DOE_HEADER + "\n")
        for f, k, s in self.rows:
            buf.write(f"{self.factor_name},{float(f)!r},{float(k)!r},{float(s)!r}\n")
        return buf.getvalue()


def parse_doe_csv(text: str) -> DoeTable:
    lines = text.splitlines()
    if not lines or lines[0].strip() != DOE_HEADER:
        raise ParseError(1, f"expected header {DOE_HEADER!r}")
    name = None
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ParseError(k, f"expected 4 fields, found {len(parts)}")
        if name is None:
            name = parts[0]
        elif parts[0] != name:
            raise ParseError(k, f"factor {parts[0]!r} differs from {name!r}; one table per file")
        try:
            vals = [float(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(k, "non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(k, "non-finite value")
        rows.append(vals)
    if name is None:
        raise ParseError(len(lines), "table has no rows")
    try:
        return DoeTable(name, np.array(rows))
    except InvalidArgumentError as exc:
        raise ParseError(len(lines), str(exc)) from None


def load_doe_table(path) -> DoeTable:
    with open(path) as fh:
        return parse_doe_csv(fh.read())


def demo_table(
    factor_name: str = "arm_thickness_mm",
    values=(2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5),
    per_layer_stiffness: float = 7.5,
    noise: float = 0.05,
    seed: int = 0,
) -> DoeTable:
    """Synthetic sweep: stiffness linear in the factor, stress falling off sharply.

    Only for exercising the analysis; it does not stand in for FEA results.
    """
    rng = np.random.default_rng(seed)
    f = np.asarray(values, dtype=float)
    u = (f - f.min()) / max(np.ptp(f), 1e-12)
    stiffness = per_layer_stiffness * (0.6 + 0.8 * u) + rng.normal(0.0, noise, f.size)
    vms = 180.0 + 900.0 * np.exp(-6.0 * u) + rng.normal(0.0, 1.0, f.size)
    return DoeTable(factor_name, np.column_stack([f, stiffness, vms]))


@dataclass(frozen=True)
class CorrelationEntry:
    factor_name: str
    response: str
    normality: TestResult
    branch: str  # "pearson" or "spearman"
    correlation: TestResult

    @property
    def finding(self) -> str:
        if not self.correlation.reject:
            return "no significant correlation"
        sign = "positive" if self.correlation.statistic > 0 else "negative"
        if self.branch == "pearson":
            return f"{sign} linear relationship"
        return f"{sign} monotonic correlation"


@dataclass
class CorrelationReport:
    entries: list[CorrelationEntry] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["factor_name,response,sw_w,sw_p,normal,branch,statistic,p_value,finding"]
        for e in self.entries:
            lines.append(
                f"{e.factor_name},{e.response},{e.normality.statistic:.6f},{e.normality.p_value:.6g},"
                f"{int(not e.normality.reject)},{e.branch},{e.correlation.statistic:.6f},"
                f"{e.correlation.p_value:.6g},{e.finding}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        if not self.entries:
            return "no tables\n"
        out = []
        for e in self.entries:
            out.append(
                f"{e.factor_name} vs {e.response}: W={e.normality.statistic:.4f} "
                f"(p={e.normality.p_value:.3g}) -> {e.branch} "
                f"{e.correlation.statistic:+.4f} (p={e.correlation.p_value:.3g}): {e.finding}"
            )
        return "\n".join(out) + "\n"


def correlation_report(tables, alpha: float = ALPHA) -> CorrelationReport:
    """Normality gate on each response, then Pearson (normal) or Spearman (not)."""
    report = CorrelationReport()
    for table in tables:
        for name in RESPONSES:
            y = table.response(name)
            sw = shapiro_wilk(y, alpha)
            if sw.reject:
                branch, corr = "spearman", spearman(table.factor, y, alpha)
            else:
                branch, corr = "pearson", pearson(table.factor, y, alpha)
            report.entries.append(CorrelationEntry(table.factor_name, name, sw, branch, corr))
    return report
