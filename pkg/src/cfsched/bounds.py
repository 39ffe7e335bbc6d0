"""Closed-form achievability and converse bounds on the feedback rate, in bits.

Everything is evaluated in log space (``math.lgamma`` for factorials and
falling factorials) so ``n`` up to 1e9 and ``k`` up to 1e6 stay finite.

Naming: ``R_f`` is the fixed-length rate log2(T) and ``R_v`` the
variable-length rate H(f(A)). ``fixed_*`` bound R_f, ``var_*`` bound R_v.
Functions whose formula is undefined for the given regime raise
:class:`DomainError`; :func:`bound_report` turns those into empty cells.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, NamedTuple

from cfsched.errors import DomainError, InvalidParams
from cfsched.mathx import LN2, LOG2E, ln_binom, ln_factorial, ln_falling_ratio, log2_power_over_falling

TWO_PI = 2.0 * math.pi


def _need(cond: bool, msg: str):
    if not cond:
        raise DomainError(msg)


def _slack_term(b: int, k: int) -> float:
    """(b - k) log2(1 - k/b), defined as 0 at b = k."""
    _need(b >= k, f"b={b} < k={k}")
    if b == k:
        return 0.0
    return (b - k) * math.log1p(-k / b) / LN2


def log2_inv_cover_probability(b: int, k: int, m: int = 1) -> float:
    """log2(1/p) for p = Pr(a uniform random b-partition covers a fixed k-set)."""
    _need(k <= m * b, f"k={k} > m*b={m * b}: no partition covers anything")
    if m == 1:
        return log2_power_over_falling(b, k)
    if k == m * b:
        return (k * math.log(b) + b * ln_factorial(m) - ln_factorial(k)) / LN2
    from cfsched.codes import cover_count_assignments

    return k * math.log2(b) - math.log2(cover_count_assignments(b, k, m))


def _log2_ln_binom(n: int, k: int) -> float:
    lnc = ln_binom(n, k)
    return math.log2(lnc) if lnc > 0 else -math.inf


# ---------------------------------------------------------------------------
# b = k


def fixed_achieve(n: int, k: int) -> float:
    """k log2 e + log2(ln(n/k) + 1) + 1/2 log2(k / 2pi)."""
    _need(2 <= k <= n, f"need 2 <= k <= n, got k={k}, n={n}")
    return k * LOG2E + math.log2(math.log(n / k) + 1.0) + 0.5 * math.log2(k / TWO_PI)


def fixed_achieve_exact(n: int, k: int, b: int | None = None, m: int = 1) -> float:
    """log2(ln C(n,k) / p): the random-coding family size before Stirling simplification."""
    b = k if b is None else b
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return _log2_ln_binom(n, k) + log2_inv_cover_probability(b, k, m)


def var_achieve(k: int) -> float:
    """(k + 1) log2 e, independent of n."""
    _need(k >= 1, f"k={k} < 1")
    return (k + 1) * LOG2E


def geometric_entropy(log2_inv_p: float) -> float:
    """Entropy in bits of a geometric law with success probability p = 2^-log2_inv_p."""
    if log2_inv_p == 0.0:
        return 0.0
    if log2_inv_p > 60:
        # (1/p - 1) log2(1 - p) -> -log2 e; the error is O(p)
        return log2_inv_p + LOG2E
    p = 2.0**-log2_inv_p
    return log2_inv_p - (1.0 / p - 1.0) * math.log1p(-p) / LN2


def var_achieve_exact(k: int, b: int | None = None, m: int = 1) -> float:
    """Entropy of the geometric output law of the greedy encoder over random families."""
    b = k if b is None else b
    return geometric_entropy(log2_inv_cover_probability(b, k, m))


def fixed_converse_volume(n: int, k: int) -> float:
    """k log2 e - log2(n^k / n^(k falling)) - 1/2 log2(2 pi k) - log2(e)/(12k)."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return (
        k * LOG2E
        - log2_power_over_falling(n, k)
        - 0.5 * math.log2(TWO_PI * k)
        - LOG2E / (12 * k)
    )


def max_coverage_b_eq_k(n: int, k: int) -> int:
    """Largest |C(X)| over k-partitions: product of balanced slot sizes."""
    q, r = divmod(n, k)
    return (q + 1) ** r * q ** (k - r)


def fixed_converse_volume_exact(n: int, k: int) -> float:
    """log2(C(n,k) / max |C(X)|) with the exact balanced maximum."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return ln_binom(n, k) / LN2 - math.log2(max_coverage_b_eq_k(n, k))


def var_converse_volume(n: int, k: int) -> float:
    """Uniform-activity converse on R_v, Stirling-simplified form."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    corr = log2_power_over_falling(n, k)
    v = 2.0 ** (corr + (ln_factorial(k) - k * math.log(k)) / LN2)
    return (1.0 - v) * (
        k * LOG2E - 0.5 * math.log2(TWO_PI * k) - LOG2E / (12 * k)
    ) - corr


def var_converse_volume_exact(n: int, k: int) -> float:
    """(1 - v) log2(k^k/k!) - log2(n^k/n^(k falling)), v the single-partition volume bound."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    corr = log2_power_over_falling(n, k)
    inv_p = (k * math.log(k) - ln_factorial(k)) / LN2
    v = 2.0 ** (corr - inv_p)
    return (1.0 - v) * inv_p - corr


def var_converse_limit(k: int) -> float:
    """n -> infinity value of :func:`var_converse_volume_exact`: (1 - k!/k^k) log2(k^k/k!)."""
    inv_p = (k * math.log(k) - ln_factorial(k)) / LN2
    return (1.0 - 2.0**-inv_p) * inv_p


def fixed_converse_loglog(n: int, k: int) -> float:
    """log2 log2(n/(k-1)) + log2 k - 1 (exclusion argument)."""
    _need(k >= 2, f"k={k} < 2")
    _need(n > k - 1, f"n={n} <= k-1")
    return math.log2(math.log2(n / (k - 1))) + math.log2(k) - 1.0


def snir_T(n: int, k: int) -> float:
    """Lower bound on the family size: (log n - log(k-1)) / (log k - log(k-1))."""
    _need(k >= 2, f"k={k} < 2")
    _need(n > k - 1, f"n={n} <= k-1")
    return (math.log(n) - math.log(k - 1)) / (math.log(k) - math.log(k - 1))


# ---------------------------------------------------------------------------
# b > k


def tradeoff_fixed_achieve(n: int, b: int, k: int) -> float:
    """k log2 e + log2(ln(n/k) + 1) + (b-k) log2(1 - k/b) + log2 k + 1."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return k * LOG2E + math.log2(math.log(n / k) + 1.0) + _slack_term(b, k) + math.log2(k) + 1.0


def tradeoff_var_achieve(n: int, b: int, k: int) -> float:
    """(k + 1) log2 e + (b-k) log2(1 - k/b) + 1."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return (k + 1) * LOG2E + _slack_term(b, k) + 1.0


def _slack_half(b: int, k: int) -> float:
    _need(b > k, f"formula needs b > k (b={b}, k={k})")
    return (b - k + 0.5) * math.log1p(-k / b) / LN2


def tradeoff_fixed_converse(n: int, b: int, k: int) -> float:
    """k log2 e - log2(n^k/n^(k falling)) + (b - k + 1/2) log2(1 - k/b)."""
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return k * LOG2E - log2_power_over_falling(n, k) + _slack_half(b, k)


def tradeoff_var_converse(n: int, b: int, k: int) -> float:
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    corr = log2_power_over_falling(n, k)
    v = 2.0 ** (corr - log2_inv_cover_probability(b, k))
    return (1.0 - v) * (k * LOG2E + _slack_half(b, k)) - corr


# ---------------------------------------------------------------------------
# b < k, at most m users per slot


def multislot_coefficient(m: int) -> float:
    """Per-(k/m) coefficient 1/2 log2(2 pi m) + log2(e)/(12 m) of the achievability bounds."""
    return 0.5 * math.log2(TWO_PI * m) + LOG2E / (12 * m)


def _multislot_b(k: int, m: int, b: int | None) -> int:
    if b is None:
        b = -(-k // m)
    _need(k <= m * b, f"k={k} > m*b={m * b}")
    return b


def multislot_fixed_achieve(n: int, k: int, m: int) -> float:
    _need(1 <= k <= n and m >= 1, f"bad instance n={n}, k={k}, m={m}")
    return (k / m) * multislot_coefficient(m) + math.log2(math.log(n / k) + 1.0)


def multislot_var_achieve(k: int, m: int) -> float:
    _need(k >= 1 and m >= 1, f"bad instance k={k}, m={m}")
    return ((k + 1) / m) * multislot_coefficient(m)


def log2_gamma(n: int, k: int, m: int, b: int | None = None) -> float:
    """log2 of prod_{l=0}^{m-1} (n'-lb)^b / (n'-lb)^(b falling), n' = floor(n/k) k."""
    b = _multislot_b(k, m, b)
    n1 = (n // k) * k
    _need(n1 - (m - 1) * b >= b, f"n'={n1} too small for m={m}, b={b}")
    return sum(log2_power_over_falling(n1 - l * b, b) for l in range(m))


def _multislot_converse_core(k: int, m: int) -> float:
    return (k / m) * (0.5 * math.log2(TWO_PI * m) + LOG2E / (12 * m + 1))


def multislot_fixed_converse(n: int, k: int, m: int, b: int | None = None) -> float:
    b = _multislot_b(k, m, b)
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    return (
        _multislot_converse_core(k, m)
        - 0.5 * math.log2(TWO_PI * k)
        - LOG2E / (12 * k)
        - log2_gamma(n, k, m, b)
    )


def multislot_var_converse(n: int, k: int, m: int, b: int | None = None) -> float:
    b = _multislot_b(k, m, b)
    _need(1 <= k <= n, f"need 1 <= k <= n, got k={k}, n={n}")
    lg = log2_gamma(n, k, m, b)
    log2_p = (ln_factorial(k) - k * math.log(b) - b * ln_factorial(m)) / LN2
    factor = 1.0 - 2.0 ** (lg + log2_p)
    return (
        factor * _multislot_converse_core(k, m)
        - 0.5 * math.log2(TWO_PI * k)
        - LOG2E / (12 * k)
        - lg
    )


def multislot_loglog(n: int, k: int, m: int, b: int | None = None) -> float:
    """log2 log2(n/(k-1)) + log2 b - 1."""
    b = _multislot_b(k, m, b)
    _need(k >= 2 and n > k - 1, f"need k >= 2 and n > k-1 (n={n}, k={k})")
    return math.log2(math.log2(n / (k - 1))) + math.log2(b) - 1.0


# ---------------------------------------------------------------------------
# perfect hashing (Fredman-Komlos / Korner-Marton)


def ln_g(b: int, s: int) -> float:
    """ln prod_{j<s} (1 - j/b)."""
    if s > b:
        return -math.inf
    return ln_falling_ratio(b, s)


class FKBounds(NamedTuple):
    lower: float
    upper: float
    argmin_s: int


def fk_bounds(n: int, b: int, k: int) -> FKBounds:
    """log2 of the leading-order lower and upper family sizes of an (n, b, k) perfect hash family.

    Both are asymptotic in n; at small n the lower value can exceed the upper.
    """
    _need(b >= k >= 2, f"need b >= k >= 2 (b={b}, k={k})")
    _need(n >= b and n >= 3, f"need n >= max(b, 3) (n={n}, b={b})")
    ln_ln_n = math.log(math.log(n))
    best, best_s = math.inf, 0
    lg = 0.0  # ln_g(b, s), accumulated as s grows
    for s in range(1, k):
        if s > 1:
            lg += math.log1p(-(s - 1) / b)
        ratio = (b - s + 1) / (k - s)
        if ratio <= 1.0:
            continue
        val = lg + math.log(math.log(ratio))
        if val < best:
            best, best_s = val, s
    _need(best_s > 0, "every s in [1, k-1] has a degenerate log ratio")
    lower = (ln_ln_n - best) / LN2
    lg += math.log1p(-(k - 1) / b)
    if lg < -40.0:
        ln_denom = lg  # -ln(1-g) = g (1 + O(g))
    else:
        ln_denom = math.log(-math.log1p(-math.exp(lg)))
    upper = (math.log(k - 1) + ln_ln_n - ln_denom) / LN2
    return FKBounds(lower, upper, best_s)


# ---------------------------------------------------------------------------
# comparisons and tables


def aloha_overhead(payload_bits: float, k: int, eta: float) -> float:
    """Contention overhead B k (1/eta - 1) of slotted-ALOHA-style access."""
    if not 0 < eta <= 1:
        raise InvalidParams(f"eta={eta} outside (0, 1]")
    return payload_bits * k * (1.0 / eta - 1.0)


def random_coding_bits_per_key(beta: float) -> float:
    """log2 e + (beta-1) log2((beta-1)/beta): the per-user random-coding rate at b = beta k."""
    if beta < 1:
        raise DomainError(f"beta={beta} < 1")
    if beta == 1:
        return LOG2E
    return LOG2E + (beta - 1.0) * math.log2((beta - 1.0) / beta)


TABLE1_REFERENCE = (
    # (load factor beta, method, published bits per key)
    (1.0, "SAT", 1.83),
    (1.0, "CHD", 2.07),
    (1.23, "CHD", 1.40),
    (2.0, "CHD", 0.69),
)
TABLE1_BETAS = (1.0, 1.23, 2.0)


class Table1Row(NamedTuple):
    beta: float
    method: str
    bits_per_key: float
    source: str


def table1_factors() -> list[Table1Row]:
    rows = []
    for beta in TABLE1_BETAS:
        rows.append(Table1Row(beta, "random coding", random_coding_bits_per_key(beta), "computed"))
        for ref_beta, method, value in TABLE1_REFERENCE:
            if ref_beta == beta:
                rows.append(Table1Row(beta, method, value, "published"))
    return rows


@dataclass(frozen=True)
class BoundReport:
    """Bound values in bits for one instance; ``None`` marks not applicable."""

    n: int
    k: int
    b: int
    m: int
    fixed_achieve: float | None = None
    fixed_achieve_exact: float | None = None
    fixed_converse_volume: float | None = None
    fixed_converse_loglog: float | None = None
    var_achieve: float | None = None
    var_converse: float | None = None
    fk_lower: float | None = None
    fk_upper: float | None = None
    naive_bits: int | None = None
    snir_T: float | None = None
    regime: str = ""

    def values(self) -> dict:
        skip = {"n", "k", "b", "m", "regime"}
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}

    def converses(self) -> list[float]:
        return [v for v in (self.fixed_converse_volume, self.fixed_converse_loglog, self.fk_lower) if v is not None]


def _try(fn, *args):
    try:
        return fn(*args)
    except DomainError:
        return None


def bound_report(n: int, k: int, b: int | None = None, m: int | None = None, multislot: bool = False) -> BoundReport:
    """Every applicable bound for the instance.

    m = 1 (b >= k): the b > k trade-off forms are used for achievability at
    every b, with the (b-k) log2(1-k/b) term read as 0 at b = k; the converses
    fall back to the b = k theorems at b = k, where the b > k forms diverge.
    m > 1 or b < k, or ``multislot=True``: the m-users-per-slot forms.
    """
    if not 1 <= k <= n:
        raise InvalidParams(f"need 1 <= k <= n (k={k}, n={n})")
    b = k if b is None else b
    if b < 1:
        raise InvalidParams(f"b<1 (b={b})")
    if m is None:
        m = -(-k // b) if b < k else 1
    if k > m * b:
        raise InvalidParams(f"k={k} > m*b={m * b}")
    naive = k * (n - 1).bit_length()
    if m > 1 or multislot:
        fk = _try(fk_bounds, n, b, k) if m == 1 else None
        return BoundReport(
            n, k, b, m,
            fixed_achieve=_try(multislot_fixed_achieve, n, k, m),
            fixed_achieve_exact=_try(fixed_achieve_exact, n, k, b, m),
            fixed_converse_volume=_try(multislot_fixed_converse, n, k, m, b),
            fixed_converse_loglog=_try(multislot_loglog, n, k, m, b),
            var_achieve=_try(multislot_var_achieve, k, m),
            var_converse=_try(multislot_var_converse, n, k, m, b),
            fk_lower=fk.lower if fk else None,
            fk_upper=fk.upper if fk else None,
            naive_bits=naive,
            snir_T=None,
            regime="multislot",
        )
    fk = _try(fk_bounds, n, b, k)
    at_k = b == k
    return BoundReport(
        n, k, b, m,
        fixed_achieve=_try(tradeoff_fixed_achieve, n, b, k),
        fixed_achieve_exact=_try(fixed_achieve_exact, n, k, b, 1),
        fixed_converse_volume=_try(fixed_converse_volume, n, k) if at_k else _try(tradeoff_fixed_converse, n, b, k),
        fixed_converse_loglog=_try(fixed_converse_loglog, n, k) if at_k else None,
        var_achieve=_try(tradeoff_var_achieve, n, b, k),
        var_converse=_try(var_converse_volume, n, k) if at_k else _try(tradeoff_var_converse, n, b, k),
        fk_lower=fk.lower if fk else None,
        fk_upper=fk.upper if fk else None,
        naive_bits=naive,
        snir_T=_try(snir_T, n, k) if at_k else None,
        regime="b=k" if at_k else "b>k",
    )


CSV_COLUMNS = (
    "b", "m", "fixed_achieve", "fixed_achieve_exact", "fixed_converse_volume",
    "fixed_converse_loglog", "var_achieve", "var_converse", "fk_lower", "fk_upper", "naive_bits",
)


def report_row(rep: BoundReport) -> dict:
    vals = rep.values()
    row = {"b": rep.b, "m": rep.m}
    for col in CSV_COLUMNS[2:]:
        row[col] = vals[col]
    return row


def tradeoff_table(n: int, k: int, b_min: int | None = None, b_max: int | None = None, step: int = 1) -> list[dict]:
    """One row per b in [b_min, b_max] (inclusive) at the given step."""
    b_min = k if b_min is None else b_min
    b_max = 10 * k if b_max is None else b_max
    if step < 1 or b_min < k or b_max < b_min:
        raise InvalidParams(f"need k <= b_min <= b_max and step >= 1 (got {b_min}, {b_max}, {step})")
    return [report_row(bound_report(n, k, b, 1)) for b in range(b_min, b_max + 1, step)]


def multislot_table(n: int, k: int, m_set: Iterable[int]) -> list[dict]:
    """One row per m, at b = ceil(k/m) slots, using the m-per-slot bounds throughout."""
    rows = []
    for m in m_set:
        b = -(-k // m)
        rows.append(report_row(bound_report(n, k, b, m, multislot=True)))
    return rows


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_csv(rows: list[dict], fh=None) -> str:
    out = fh if fh is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([format_cell(row[c]) for c in CSV_COLUMNS])
    return out.getvalue() if fh is None else ""


def read_csv(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for c in CSV_COLUMNS:
            cell = rec[c]
            if cell == "":
                row[c] = None
            elif c in ("b", "m", "naive_bits"):
                row[c] = int(cell)
            else:
                row[c] = float(cell)
        rows.append(row)
    return rows
