"""Log-space combinatorics shared by the bound formulas and the code builders."""

import math
from functools import lru_cache

LOG2E = math.log2(math.e)
LN2 = math.log(2.0)


def ln_factorial(x: float) -> float:
    return math.lgamma(x + 1.0)


def ln_falling(a: float, k: int) -> float:
    """ln of the falling factorial a(a-1)...(a-k+1); requires a >= k."""
    if k == 0:
        return 0.0
    if a < k:
        raise ValueError(f"falling factorial {a}^(k={k}) is zero or undefined")
    return math.lgamma(a + 1.0) - math.lgamma(a - k + 1.0)


def ln_binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)


def log2_binom(n: int, k: int) -> float:
    return ln_binom(n, k) / LN2


_DIRECT_SUM_MAX = 1 << 20


@lru_cache(maxsize=4096)
def ln_falling_ratio(a: float, k: int) -> float:
    """ln(a^(k falling) / a^k) = sum_{j<k} ln(1 - j/a), always <= 0.

    Summed term by term for k up to about a million: the lgamma difference
    cancels catastrophically once a is large (a = 1e12 leaves no digits).
    """
    if k > a:
        return -math.inf
    if k <= _DIRECT_SUM_MAX:
        return math.fsum(math.log1p(-j / a) for j in range(1, k))
    return ln_falling(a, k) - k * math.log(a)


def log2_power_over_falling(a: float, k: int) -> float:
    """log2(a^k / a^(k falling)), the ``n^k / n^{k falling}`` correction."""
    return -ln_falling_ratio(a, k) / LN2
