"""
Wick Calculus Module
Multi-indices, generalized Hermite polynomials H_alpha(Z) = prod_j He_{alpha_j}(Z_j),
sparse chaos expansions, the Wick product and exponential, and second
quantization Gamma(A_K) of the basis projection
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammainc

from ..config import MAX_CHAOS_TERMS
from ..errors import DomainError
from ..results import FieldEstimate
from .hermite import hermite_polynomial_prob
from .rng import RngStream, StreamRole

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MultiIndex:
    """
    Finitely supported sequence alpha = (alpha_1, alpha_2, ...) of nonnegative integers

    Stored without trailing zeros, so equal indices compare and hash equal.
    """
    entries: Tuple[int, ...] = ()

    def __post_init__(self):
        entries = tuple(int(a) for a in self.entries)
        if any(a < 0 for a in entries):
            raise DomainError(f"multi-index entries must be nonnegative: {entries}")
        while entries and entries[-1] == 0:
            entries = entries[:-1]
        object.__setattr__(self, 'entries', entries)

    @classmethod
    def of(cls, *entries: int) -> 'MultiIndex':
        return cls(tuple(entries))

    @classmethod
    def unit(cls, j: int, power: int = 1) -> 'MultiIndex':
        """power·δ_j (1-based j)"""
        if j < 1:
            raise DomainError(f"basis index must be >= 1, got {j}")
        return cls((0,) * (j - 1) + (power,))

    @property
    def order(self) -> int:
        """|alpha| = sum of entries"""
        return sum(self.entries)

    @property
    def support(self) -> int:
        """Largest j with alpha_j > 0 (0 for the zero index)"""
        return len(self.entries)

    def factorial(self) -> int:
        """alpha! = prod_j alpha_j!"""
        return math.prod(math.factorial(a) for a in self.entries)

    def __getitem__(self, j: int) -> int:
        """alpha_j, 1-based"""
        return self.entries[j - 1] if 1 <= j <= len(self.entries) else 0

    def __add__(self, other: 'MultiIndex') -> 'MultiIndex':
        n = max(len(self.entries), len(other.entries))
        return MultiIndex(tuple(self[j] + other[j] for j in range(1, n + 1)))

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        """Graded lexicographic order: by |alpha|, then entries"""
        return (self.order, self.entries)

    def orderings(self) -> List[Tuple[int, ...]]:
        """Distinct index tuples (i_1..i_n) listing alpha, in lexicographic order"""
        items = [j for j in range(1, self.support + 1) for _ in range(self[j])]
        found = set()
        out = []
        for perm in _unique_permutations(items):
            if perm not in found:
                found.add(perm)
                out.append(perm)
        return sorted(out)

    def to_text(self) -> str:
        return ','.join(str(a) for a in self.entries) if self.entries else '0'

    @classmethod
    def from_text(cls, text: str) -> 'MultiIndex':
        text = text.strip()
        if text in ('', '0'):
            return cls(())
        return cls(tuple(int(part) for part in text.split(',')))

    def __repr__(self) -> str:
        return f"MultiIndex({self.to_text()})"


def _unique_permutations(items: List[int]) -> Iterator[Tuple[int, ...]]:
    if not items:
        yield ()
        return
    seen = set()
    for position, value in enumerate(items):
        if value in seen:
            continue
        seen.add(value)
        rest = items[:position] + items[position + 1:]
        for tail in _unique_permutations(rest):
            yield (value,) + tail


ZERO = MultiIndex(())


def multi_indices(K: int, N: int, active: Optional[Sequence[bool]] = None) -> List[MultiIndex]:
    """
    All alpha with support <= K and |alpha| <= N, graded-lexicographically

    Args:
        K: Basis bound
        N: Degree bound
        active: Optional mask; alpha_j is forced to zero where active[j-1] is False
    """
    if K < 0 or N < 0:
        raise DomainError(f"K and N must be nonnegative, got K={K}, N={N}")
    mask = [True] * K if active is None else [bool(a) for a in active][:K]
    count = math.comb(sum(mask) + N, N)
    if count > MAX_CHAOS_TERMS:
        raise DomainError(f"K={K}, N={N} gives {count} multi-indices, limit {MAX_CHAOS_TERMS}")
    out: List[MultiIndex] = []

    def extend(prefix: List[int], remaining: int):
        j = len(prefix)
        if j == K:
            out.append(MultiIndex(tuple(prefix)))
            return
        top = remaining if mask[j] else 0
        for a in range(top + 1):
            extend(prefix + [a], remaining - a)

    extend([], N)
    return sorted(out, key=MultiIndex.sort_key)


@dataclass(frozen=True)
class NoiseRealization:
    """A sample z = (Z_1..Z_K) of i.i.d. standard Gaussians"""
    z: np.ndarray
    seed: Optional[int] = None
    index: Optional[int] = None

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.ndim != 1 or z.size < 1:
            raise DomainError("noise realization needs a nonempty vector")
        object.__setattr__(self, 'z', z)

    @property
    def K(self) -> int:
        return int(self.z.size)

    def prefix(self, Kp: int) -> 'NoiseRealization':
        """The first Kp coordinates (same W, coarser truncation)"""
        if not 1 <= Kp <= self.K:
            raise DomainError(f"prefix length {Kp} outside 1..{self.K}")
        return NoiseRealization(self.z[:Kp].copy(), self.seed, self.index)


def sample_noise(K: int, seed: int, index: int = 0) -> NoiseRealization:
    """Draw (Z_1..Z_K) from stream (seed, NOISE, index); shorter K gives a prefix"""
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    z = RngStream(seed, StreamRole.NOISE, index).standard_normal(K)
    return NoiseRealization(z, seed=seed, index=index)


@dataclass(frozen=True)
class ChaosExpansion:
    """
    X = sum_alpha x_alpha H_alpha, stored sparsely

    Attributes:
        terms: Multi-index to coefficient
        basis_bound: K, every support is <= K
        degree_bound: N, every order is <= N
        tail_mass: L^2 mass discarded by truncation, when known
    """
    terms: Mapping[MultiIndex, float]
    basis_bound: int
    degree_bound: int
    tail_mass: float = 0.0

    def __post_init__(self):
        ordered: Dict[MultiIndex, float] = {}
        for alpha in sorted(self.terms, key=MultiIndex.sort_key):
            value = float(self.terms[alpha])
            if not np.isfinite(value):
                raise DomainError(f"coefficient at {alpha} is not finite")
            if alpha.support > self.basis_bound or alpha.order > self.degree_bound:
                raise DomainError(
                    f"{alpha} exceeds bounds K={self.basis_bound}, N={self.degree_bound}"
                )
            ordered[alpha] = value
        object.__setattr__(self, 'terms', ordered)

    @classmethod
    def constant(cls, c: float) -> 'ChaosExpansion':
        return cls({ZERO: c}, basis_bound=0, degree_bound=0)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Sequence[int], float]]) -> 'ChaosExpansion':
        """Build from (entries, coefficient) pairs with tight bounds"""
        terms: Dict[MultiIndex, float] = {}
        for entries, value in pairs:
            alpha = MultiIndex(tuple(entries))
            terms[alpha] = terms.get(alpha, 0.0) + float(value)
        K = max((a.support for a in terms), default=0)
        N = max((a.order for a in terms), default=0)
        return cls(terms, basis_bound=K, degree_bound=N)

    def coefficient(self, alpha: MultiIndex) -> float:
        return self.terms.get(alpha, 0.0)

    @property
    def mean(self) -> float:
        """E[X] = x_0"""
        return self.coefficient(ZERO)

    def norm_squared(self) -> float:
        """|X|^2_{L^2} = sum_alpha x_alpha^2 alpha!"""
        return float(sum(v * v * a.factorial() for a, v in self.terms.items()))

    def partial_norm_squared(self, K: int, N: int) -> float:
        """L^2 mass of the terms with support <= K and order <= N"""
        return float(sum(v * v * a.factorial() for a, v in self.terms.items()
                         if a.support <= K and a.order <= N))

    def items(self) -> List[Tuple[MultiIndex, float]]:
        return list(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def to_text(self) -> str:
        """Line format: header `# K=.. N=..` then `alpha_1,..,alpha_m : coefficient`"""
        lines = [f"# K={self.basis_bound} N={self.degree_bound}"]
        lines += [f"{alpha.to_text()} : {value!r}" for alpha, value in self.terms.items()]
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'ChaosExpansion':
        K = N = None
        terms: Dict[MultiIndex, float] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith('#'):
                for token in line[1:].split():
                    key, _, value = token.partition('=')
                    if key == 'K':
                        K = int(value)
                    elif key == 'N':
                        N = int(value)
                continue
            left, _, right = line.partition(':')
            terms[MultiIndex.from_text(left)] = float(right)
        if K is None or N is None:
            raise DomainError("chaos expansion text lacks the K/N header")
        return cls(terms, basis_bound=K, degree_bound=N)


def wick_polynomial(alpha: MultiIndex, z: NoiseRealization) -> float:
    """H_alpha(z) = prod_j He_{alpha_j}(z_j)"""
    if alpha.support > z.K:
        raise DomainError(f"{alpha} needs {alpha.support} noise coordinates, got {z.K}")
    value = 1.0
    for j, a in enumerate(alpha.entries):
        if a:
            value *= hermite_polynomial_prob(a, z.z[j])
    return float(value)


def chaos_eval(X: ChaosExpansion, z: NoiseRealization) -> float:
    """Pointwise value sum_alpha x_alpha H_alpha(z)"""
    if X.basis_bound > z.K:
        raise DomainError(f"expansion needs K={X.basis_bound} noise coordinates, got {z.K}")
    return float(chaos_eval_many(X, z.z[np.newaxis, :])[0])


def chaos_eval_many(X: ChaosExpansion, z: np.ndarray) -> np.ndarray:
    """Evaluate X at each row of z (shape (n, >=K)); Hermite values cached per (j, degree)"""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if X.basis_bound > z.shape[1]:
        raise DomainError(f"expansion needs K={X.basis_bound} noise coordinates, got {z.shape[1]}")
    cache: Dict[Tuple[int, int], np.ndarray] = {}
    total = np.zeros(z.shape[0])
    for alpha, coefficient in X.terms.items():
        term = np.full(z.shape[0], coefficient)
        for j, a in enumerate(alpha.entries):
            if a:
                key = (j, a)
                if key not in cache:
                    cache[key] = hermite_polynomial_prob(a, z[:, j])
                term = term * cache[key]
        total += term
    return total


def wick_product(X: ChaosExpansion, Y: ChaosExpansion) -> ChaosExpansion:
    """
    X ⋄ Y on the Hermite basis: H_alpha ⋄ H_beta = H_{alpha+beta}

    (X ⋄ Y)_gamma = sum_{alpha+beta=gamma} x_alpha y_beta.
    """
    terms: Dict[MultiIndex, float] = {}
    for alpha, x in X.terms.items():
        for beta, y in Y.terms.items():
            gamma = alpha + beta
            terms[gamma] = terms.get(gamma, 0.0) + x * y
    return ChaosExpansion(
        terms,
        basis_bound=max(X.basis_bound, Y.basis_bound),
        degree_bound=X.degree_bound + Y.degree_bound,
    )


def exponential_tail(c: np.ndarray, N: int) -> float:
    """
    L^2 mass of the stochastic exponential beyond degree N

    sum_{|alpha|>N} prod_j c_j^{2 alpha_j} / alpha_j! = e^s P(N+1, s), s = |c|^2.
    """
    s = float(np.sum(np.asarray(c, dtype=float) ** 2))
    if s == 0.0:
        return 0.0
    return float(np.exp(s) * gammainc(N + 1, s))


def wick_exponential(c: Sequence[float], N: int) -> ChaosExpansion:
    """
    Truncated chaos expansion of exp(sum_j c_j Z_j - |c|^2 / 2)

    x_alpha = prod_j c_j^{alpha_j} / alpha_j! for |alpha| <= N; zero c_j are
    skipped, so the expansion stays sparse.
    """
    if N < 0:
        raise DomainError(f"degree bound must be nonnegative, got {N}")
    c = np.asarray(c, dtype=float)
    K = int(c.size)
    indices = multi_indices(K, N, active=c != 0.0)
    terms = {alpha: _monomial(c, alpha) for alpha in indices}
    tail = exponential_tail(c, N)
    logger.debug(f"Wick exponential: {len(terms)} terms up to degree {N}, tail mass {tail:.3e}")
    return ChaosExpansion(terms, basis_bound=K, degree_bound=N, tail_mass=tail)


def _monomial(c: np.ndarray, alpha: MultiIndex) -> float:
    value = 1.0
    for j, a in enumerate(alpha.entries):
        if a:
            value *= c[j] ** a / math.factorial(a)
    return float(value)


def second_quantization(X: ChaosExpansion, Kp: int) -> ChaosExpansion:
    """
    Gamma(A_Kp) X: keep exactly the terms whose support is <= Kp
    """
    if Kp < 0:
        raise DomainError(f"projection level must be nonnegative, got {Kp}")
    kept = {alpha: v for alpha, v in X.terms.items() if alpha.support <= Kp}
    return ChaosExpansion(kept, basis_bound=min(X.basis_bound, Kp), degree_bound=X.degree_bound)


def conditional_expectation_mc(evaluator: Callable[[np.ndarray], np.ndarray], z_head: Sequence[float],
                               K_big: int, n_samples: int = 20000, seed: int = 0,
                               index: int = 0) -> FieldEstimate:
    """
    Monte Carlo E[X | Z_1..Z_Kp] at a fixed head (z_1..z_Kp)

    Args:
        evaluator: X as a function of full noise rows, shape (n, K_big) -> (n,)
        z_head: Conditioning values (length Kp < K_big)
        K_big: Length of the full noise vector
        n_samples: Number of resampled tails
        seed: Global seed; tails come from stream (seed, RESAMPLE, index)
        index: Conditioning-point index

    Returns:
        FieldEstimate over the resampled tails
    """
    head = np.asarray(z_head, dtype=float)
    Kp = head.size
    if not K_big > Kp:
        raise DomainError(f"need K_big > Kp, got K_big={K_big}, Kp={Kp}")
    tails = RngStream(seed, StreamRole.RESAMPLE, index).standard_normal((n_samples, K_big - Kp))
    rows = np.hstack([np.broadcast_to(head, (n_samples, Kp)), tails])
    return FieldEstimate.from_samples(evaluator(rows))


def random_sparse_expansion(K: int, N: int, n_terms: int, rng: np.random.Generator) -> ChaosExpansion:
    """Random expansion with n_terms distinct indices of support <= K, order <= N"""
    pool = multi_indices(K, N)
    chosen = rng.choice(len(pool), size=min(n_terms, len(pool)), replace=False)
    terms = {pool[i]: float(rng.normal()) for i in sorted(chosen)}
    return ChaosExpansion(terms, basis_bound=K, degree_bound=N)
