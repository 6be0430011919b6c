"""
Independent brute-force references for the E-step and the marginal
log-likelihood. They evaluate the textbook formulas literally (linear
domain, no log-sum-exp, no factorisation) and are only meant for tiny inputs.
"""

import itertools
import math
from fractions import Fraction

from crowdem.errors import OracleSizeError
from crowdem.model.types import ConfusionTensor, LabelSet

__all__ = ["brute_posterior", "brute_marginal", "MAX_ORACLE_OBSERVATIONS", "MAX_ORACLE_ASSIGNMENTS"]

MAX_ORACLE_OBSERVATIONS = 12
MAX_ORACLE_ASSIGNMENTS = 6561


def brute_posterior(c: ConfusionTensor, obs) -> list[Fraction]:
    """
    Exact posterior P(y = l | C, z) in rational arithmetic.

    Every c entry is converted exactly to a Fraction, the per-class product
    prod_i c_{i, l, z_i} is formed and normalised.
    """
    pairs = [(int(i), int(g)) for i, g in obs]
    if len(pairs) > MAX_ORACLE_OBSERVATIONS:
        raise OracleSizeError(
            f"brute_posterior handles at most {MAX_ORACLE_OBSERVATIONS} observations, got {len(pairs)}")
    weights = []
    for l in range(c.k):
        weight = Fraction(1)
        for i, g in pairs:
            weight *= Fraction(float(c.values[i, l, g - 1]))
        weights.append(weight)
    total = sum(weights)
    return [w / total for w in weights]


def brute_marginal(c: ConfusionTensor, labels: LabelSet) -> float:
    """
    log( k^-n sum_{y in [k]^n} prod_j prod_i c_{i, y_j, z_ij} ), by literal enumeration.

    Products are formed in floating point (they cannot underflow at the
    admitted sizes) and the k^n terms are added with math.fsum.
    """
    if labels.k ** labels.n > MAX_ORACLE_ASSIGNMENTS:
        raise OracleSizeError(
            f"k^n = {labels.k}^{labels.n} exceeds {MAX_ORACLE_ASSIGNMENTS} assignments")
    obs = list(labels.observations())
    terms = []
    for y in itertools.product(range(labels.k), repeat=labels.n):
        product = 1.0
        for i, j, g in obs:
            product *= float(c.values[i, y[j], g - 1])
        terms.append(product)
    return math.log(math.fsum(terms)) - labels.n * math.log(labels.k)
