"""Exact expectations of restricted Haar bilinear forms over the lattice ensemble.

For one lattice the form is

    sum over Haar pairs (Q, R) passing a filter of (T h_Q, h_R)(f, h_Q)(g, h_R),

optionally multiplied by the indicator that R is really good.  Each term is
linear in that indicator and xi_R is independent of the lattice, so the
indicator is replaced by its exact xi-probability instead of sampling.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .czop import OperatorMatrix, haar_matrix
from .errors import InvalidParameterError
from .goodness import Equalizer, xi_value
from .haar import HaarSystem
from .lattice import LatticeEnsemble

SCALES = ("all", "ge", "gt", "le", "lt", "eq")


@dataclass(frozen=True)
class PairFilter:
    """Scale relation l(Q) <rel> l(R) and whether R must be really good."""

    scale: str = "all"
    really_good_R: bool = False

    def __post_init__(self):
        if self.scale not in SCALES:
            raise InvalidParameterError(f"scale must be one of {SCALES}, got {self.scale!r}")

    def mask(self, gen_q: np.ndarray, gen_r: np.ndarray) -> np.ndarray:
        """Boolean [r, q] mask; a larger side means a smaller generation."""
        gq, gr = gen_q[None, :], gen_r[:, None]
        return {
            "all": np.ones((len(gen_r), len(gen_q)), dtype=bool),
            "ge": gq <= gr,
            "gt": gq < gr,
            "le": gq >= gr,
            "lt": gq > gr,
            "eq": gq == gr,
        }[self.scale]

    @property
    def label(self) -> str:
        return f"{self.scale}{'+R_really_good' if self.really_good_R else ''}"


@dataclass
class ExpectationReport:
    functional: str
    value: float
    per_lattice: list  # (probability, value) in enumeration order
    treatment: str = "analytic"


def _lattice_value(B, a, b, gens, rweights, pf: PairFilter) -> float:
    M = B * pf.mask(gens, gens)
    if pf.really_good_R:
        M = M * rweights[:, None]
    return float(b @ M @ a)


def expect_bilinear(T: OperatorMatrix, f, g, ensemble: LatticeEnsemble, pair_filter: PairFilter,
                    equalizer: Equalizer | None = None, treatment: str = "analytic",
                    xi_seed: int = 0) -> ExpectationReport:
    """Probability-weighted sum of the filtered form over every lattice of the ensemble."""
    if pair_filter.really_good_R and equalizer is None:
        raise InvalidParameterError("a really-good filter needs an Equalizer")
    if treatment not in ("analytic", "sampled"):
        raise InvalidParameterError(f"unknown treatment {treatment!r}")
    mu = T.mu
    cache: dict = {}
    per = []
    total = 0.0
    for lat, prob in ensemble:
        system = HaarSystem(mu, lat, cache=cache)
        if system.n_functions == 0:
            per.append((prob, 0.0))
            continue
        B = haar_matrix(T, system)
        a = system.coefficients(f)
        b = system.coefficients(g)
        gens = np.array([h.cube.gen for h in system.functions])
        rw = None
        if pair_filter.really_good_R:
            if treatment == "analytic":
                rw = np.array([equalizer.weight(h.cube, lat) for h in system.functions])
            else:
                rw = np.array([
                    float(equalizer.really_good(h.cube, lat, xi_seed))
                    for h in system.functions
                ])
        v = _lattice_value(B, a, b, gens, rw, pair_filter)
        per.append((prob, v))
        total += prob * v
    return ExpectationReport(pair_filter.label, total, per, treatment)


@dataclass
class HalfIdentity:
    lhs: float
    rhs: float
    abs_diff: float
    ensemble_size: int
    strictness: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def verify_half_identity(T: OperatorMatrix, f, g, ensemble: LatticeEnsemble, equalizer: Equalizer,
                         strictness: str = "ge") -> HalfIdentity:
    """lhs = 1/2 E[sum over l(Q) >= l(R)] (or >), rhs = the same with R really good."""
    if strictness not in ("ge", "gt", "all"):
        raise InvalidParameterError(f"strictness must be 'ge', 'gt' or 'all', got {strictness!r}")
    full = expect_bilinear(T, f, g, ensemble, PairFilter(strictness), equalizer)
    good = expect_bilinear(T, f, g, ensemble, PairFilter(strictness, True), equalizer)
    lhs = 0.5 * full.value
    return HalfIdentity(float(lhs), float(good.value), float(abs(lhs - good.value)), len(ensemble), strictness)


def really_good_probability(Q, ensemble: LatticeEnsemble, equalizer: Equalizer) -> float:
    """P(Q really good | Q in D) over (lattice, xi), with xi integrated exactly."""
    num = den = 0.0
    for lat, prob in ensemble:
        if lat.contains(Q):
            den += prob
            num += prob * equalizer.weight(Q, lat)
    return num / den


def sampled_really_good_fraction(Q, ensemble: LatticeEnsemble, equalizer: Equalizer, seeds) -> float:
    """Same probability with xi drawn per seed instead of integrated."""
    num = den = 0.0
    p = None
    for lat, prob in ensemble:
        if not lat.contains(Q):
            continue
        for s in seeds:
            den += prob
            if equalizer.is_good(Q, lat):
                p = equalizer.p_good(Q) if p is None else p
                num += prob * (xi_value(Q, s) <= 1.0 / (2.0 * p))
    return num / den


def haar_systems(mu, ensemble: LatticeEnsemble) -> list[HaarSystem]:
    cache: dict = {}
    return [HaarSystem(mu, lat, cache=cache) for lat, _ in ensemble]
