###############################################################################
### Imports
###############################################################################
import itertools
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb, prod
from pathlib import Path

import numpy as np
from scipy import linalg

from twistlab.errors import (
    BadDegreesError,
    BadShapeError,
    ConfigError,
    NewtonDivergenceError,
    NoConvergentSamplesError,
    NotHomogeneousError,
    PolynomialSyntaxError,
    SingularChartBlockError,
    UnknownFamilyError,
    ZeroPolynomialError,
)

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
PI_SURROGATE = Fraction(355, 113)
CHART_RADIUS = 0.3
NEWTON_TOL = 1e-12
MAX_ITERATIONS = 50
SIGMA_THRESHOLD = 1e-6
MAX_CONDITION = 1e8
FAMILIES = ("Xd", "X2mn", "qA", "custom")


###############################################################################
### Exact Complex Numbers
###############################################################################
@dataclass(frozen=True)
class ExactComplex:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def coerce(cls, value):
        if isinstance(value, ExactComplex):
            return value
        return cls(Fraction(value), Fraction(0))

    def __add__(self, other):
        other = ExactComplex.coerce(other)
        return ExactComplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return ExactComplex(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-ExactComplex.coerce(other))

    def __mul__(self, other):
        other = ExactComplex.coerce(other)
        return ExactComplex(self.re * other.re - self.im * other.im, self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __pow__(self, exponent):
        result = ExactComplex(Fraction(1))
        for _ in range(exponent):
            result = result * self
        return result

    def conjugate(self):
        return ExactComplex(self.re, -self.im)

    def is_zero(self):
        return self.re == 0 and self.im == 0


###############################################################################
### Polynomials
###############################################################################
def normalize_dims(factor_dims):
    dims = (factor_dims,) if isinstance(factor_dims, int) else tuple(int(d) for d in factor_dims)
    if not dims or any(d < 1 for d in dims):
        raise BadShapeError(f"Factor dimensions must be positive, got {factor_dims}")
    return dims


def _offsets(dims):
    offsets = [0]
    for d in dims[:-1]:
        offsets.append(offsets[-1] + d + 1)
    return tuple(offsets)


def variable_name(dims, flat_index):
    if len(dims) == 1:
        return f"z{flat_index}"
    for factor, offset in reversed(list(enumerate(_offsets(dims)))):
        if flat_index >= offset:
            return f"z{factor}_{flat_index - offset}"


def _format_coefficient(value):
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def format_term(dims, exponents, coefficient):
    factors = []
    for index, power in enumerate(exponents):
        if power:
            name = variable_name(dims, index)
            factors.append(name if power == 1 else f"{name}^{power}")
    magnitude = abs(coefficient)
    if not factors:
        return _format_coefficient(magnitude)
    if magnitude == 1:
        return "*".join(factors)
    return "*".join([_format_coefficient(magnitude)] + factors)


@dataclass(frozen=True)
class MultiHomogeneousPolynomial:
    factor_dims: tuple
    terms: tuple
    multidegree: tuple

    @classmethod
    def from_terms(cls, factor_dims, mapping):
        """
        Combines, validates and orders terms.

        :param factor_dims: (n_0, ..., n_nu).
        :param mapping: Iterable of (exponent tuple, coefficient).
        :return: MultiHomogeneousPolynomial
        """
        dims = normalize_dims(factor_dims)
        width = sum(d + 1 for d in dims)
        combined = {}
        for exponents, coefficient in (mapping.items() if isinstance(mapping, dict) else mapping):
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != width or any(e < 0 for e in exponents):
                raise BadShapeError(f"Exponent vector {exponents} does not fit dims {dims}")
            combined[exponents] = combined.get(exponents, Fraction(0)) + Fraction(coefficient)
        terms = tuple(sorted(((e, c) for e, c in combined.items() if c != 0), reverse=True))
        if not terms:
            logger.error("Polynomial has no nonzero terms")
            raise ZeroPolynomialError("Polynomial is identically zero")
        offsets = _offsets(dims)

        def degrees(exponents):
            return tuple(sum(exponents[o : o + d + 1]) for o, d in zip(offsets, dims))

        multidegree = degrees(terms[0][0])
        for exponents, coefficient in terms:
            if degrees(exponents) != multidegree:
                offending = format_term(dims, exponents, coefficient)
                logger.error(f"Term {offending} breaks multidegree {multidegree}")
                raise NotHomogeneousError(
                    f"Term {offending} has multidegree {degrees(exponents)}, expected {multidegree}",
                    term=offending,
                )
        return cls(dims, terms, multidegree)

    @property
    def coefficients(self):
        return dict(self.terms)

    @property
    def width(self):
        return sum(d + 1 for d in self.factor_dims)

    @cached_property
    def _numeric(self):
        exponents = np.array([e for e, _ in self.terms], dtype=int)
        coefficients = np.array([float(c) for _, c in self.terms])
        return exponents, coefficients

    def evaluate(self, z):
        """Numeric value at a flat complex coordinate vector."""
        exponents, coefficients = self._numeric
        z = np.asarray(z, dtype=complex)
        return complex(coefficients @ np.prod(np.power(z[None, :], exponents), axis=1))

    def gradient(self, z):
        exponents, coefficients = self._numeric
        z = np.asarray(z, dtype=complex)
        gradient = np.zeros(len(z), dtype=complex)
        for index in range(len(z)):
            mask = exponents[:, index] > 0
            if not np.any(mask):
                continue
            reduced = exponents[mask].copy()
            reduced[:, index] -= 1
            weights = coefficients[mask] * exponents[mask, index]
            gradient[index] = weights @ np.prod(np.power(z[None, :], reduced), axis=1)
        return gradient

    def evaluate_exact(self, z):
        """Exact value at a flat vector of rationals or ExactComplex entries."""
        point = [ExactComplex.coerce(value) for value in z]
        total = ExactComplex()
        for exponents, coefficient in self.terms:
            monomial = ExactComplex(coefficient)
            for value, power in zip(point, exponents):
                if power:
                    monomial = monomial * value**power
            total = total + monomial
        return total

    def derivative_terms(self, index):
        """Terms of the partial derivative in the flat variable `index`."""
        result = {}
        for exponents, coefficient in self.terms:
            if exponents[index]:
                lowered = list(exponents)
                lowered[index] -= 1
                result[tuple(lowered)] = result.get(tuple(lowered), Fraction(0)) + coefficient * exponents[index]
        return {e: c for e, c in result.items() if c != 0}


def format_poly(poly):
    """Canonical text form; parse_poly(format_poly(p)) == p."""
    pieces = []
    for position, (exponents, coefficient) in enumerate(poly.terms):
        text = format_term(poly.factor_dims, exponents, coefficient)
        if position == 0:
            pieces.append(f"-{text}" if coefficient < 0 else text)
        else:
            pieces.append(f"{'-' if coefficient < 0 else '+'} {text}")
    return " ".join(pieces)


###############################################################################
### Parser
###############################################################################
_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<var>z\d+(?:_\d+)?)|(?P<op>[-+*/^]))")


class _Parser:
    def __init__(self, text, dims):
        self.text = text
        self.dims = dims
        self.offsets = _offsets(dims)
        self.width = sum(d + 1 for d in dims)
        self.tokens = self._tokenize(text)
        self.index = 0

    def _tokenize(self, text):
        tokens = []
        position = 0
        stripped = text.rstrip()
        while position < len(stripped):
            match = _TOKEN.match(stripped, position)
            if not match:
                column = position + len(stripped[position:]) - len(stripped[position:].lstrip())
                raise PolynomialSyntaxError(f"Unexpected character {stripped[column]!r}", column)
            kind = match.lastgroup
            tokens.append((kind, match.group(kind), match.start(kind)))
            position = match.end()
        return tokens

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else (None, None, len(self.text))

    def take(self, kind, value=None):
        token = self.peek()
        if token[0] != kind or (value is not None and token[1] != value):
            expected = value or kind
            found = token[1] if token[0] else "end of input"
            raise PolynomialSyntaxError(f"Expected {expected}, found {found!r}", token[2])
        self.index += 1
        return token

    def parse(self):
        if not self.tokens:
            raise PolynomialSyntaxError("Empty polynomial", 0)
        terms = []
        sign = 1
        if self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take("op")[1] == "-" else 1
        terms.append(self.term(sign))
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take("op")[1] == "-" else 1
            terms.append(self.term(sign))
        if self.peek()[0] is not None:
            token = self.peek()
            raise PolynomialSyntaxError(f"Unexpected {token[1]!r}", token[2])
        return terms

    def term(self, sign):
        exponents = [0] * self.width
        coefficient = Fraction(sign)
        kind = self.peek()[0]
        if kind == "num":
            coefficient *= self.coefficient()
            while self.peek()[0] == "op" and self.peek()[1] == "*":
                self.take("op", "*")
                self.monomial(exponents)
        elif kind == "var":
            self.monomial(exponents)
            while self.peek()[0] == "op" and self.peek()[1] == "*":
                self.take("op", "*")
                self.monomial(exponents)
        else:
            token = self.peek()
            found = token[1] if token[0] else "end of input"
            raise PolynomialSyntaxError(f"Expected coefficient or variable, found {found!r}", token[2])
        return tuple(exponents), coefficient

    def coefficient(self):
        numerator = int(self.take("num")[1])
        if self.peek()[0] == "op" and self.peek()[1] == "/":
            self.take("op", "/")
            _, text, position = self.take("num")
            if int(text) == 0:
                raise PolynomialSyntaxError("Zero denominator", position)
            return Fraction(numerator, int(text))
        return Fraction(numerator)

    def monomial(self, exponents):
        _, name, position = self.take("var")
        flat = self.resolve(name, position)
        power = 1
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take("op", "^")
            power = int(self.take("num")[1])
        exponents[flat] += power

    def resolve(self, name, position):
        body = name[1:]
        if "_" in body:
            factor, index = (int(part) for part in body.split("_"))
        elif len(self.dims) == 1:
            factor, index = 0, int(body)
        else:
            raise PolynomialSyntaxError(f"Variable {name} needs a factor index (zF_I)", position)
        if factor >= len(self.dims) or index > self.dims[factor]:
            raise PolynomialSyntaxError(f"Variable {name} is out of range for dims {self.dims}", position)
        return self.offsets[factor] + index


def parse_poly(text, factor_dims):
    """
    Parses a (multi)homogeneous polynomial with exact rational coefficients.

    :param text: e.g. "z0^4 + z1^4 + z2^4 + z2*z3^3" or "z0_0^2*z1_0^2*z2_0^2".
    :param factor_dims: n_f per factor (an int for a single projective space).
    :return: MultiHomogeneousPolynomial
    """
    dims = normalize_dims(factor_dims)
    terms = _Parser(text, dims).parse()
    return MultiHomogeneousPolynomial.from_terms(dims, terms)


def parse_poly_file(path, factor_dims):
    """One polynomial per line; '#' starts a comment."""
    polys = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            polys.append(parse_poly(text, factor_dims))
        except PolynomialSyntaxError as e:
            logger.error(f"Syntax error on line {number} of {path}: {str(e)}")
            raise PolynomialSyntaxError(f"line {number}: {e.message}", e.position)
    return PolySystem(tuple(polys))


###############################################################################
### Systems and Points
###############################################################################
@dataclass(frozen=True)
class PolySystem:
    polys: tuple
    notes: tuple = ()

    def __post_init__(self):
        polys = tuple(self.polys)
        object.__setattr__(self, "polys", polys)
        if not polys:
            raise BadDegreesError("A system needs at least one polynomial")
        dims = polys[0].factor_dims
        if any(p.factor_dims != dims for p in polys):
            raise BadShapeError("Polynomials do not share factor dimensions")
        if len(polys) >= sum(dims):
            logger.error(f"{len(polys)} polynomials in dimension {sum(dims)} cut out no positive-dimensional set")
            raise BadDegreesError(f"Need m < n, got m={len(polys)}, n={sum(dims)}")
        if any(d == 0 for p in polys for d in p.multidegree):
            raise BadDegreesError("Multidegrees must have no zero entries")

    @property
    def factor_dims(self):
        return self.polys[0].factor_dims

    @property
    def m(self):
        return len(self.polys)

    @property
    def n(self):
        return sum(self.factor_dims)

    @property
    def width(self):
        return self.n + len(self.factor_dims)

    @property
    def last_indices(self):
        return tuple(o + d for o, d in zip(_offsets(self.factor_dims), self.factor_dims))

    def values(self, z):
        return np.array([p.evaluate(z) for p in self.polys])

    def jacobian(self, z):
        return np.array([p.gradient(z) for p in self.polys])

    def describe(self):
        return [format_poly(p) for p in self.polys]


def _pivot(vector):
    moduli = np.abs(vector)
    return int(np.argmax(moduli >= moduli.max() * (1 - 1e-12)))


@dataclass(frozen=True)
class ProjectivePoint:
    coords: tuple

    def __post_init__(self):
        normalized = []
        for vector in self.coords:
            vector = np.array(vector, dtype=complex)
            if vector.ndim != 1 or not np.any(vector):
                raise BadShapeError("Projective coordinates must be nonzero vectors")
            pivot = _pivot(vector)
            vector = vector / vector[pivot]
            vector[pivot] = 1.0
            vector.setflags(write=False)
            normalized.append(vector)
        object.__setattr__(self, "coords", tuple(normalized))

    @classmethod
    def from_flat(cls, flat, factor_dims):
        flat = np.asarray(flat, dtype=complex)
        return cls(tuple(flat[o : o + d + 1] for o, d in zip(_offsets(factor_dims), factor_dims)))

    @property
    def factor_dims(self):
        return tuple(len(v) - 1 for v in self.coords)

    @property
    def flat(self):
        return np.concatenate(self.coords)

    @property
    def pinned(self):
        return tuple(_pivot(v) for v in self.coords)

    def close_to(self, other, tol=1e-12):
        return all(np.max(np.abs(a - b)) <= tol for a, b in zip(self.coords, other.coords))

    def label(self):
        def one(vector):
            return "[" + ":".join(_format_number(value) for value in vector) + "]"

        if len(self.coords) == 1:
            return one(self.coords[0])
        return "(" + ",".join(one(v) for v in self.coords) + ")"


def _format_number(value):
    if value.imag == 0:
        return f"{value.real:g}"
    return f"{value.real:g}{value.imag:+g}i"


###############################################################################
### Symmetry and Witnesses
###############################################################################
@dataclass(frozen=True)
class SymmetryReport:
    per_polynomial: tuple

    @property
    def passed(self):
        return all(all(flags) for flags in self.per_polynomial)

    def as_dict(self):
        return [
            {"real_coefficients": real, "even_z00": even, "positive_non_last": positive}
            for real, even, positive in self.per_polynomial
        ]


def symmetry_conditions(sys):
    """
    Per polynomial: real coefficients, even z_{0,0} powers, and every monomial
    using some coordinate other than the last one of each factor.

    :param sys: PolySystem.
    :return: SymmetryReport
    """
    logger.info(f"Checking symmetry conditions for {sys.m} polynomial(s)")
    last = set(sys.last_indices)
    flags = []
    for poly in sys.polys:
        real = all(isinstance(c, Fraction) for _, c in poly.terms)
        even = all(e[0] % 2 == 0 for e, _ in poly.terms)
        positive = all(any(power > 0 and index not in last for index, power in enumerate(e)) for e, _ in poly.terms)
        flags.append((real, even, positive))
    return SymmetryReport(tuple(flags))


def witness_qA(d, n):
    """
    The symmetric witness system q_A in P^n.

    :param d: Degrees (d_1, ..., d_m), m < n.
    :param n: Projective dimension.
    :return: PolySystem
    """
    d = tuple(int(value) for value in d)
    if not d or any(value < 1 for value in d) or len(d) >= n:
        logger.error(f"Invalid witness degrees {d} for n={n}")
        raise BadDegreesError(f"Witness needs 1 <= m < n and positive degrees, got d={d}, n={n}")
    width = n + 1

    def monomial(**powers):
        exponents = [0] * width
        for index, power in powers.items():
            exponents[int(index[1:])] += power
        return tuple(exponents)

    polys = []
    for i, degree in enumerate(d, start=1):
        zi, zn = f"z{i}", f"z{n}"
        if degree == 1:
            terms = {monomial(**{zi: 1}): 1}
        elif degree % 2:
            terms = {
                monomial(z0=degree - 1, **{zi: 1}): 1,
                monomial(z0=degree - 1, **{zn: 1}): 1,
                monomial(**{zi: 1, zn: degree - 1}): 1,
            }
        else:
            terms = {monomial(z0=degree): 1, monomial(**{zi: 1, zn: degree - 1}): 1}
        polys.append(MultiHomogeneousPolynomial.from_terms((n,), terms))
    return PolySystem(tuple(polys))


def _trim(coeffs):
    coeffs = list(coeffs)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    return coeffs


def _divmod(numerator, denominator):
    numerator, denominator = _trim(numerator), _trim(denominator)
    quotient = [Fraction(0)] * max(len(numerator) - len(denominator) + 1, 1)
    while len(numerator) >= len(denominator) and numerator:
        shift = len(numerator) - len(denominator)
        factor = numerator[-1] / denominator[-1]
        quotient[shift] = factor
        for index, value in enumerate(denominator):
            numerator[index + shift] -= factor * value
        numerator = _trim(numerator)
    return _trim(quotient), numerator


def _gcd(first, second):
    first, second = _trim(first), _trim(second)
    while second:
        first, second = second, _divmod(first, second)[1]
    return first


def _binary_restriction(terms, width, n):
    """Coefficients in z_0 of a form restricted to z_1 = ... = z_{n-1} = 0."""
    restricted = {}
    for exponents, coefficient in terms.items():
        if all(exponents[index] == 0 for index in range(1, n)):
            restricted[exponents[0]] = restricted.get(exponents[0], Fraction(0)) + coefficient
    return {power: c for power, c in restricted.items() if c != 0}


def _row_holds(partials, i, point):
    """The derivative row at an exact point equals the i-th basis row."""
    z0, zn = point
    for j, form in enumerate(partials):
        value = sum(c * z0**power * zn**rest for (power, rest), c in form.items())
        if value != (1 if j == i else 0):
            return False
    return True


def kronecker_witness_check(d, n, system=None):
    """
    Exact check that, on A = {[a_0:0:...:0:a_n]}, the derivative rows of the
    witness in z_1..z_m are the standard basis rows wherever the polynomial vanishes.

    :param d: Degrees.
    :param n: Projective dimension.
    :param system: Replacement system (defaults to witness_qA(d, n)).
    :return: bool
    """
    system = witness_qA(d, n) if system is None else system
    m, width = system.m, n + 1
    for i, poly in enumerate(system.polys):
        degree = poly.multidegree[0]
        restricted = _binary_restriction(poly.coefficients, width, n)
        partials = []
        for j in range(1, m + 1):
            partial = _binary_restriction(poly.derivative_terms(j), width, n)
            partials.append({(power, degree - 1 - power): c for power, c in partial.items()})
        if not restricted:
            constant = degree == 1 and all(
                set(form) <= {(0, 0)} and form.get((0, 0), 0) == (1 if j == i else 0)
                for j, form in enumerate(partials)
            )
            if not constant:
                logger.info(f"Witness row {i + 1} fails on all of A")
                return False
            continue
        if 0 not in restricted and not _row_holds(partials, i, (0, 1)):
            logger.info(f"Witness row {i + 1} fails at [0:...:0:1]")
            return False
        if degree not in restricted and not _row_holds(partials, i, (1, 0)):
            logger.info(f"Witness row {i + 1} fails at [1:0:...:0]")
            return False
        # interior roots [1:t], t != 0, of g(1, t) = sum c_a t^(degree - a)
        values = [restricted.get(degree - k, Fraction(0)) for k in range(degree + 1)]
        while values and values[0] == 0:
            values.pop(0)
        values = _trim(values)
        if len(values) > 1:
            derivative = [k * c for k, c in enumerate(values)][1:]
            squarefree, _ = _divmod(values, _gcd(values, derivative))
            for j, form in enumerate(partials):
                along = [Fraction(0)] * degree
                for (power, rest), c in form.items():
                    along[rest] += c
                if j == i:
                    if len(_gcd(squarefree, along)) > 1:
                        logger.info(f"Witness row {i + 1} vanishes at an interior root")
                        return False
                elif _trim(_divmod(along, squarefree)[1]):
                    logger.info(f"Witness row {i + 1} has a nonzero off-diagonal entry at an interior root")
                    return False
    return True


###############################################################################
### Jacobians and Smoothness
###############################################################################
@dataclass(frozen=True)
class JacobianEvaluation:
    values: np.ndarray
    jacobian: np.ndarray
    minors: tuple

    def singular(self, tol=1e-12):
        return bool(np.all(np.abs(self.values) <= tol) and all(abs(minor) <= tol for minor in self.minors))


def jacobian_minors(sys, z):
    """
    Values and all m x m minors of the homogeneous Jacobian at z.

    :param sys: PolySystem.
    :param z: ProjectivePoint.
    :return: JacobianEvaluation
    """
    flat = z.flat
    values = sys.values(flat)
    jacobian = sys.jacobian(flat)
    minors = tuple(
        complex(np.linalg.det(jacobian[:, list(columns)]))
        for columns in itertools.combinations(range(sys.width), sys.m)
    )
    return JacobianEvaluation(values, jacobian, minors)


def chart_sigma_min(sys, point, pinned=None):
    """
    Smallest singular value of the Jacobian in the affine chart that pins
    coordinate pinned[f] of every factor f to 1.
    """
    pinned = point.pinned if pinned is None else tuple(pinned)
    offsets = _offsets(sys.factor_dims)
    rescaled = np.concatenate([v / v[p] for v, p in zip(point.coords, pinned)])
    fixed = {o + p for o, p in zip(offsets, pinned)}
    free = [index for index in range(sys.width) if index not in fixed]
    chart_jacobian = sys.jacobian(rescaled)[:, free]
    return float(np.linalg.svd(chart_jacobian, compute_uv=False)[-1])


def _random_point(dims, seed, index):
    rng = np.random.default_rng([seed, index])
    return ProjectivePoint(tuple(rng.standard_normal(d + 1) + 1j * rng.standard_normal(d + 1) for d in dims))


def project_to_zero_set(sys, point, tol=NEWTON_TOL, max_iterations=MAX_ITERATIONS):
    """
    Damped Gauss-Newton projection in the chart of the starting point.

    :return: ProjectivePoint on the zero set, or None when the iteration fails.
    """
    offsets = _offsets(sys.factor_dims)
    fixed = {o + p for o, p in zip(offsets, point.pinned)}
    free = [index for index in range(sys.width) if index not in fixed]
    x = point.flat.copy()
    residual = np.linalg.norm(sys.values(x))
    for _ in range(max_iterations):
        if residual <= tol:
            break
        step = np.linalg.pinv(sys.jacobian(x)[:, free]) @ sys.values(x)
        damping = 1.0
        while True:
            candidate = x.copy()
            candidate[free] -= damping * step
            candidate_residual = np.linalg.norm(sys.values(candidate))
            if candidate_residual <= residual or damping < 1e-3:
                break
            damping *= 0.5
        x, residual = candidate, candidate_residual
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e8:
            return None
    if residual > tol:
        return None
    return ProjectivePoint.from_flat(x, sys.factor_dims)


@dataclass(frozen=True)
class SampleResult:
    index: int
    point: ProjectivePoint
    residual: float
    sigma_min: float


@dataclass(frozen=True)
class SmoothnessReport:
    samples_requested: int
    samples_tested: int
    min_singular_value: float
    failures: tuple
    special_point_results: dict
    sigma_threshold: float
    seed: int

    @property
    def passed(self):
        return not self.failures

    def as_dict(self):
        return {
            "samples_requested": self.samples_requested,
            "samples_tested": self.samples_tested,
            "min_singular_value": self.min_singular_value,
            "sigma_threshold": self.sigma_threshold,
            "seed": self.seed,
            "failures": [
                {"point": point.label(), "residual": residual, "sigma_min": sigma}
                for point, residual, sigma in self.failures
            ],
            "special_point_results": self.special_point_results,
        }


def _scan_one(sys, seed, index):
    projected = project_to_zero_set(sys, _random_point(sys.factor_dims, seed, index))
    if projected is None:
        return None
    residual = float(np.max(np.abs(sys.values(projected.flat))))
    return SampleResult(index, projected, residual, chart_sigma_min(sys, projected))


def special_points(dims):
    """Every product of [0:...:0:1] and [1:0:...:0] over the factors."""
    points = {}
    for pattern in itertools.product((True, False), repeat=len(dims)):
        coords = []
        for last, d in zip(pattern, dims):
            vector = np.zeros(d + 1, dtype=complex)
            vector[d if last else 0] = 1.0
            coords.append(vector)
        point = ProjectivePoint(tuple(coords))
        points[point.label()] = point
    return points


def _special_point_results(sys, sigma_threshold):
    results = {}
    singular = []
    for name, point in special_points(sys.factor_dims).items():
        exact = [Fraction(int(value.real)) for value in point.flat]
        on_zero_set = all(p.evaluate_exact(exact).is_zero() for p in sys.polys)
        entry = {"on_zero_set": on_zero_set, "sigma_min": None, "singular": False}
        if on_zero_set:
            evaluation = jacobian_minors(sys, point)
            sigma = chart_sigma_min(sys, point)
            entry["sigma_min"] = sigma
            entry["singular"] = evaluation.singular() or sigma < sigma_threshold
            if entry["singular"]:
                singular.append((point, 0.0, sigma))
        results[name] = entry
    if len(sys.factor_dims) == 1:
        width = sys.factor_dims[0]
        flag = any(p.coefficients.get((p.multidegree[0],) + (0,) * width, 0) != 0 for p in sys.polys)
        first = results["[1" + ":0" * width + "]"]
        if flag == first["on_zero_set"]:
            logger.warning("Branched-cover flag disagrees with exact evaluation at [1:0:...:0]")
        results["first_point_excluded"] = flag
    return results, singular


def smoothness_scan(sys, num_samples, seed=0, sigma_threshold=SIGMA_THRESHOLD, workers=1):
    """
    Monte Carlo smoothness probe: project random points onto the zero set and
    record the smallest chart-Jacobian singular value.

    :param sys: PolySystem.
    :param num_samples: Random draws.
    :param seed: Base seed; sample k uses the stream (seed, k).
    :param sigma_threshold: Flag samples below this value.
    :param workers: Thread pool size.
    :return: SmoothnessReport
    """
    logger.info(f"Scanning smoothness with {num_samples} samples (seed={seed}, workers={workers})")
    indices = range(num_samples)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: _scan_one(sys, seed, k), indices))
    else:
        results = [_scan_one(sys, seed, k) for k in indices]
    converged = [result for result in results if result is not None]
    if not converged:
        logger.error("No sample converged onto the zero set")
        raise NoConvergentSamplesError("No sample converged onto the zero set")
    logger.info(f"{len(converged)} of {num_samples} samples converged")
    failures = [(r.point, r.residual, r.sigma_min) for r in converged if r.sigma_min < sigma_threshold]
    special, singular = _special_point_results(sys, sigma_threshold)
    failures.extend(singular)
    if failures:
        logger.warning(f"{len(failures)} point(s) fall below sigma threshold {sigma_threshold}")
    return SmoothnessReport(
        samples_requested=num_samples,
        samples_tested=len(converged),
        min_singular_value=min(r.sigma_min for r in converged),
        failures=tuple(failures),
        special_point_results=special,
        sigma_threshold=sigma_threshold,
        seed=seed,
    )


###############################################################################
### Involutions and Charts
###############################################################################
def involution_maps(z):
    """
    a negates z_{0,0}; c conjugates every coordinate.

    :param z: ProjectivePoint.
    :return: (a(z), c(z))
    """
    negated = [np.array(v) for v in z.coords]
    negated[0][0] = -negated[0][0]
    return ProjectivePoint(tuple(negated)), ProjectivePoint(tuple(np.conj(v) for v in z.coords))


def _random_exact_point(rng, width):
    def rational():
        return Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 8)))

    return [ExactComplex(rational(), rational()) for _ in range(width)]


def invariance_check(sys, num_samples=8, seed=0):
    """
    p(a z) = p(z) and p(c z) = conj(p(z)) as polynomial identities, cross-checked
    on random Gaussian-rational points.

    :return: bool
    """
    logger.info("Checking invariance under the involutions")
    a_identity = all(e[0] % 2 == 0 for p in sys.polys for e, _ in p.terms)
    c_identity = all(isinstance(c, Fraction) for p in sys.polys for _, c in p.terms)
    rng = np.random.default_rng(seed)
    sampled_a = sampled_c = True
    for _ in range(num_samples):
        z = _random_exact_point(rng, sys.width)
        az = [-z[0]] + z[1:]
        cz = [value.conjugate() for value in z]
        for p in sys.polys:
            value = p.evaluate_exact(z)
            sampled_a &= p.evaluate_exact(az) == value
            sampled_c &= p.evaluate_exact(cz) == value.conjugate()
    if (sampled_a, sampled_c) != (a_identity, c_identity):
        logger.warning("Sampled invariance disagrees with the coefficient comparison")
    return a_identity and c_identity


class Chart:
    """
    Implicit-function chart on the zero set near the point whose factors are all
    [0:...:0:1]. Affine coordinates are the non-last coordinates of each factor;
    perm lists affine indices as free slots followed by dependent slots.
    """

    def __init__(self, sys, perm=None, radius=CHART_RADIUS):
        self.sys = sys
        self.radius = radius
        last = set(sys.last_indices)
        self.affine = [index for index in range(sys.width) if index not in last]
        self.base = np.zeros(sys.width, dtype=complex)
        self.base[list(last)] = 1.0
        exact_base = [Fraction(int(value.real)) for value in self.base]
        if not all(p.evaluate_exact(exact_base).is_zero() for p in sys.polys):
            logger.error("Chart base point is not on the zero set")
            raise SingularChartBlockError("Base point [0:...:0:1] is not on the zero set")
        jacobian = sys.jacobian(self.base)[:, self.affine]
        n, m = sys.n, sys.m
        if perm is None:
            _, _, pivots = linalg.qr(jacobian[:, 1:], pivoting=True)
            dependent = [1 + int(p) for p in pivots[:m]]
            perm = [0] + sorted(set(range(1, n)) - set(dependent)) + dependent
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(n)) or perm[0] != 0:
            logger.error(f"Invalid chart permutation {perm}")
            raise SingularChartBlockError(f"Chart permutation must fix 0, got {perm}")
        self.perm = perm
        self.free_slots = perm[: n - m]
        self.dependent_slots = perm[n - m :]
        self.free_flat = [self.affine[k] for k in self.free_slots]
        self.dependent_flat = [self.affine[k] for k in self.dependent_slots]
        block = jacobian[:, self.dependent_slots]
        condition = np.linalg.cond(block)
        if not np.isfinite(condition) or condition >= MAX_CONDITION:
            logger.error(f"Chart block is singular (condition {condition:.3e})")
            raise SingularChartBlockError(f"Chart block condition number {condition:.3e}")

    @property
    def dimension(self):
        return self.sys.n - self.sys.m

    def assemble(self, free, dependent):
        x = self.base.copy()
        x[self.free_flat] = free
        x[self.dependent_flat] = dependent
        return x

    def solve(self, free):
        """Dependent coordinates P(free) by Newton iteration from 0."""
        free = np.asarray(free, dtype=complex)
        if np.linalg.norm(free) >= self.radius:
            logger.error(f"Free coordinates |w|={np.linalg.norm(free):.3f} exceed the chart radius")
            raise NewtonDivergenceError(f"|free| must be below the chart radius {self.radius}")
        dependent = np.zeros(self.sys.m, dtype=complex)
        for _ in range(MAX_ITERATIONS):
            x = self.assemble(free, dependent)
            values = self.sys.values(x)
            if np.max(np.abs(values)) < NEWTON_TOL:
                return dependent
            step = np.linalg.solve(self.sys.jacobian(x)[:, self.dependent_flat], values)
            dependent = dependent - step
            if not np.all(np.isfinite(dependent)) or np.linalg.norm(dependent) > 1.0 / self.radius:
                break
        logger.error("Chart Newton iteration diverged")
        raise NewtonDivergenceError("Newton iteration left the chart basin")

    def lift(self, free):
        return ProjectivePoint.from_flat(self.assemble(free, self.solve(free)), self.sys.factor_dims)

    def coordinates(self, point):
        """Affine coordinates (free, dependent) of a point near the base point."""
        flat = np.concatenate([v / v[-1] for v in point.coords])
        return flat[self.free_flat], flat[self.dependent_flat]


def chart_newton(sys, free, perm=None):
    """
    Dependent chart coordinates P(free) with p(free, P(free)) = 0.

    :param sys: PolySystem vanishing at [0:...:0:1].
    :param free: n - m complex free coordinates, z_{0,0} first.
    :param perm: Chart permutation with perm[0] == 0 (greedy pivoting by default).
    :return: Complex array of the m dependent coordinates.
    """
    return Chart(sys, perm).solve(free)


def local_action_check(sys, num_samples=100, radius=0.1, seed=0):
    """
    Chart residuals of a and c against (-w_0, w_1, ...) and conj(w).

    :return: (res_a, res_c)
    """
    logger.info(f"Checking local involution action with {num_samples} samples")
    chart = Chart(sys)
    rng = np.random.default_rng(seed)
    k = chart.dimension
    res_a = res_c = 0.0
    for sample in range(num_samples):
        direction = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        w = direction / np.linalg.norm(direction) * radius * rng.uniform() if sample else np.zeros(k, complex)
        image_a, image_c = involution_maps(chart.lift(w))
        expected_a = w.copy()
        expected_a[0] = -expected_a[0]
        for image, expected, which in ((image_a, expected_a, "a"), (image_c, np.conj(w), "c")):
            free, dependent = chart.coordinates(image)
            residual = max(
                float(np.max(np.abs(free - expected))),
                float(np.max(np.abs(chart.solve(expected) - dependent))),
            )
            if which == "a":
                res_a = max(res_a, residual)
            else:
                res_c = max(res_c, residual)
    logger.info(f"Local action residuals: a={res_a:.3e}, c={res_c:.3e}")
    return res_a, res_c


@dataclass(frozen=True)
class FixedPointDifferentials:
    da: np.ndarray
    dc: np.ndarray
    fd_residual: float

    def __iter__(self):
        return iter((self.da, self.dc))

    @property
    def orientation_preserving(self):
        return bool(np.linalg.det(self.dc) > 0)


def chart_action(chart, which):
    """Real chart representative v -> phi^-1(g(phi(v))) of the involution `which`."""

    def forward(v):
        v = np.asarray(v, dtype=float)
        w = v[0::2] + 1j * v[1::2]
        image_a, image_c = involution_maps(chart.lift(w))
        free, _ = chart.coordinates(image_a if which == "a" else image_c)
        out = np.empty(2 * len(free))
        out[0::2], out[1::2] = free.real, free.imag
        return out

    return forward


def differentials_at_fixed_point(sys, step=1e-6):
    """
    Real differentials of a and c at [0:...:0:1] in chart coordinates
    (Re w_0, Im w_0, Re w_1, ...), checked against finite differences.

    :return: FixedPointDifferentials (unpacks as (da, dc))
    """
    chart = Chart(sys)
    k = chart.dimension
    da = np.eye(2 * k)
    da[0, 0] = da[1, 1] = -1.0
    dc = np.diag([1.0, -1.0] * k)
    residual = 0.0
    for matrix, which in ((da, "a"), (dc, "c")):
        forward = chart_action(chart, which)
        columns = []
        for index in range(2 * k):
            offset = np.zeros(2 * k)
            offset[index] = step
            columns.append((forward(offset) - forward(-offset)) / (2 * step))
        residual = max(residual, float(np.max(np.abs(np.column_stack(columns) - matrix))))
    logger.info(f"Fixed-point differentials cross-validated (residual {residual:.3e})")
    return FixedPointDifferentials(da, dc, residual)


###############################################################################
### Parity and Families
###############################################################################
def parity_condition(n_tuple, d_matrix):
    """
    Columns i with (m_i == 0 or m - 2 m_i >= n - 2 n_i) and m_i < n_i, where m_i
    counts the odd entries of column i.

    :param n_tuple: (n_0, ..., n_nu).
    :param d_matrix: m rows of nu + 1 positive integers.
    :return: List of feasible column indices.
    """
    n_tuple = tuple(int(value) for value in n_tuple)
    rows = [tuple(int(value) for value in row) for row in d_matrix]
    if not n_tuple or any(value < 1 for value in n_tuple):
        raise BadShapeError(f"Factor dimensions must be positive, got {n_tuple}")
    if not rows or any(len(row) != len(n_tuple) for row in rows):
        raise BadShapeError(f"Degree matrix must have {len(n_tuple)} columns")
    if any(value < 1 for row in rows for value in row):
        raise BadShapeError("Degree entries must be positive")
    m, n = len(rows), sum(n_tuple)
    if m >= n:
        raise BadShapeError(f"Need m < n, got m={m}, n={n}")
    feasible = []
    for column, n_i in enumerate(n_tuple):
        m_i = sum(row[column] % 2 for row in rows)
        if (m_i == 0 or m - 2 * m_i >= n - 2 * n_i) and m_i < n_i:
            feasible.append(column)
    return feasible


def _require(params, key):
    if key not in params:
        logger.error(f"Missing family parameter {key}")
        raise ConfigError(f"Missing family parameter {key!r}")
    return params[key]


def hypersurface_xd(d, n=3):
    if d < 2 or n < 2:
        raise BadDegreesError(f"Xd needs d >= 2 and n >= 2, got d={d}, n={n}")
    terms = {}
    for index in range(n):
        exponents = [0] * (n + 1)
        exponents[index] = d
        terms[tuple(exponents)] = 1
    exponents = [0] * (n + 1)
    exponents[n - 1], exponents[n] = 1, d - 1
    terms[tuple(exponents)] = terms.get(tuple(exponents), 0) + 1
    return PolySystem((MultiHomogeneousPolynomial.from_terms((n,), terms),))


def hypersurface_x2mn(m, n):
    """z00^2 p1 + z01^2 p2 in P^1 x P^1 x P^1, pi replaced by 355/113."""
    if m < 1 or n < 1:
        raise BadDegreesError(f"X2mn needs m, n >= 1, got m={m}, n={n}")

    def term(z00, z01, z10, z11, z20, z21):
        return (z00, z01, z10, z11, z20, z21)

    p1 = [((m, 0, n, 0), 1), ((0, m, n, 0), 2), ((m, 0, 0, n), 3), ((0, m, 0, n), PI_SURROGATE)]
    p2 = [((m, 0, n, 0), 1), ((0, m, n, 0), 1), ((m, 0, 0, n), 1), ((1, m - 1, 0, n), 1)]
    terms = [(term(2, 0, *e), c) for e, c in p1] + [(term(0, 2, *e), c) for e, c in p2]
    poly = MultiHomogeneousPolynomial.from_terms((1, 1, 1), terms)
    return PolySystem((poly,), notes=(f"coefficient pi replaced by {PI_SURROGATE}",))


def family_catalog(name, params=None):
    """
    Builds a named family.

    :param name: Xd, X2mn, qA or custom.
    :param params: Family parameters.
    :return: PolySystem
    """
    params = dict(params or {})
    logger.info(f"Building family {name} with parameters {params}")
    if name == "Xd":
        return hypersurface_xd(int(_require(params, "d")), int(params.get("n", 3)))
    if name == "X2mn":
        return hypersurface_x2mn(int(_require(params, "m")), int(_require(params, "n")))
    if name == "qA":
        return witness_qA(_require(params, "d"), int(_require(params, "n")))
    if name == "custom":
        dims = normalize_dims(_require(params, "factor_dims"))
        if "path" in params:
            return parse_poly_file(params["path"], dims)
        return PolySystem(tuple(parse_poly(text, dims) for text in _require(params, "polys")))
    logger.error(f"Unknown family {name}")
    raise UnknownFamilyError(f"Unknown family {name!r}; expected one of {', '.join(FAMILIES)}")


def surface_invariants(sys):
    """
    c_1 coefficient, signature, Euler characteristic and spin flag of a
    complete intersection surface in a single projective space.

    :return: dict, or None when the system is not a single-factor surface.
    """
    if len(sys.factor_dims) != 1 or sys.n - sys.m != 2:
        return None
    degrees = [p.multidegree[0] for p in sys.polys]
    n = sys.n
    total, product = sum(degrees), prod(degrees)
    c1 = total - n - 1
    signature = Fraction((n + 1 - sum(d * d for d in degrees)) * product, 3)
    pairs = sum(degrees[i] * degrees[j] for i in range(len(degrees)) for j in range(i, len(degrees)))
    euler = product * (comb(n + 1, 2) - (n + 1) * total + pairs)
    return {
        "c1_coefficient": c1,
        "signature": int(signature) if signature.denominator == 1 else float(signature),
        "euler_characteristic": euler,
        "spin": c1 % 2 == 0,
    }
