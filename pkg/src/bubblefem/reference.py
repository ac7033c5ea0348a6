"""Reference-triangle polynomial bases and numerical quadrature.

The reference triangle is ``T_hat = {(x, y) : x >= 0, y >= 0, x + y <= 1}``
with vertices ``(0,0), (1,0), (0,1)``; reference edges carry the local
numbering "edge i is opposite vertex i".  Edge quadrature lives on the
parameter interval ``[0, 1]``.

Basis functions are stored as coefficient matrices over a monomial basis,
so values and gradients can be evaluated at arbitrary points (needed for
facet quadrature, where points differ per facet).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_QUAD_DEGREE = 20

#: Barycentric coordinates of the reference triangle evaluated symbolically:
#: lam0 = 1 - x - y, lam1 = x, lam2 = y.


def monomial_exponents(degree):
    """Exponent pairs (a, b) with a + b <= degree, graded ordering."""
    return [(s - b, b) for s in range(degree + 1) for b in range(s + 1)]


def _eval_monomials(exps, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    return np.stack([x**a * y**b for a, b in exps], axis=1)


def _eval_monomial_gradients(exps, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    out = np.zeros((len(points), len(exps), 2))
    for j, (a, b) in enumerate(exps):
        if a:
            out[:, j, 0] = a * x ** (a - 1) * y**b
        if b:
            out[:, j, 1] = b * x**a * y ** (b - 1)
    return out


class ReferenceBasis:
    """A set of polynomial basis functions on the reference triangle.

    Attributes
    ----------
    family : str
        'lagrange', 'bubble' or 'enriched'.
    degree : int
        Maximal total polynomial degree.
    count : int
        Number of basis functions.
    nodes : ndarray or None
        Nodal points for Lagrange families (Kronecker property holds
        there), None for bubbles.
    """

    def __init__(self, family, degree, coeffs, exps, nodes=None):
        self.family = family
        self.degree = degree
        self._coeffs = coeffs  # (n_monomials, count)
        self._exps = exps
        self.nodes = None if nodes is None else np.asarray(nodes, dtype=float)
        self.count = coeffs.shape[1]

    def evaluate(self, points):
        """Basis values, shape (npoints, count)."""
        return _eval_monomials(self._exps, points) @ self._coeffs

    def gradient(self, points):
        """Basis gradients, shape (npoints, count, 2)."""
        g = _eval_monomial_gradients(self._exps, points)
        return np.einsum("nmd,mc->ncd", g, self._coeffs)


def _lagrange_nodes(p):
    # Vertices, then (p-1) nodes per edge walking edge i from vertex
    # (i+1)%3 towards (i+2)%3, then interior nodes.
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = [verts[0], verts[1], verts[2]]
    for i in range(3):
        a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
        for m in range(1, p):
            nodes.append(a + (b - a) * m / p)
    if p >= 3:
        # total degree 3 has a single interior node at the barycenter
        nodes.append(np.array([1.0, 1.0]) / 3.0)
    return np.array(nodes)


def lagrange_basis(p):
    """Nodal Lagrange basis of total degree p on the reference triangle.

    Supported degrees are 1 to 3.  Node layout: the three vertices, then
    p-1 nodes per edge (local edge i opposite vertex i, walked from
    vertex (i+1)%3 to (i+2)%3), then interior nodes.
    """
    if p not in (1, 2, 3):
        raise ValueError(f"lagrange degree must be 1, 2 or 3, got {p}")
    exps = monomial_exponents(p)
    nodes = _lagrange_nodes(p)
    vander = _eval_monomials(exps, nodes)
    coeffs = np.linalg.inv(vander)
    return ReferenceBasis("lagrange", p, coeffs, exps, nodes=nodes)


def bubble_basis(k):
    """Interior bubble basis of degree k: lam0*lam1*lam2 times P^{k-3}.

    Every function vanishes identically on the triangle boundary; the
    count is (k-1)(k-2)/2.  Requires k >= 3.
    """
    if k < 3:
        raise ValueError(f"bubble degree must be >= 3, got {k}")
    exps = monomial_exponents(k)
    index = {e: i for i, e in enumerate(exps)}
    # lam0*lam1*lam2 = x*y*(1 - x - y) = xy - x^2 y - x y^2
    cubic = {(1, 1): 1.0, (2, 1): -1.0, (1, 2): -1.0}
    cols = []
    for a, b in monomial_exponents(k - 3):
        col = np.zeros(len(exps))
        for (c, d), w in cubic.items():
            col[index[(a + c, b + d)]] += w
        cols.append(col)
    coeffs = np.stack(cols, axis=1)
    return ReferenceBasis("bubble", k, coeffs, exps)


def combine_bases(*bases):
    """Stack bases into one (used for the bubble-enriched local basis)."""
    degree = max(b.degree for b in bases)
    exps = monomial_exponents(degree)
    index = {e: i for i, e in enumerate(exps)}
    cols = []
    for b in bases:
        lifted = np.zeros((len(exps), b.count))
        for i, e in enumerate(b._exps):
            lifted[index[e]] = b._coeffs[i]
        cols.append(lifted)
    return ReferenceBasis("enriched", degree, np.hstack(cols), exps)


@dataclass(frozen=True)
class QuadratureRule:
    """Positive-weight quadrature rule exact up to ``exact_degree``.

    Triangle rules carry (n, 2) reference points and weights summing to
    the reference area 1/2; edge rules carry (n,) parameters in [0, 1]
    and weights summing to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int


def triangle_rule(degree):
    """Conical-product Gauss rule on the reference triangle.

    Gauss-Jacobi (weight 1-x) in the first direction crossed with
    Gauss-Legendre in the collapsed direction; all weights positive.
    """
    if degree > MAX_QUAD_DEGREE:
        raise ValueError(f"triangle rule degree {degree} exceeds {MAX_QUAD_DEGREE}")
    n = max(1, math.ceil((degree + 1) / 2))
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    x = (1.0 + xj) / 2.0
    s = (1.0 + xl) / 2.0
    pts = np.empty((n * n, 2))
    wts = np.empty(n * n)
    for j in range(n):
        for i in range(n):
            pts[j * n + i, 0] = x[j]
            pts[j * n + i, 1] = (1.0 - x[j]) * s[i]
            wts[j * n + i] = (wj[j] / 4.0) * (wl[i] / 2.0)
    return QuadratureRule(pts, wts, 2 * n - 1)


def edge_rule(degree):
    """Gauss-Legendre rule on the parameter interval [0, 1]."""
    if degree > MAX_QUAD_DEGREE:
        raise ValueError(f"edge rule degree {degree} exceeds {MAX_QUAD_DEGREE}")
    n = max(1, math.ceil((degree + 1) / 2))
    xl, wl = roots_legendre(n)
    return QuadratureRule((1.0 + xl) / 2.0, wl / 2.0, 2 * n - 1)
