"""Global degree-of-freedom management and discrete functions.

Space kinds:

* ``trial_lagrange(p)`` -- continuous Lagrange space of degree p;
* ``bubble(k)`` -- per-cell interior bubbles of degree k (k >= 3);
* ``enriched(p, k)`` -- the sum of the two, with nested numbering: the
  first ``dim(trial)`` DoFs coincide with the trial space, so a trial
  function injects by zero-padding.  For k <= p the bubble block is
  empty and the enriched space degenerates to the trial space;
* ``broken_lagrange(p)`` -- elementwise Lagrange space without
  continuity, kept minimal to support Oswald-interpolation tests.

DoF numbering is deterministic: vertex DoFs by vertex index, edge DoFs
by the lexicographic edge order (walked from the smaller to the larger
vertex index), cell-interior DoFs by cell index.
"""

from dataclasses import dataclass

import numpy as np

from .reference import bubble_basis, combine_bases, lagrange_basis


@dataclass(frozen=True)
class SpaceKind:
    family: str
    p: int = 0
    k: int = 0


def trial_lagrange(p):
    return SpaceKind("lagrange", p=p)


def bubble(k):
    return SpaceKind("bubble", k=k)


def enriched(p, k):
    return SpaceKind("enriched", p=p, k=k)


def broken_lagrange(p):
    return SpaceKind("broken", p=p)


class FunctionSpace:
    """DoF layout of a discrete space over a mesh.

    Attributes
    ----------
    dim : int
        Global DoF count.
    cell_dofs : (ncells, nlocal) int array
        Global DoF indices per cell, ordered like the local basis.
    local_basis : ReferenceBasis
        Reference basis matching the cell_dofs layout.
    n_trial : int
        Size of the leading trial block (enriched spaces), else dim for
        Lagrange spaces and 0 for bubble/broken spaces.
    """

    def __init__(self, mesh, kind, dim, cell_dofs, local_basis, n_trial):
        self.mesh = mesh
        self.kind = kind
        self.dim = dim
        self.cell_dofs = cell_dofs
        self.local_basis = local_basis
        self.n_trial = n_trial
        self.cell_dofs.setflags(write=False)

    @property
    def max_degree(self):
        return self.local_basis.degree


def _lagrange_dofs(mesh, p):
    nv = len(mesh.vertices)
    nc = len(mesh.cells)
    per_edge = p - 1
    n_interior = (p + 1) * (p + 2) // 2 - 3 - 3 * per_edge
    dim = nv + per_edge * len(mesh.edges) + n_interior * nc
    nloc = (p + 1) * (p + 2) // 2
    dofs = np.empty((nc, nloc), dtype=np.int64)
    dofs[:, :3] = mesh.cells
    col = 3
    for i in range(3):  # local edge i, walked (i+1)%3 -> (i+2)%3
        a = mesh.cells[:, (i + 1) % 3]
        b = mesh.cells[:, (i + 2) % 3]
        base = nv + mesh.cell_edges[:, i] * per_edge
        for m in range(per_edge):
            # global slots run from the smaller to the larger vertex id
            slot = np.where(a < b, m, per_edge - 1 - m)
            dofs[:, col] = base + slot
            col += 1
    for m in range(n_interior):
        dofs[:, col] = nv + per_edge * len(mesh.edges) + np.arange(nc) * n_interior + m
        col += 1
    return dim, dofs


def build_space(mesh, kind):
    """Construct the DoF layout for a space kind on a mesh."""
    if kind.family == "lagrange":
        dim, dofs = _lagrange_dofs(mesh, kind.p)
        return FunctionSpace(mesh, kind, dim, dofs, lagrange_basis(kind.p), dim)

    if kind.family == "broken":
        basis = lagrange_basis(kind.p)
        nc = len(mesh.cells)
        dofs = np.arange(nc * basis.count, dtype=np.int64).reshape(nc, basis.count)
        return FunctionSpace(mesh, kind, nc * basis.count, dofs, basis, 0)

    if kind.family == "bubble":
        basis = bubble_basis(kind.k)
        nc = len(mesh.cells)
        dofs = np.arange(nc * basis.count, dtype=np.int64).reshape(nc, basis.count)
        return FunctionSpace(mesh, kind, nc * basis.count, dofs, basis, 0)

    if kind.family == "enriched":
        trial_dim, trial_dofs = _lagrange_dofs(mesh, kind.p)
        if kind.k <= kind.p:
            # bubbles of degree <= p already lie in the trial space
            return FunctionSpace(
                mesh, kind, trial_dim, trial_dofs, lagrange_basis(kind.p), trial_dim
            )
        bub = bubble_basis(kind.k)
        nc = len(mesh.cells)
        bub_dofs = trial_dim + np.arange(nc * bub.count, dtype=np.int64).reshape(nc, bub.count)
        dofs = np.hstack([trial_dofs, bub_dofs])
        basis = combine_bases(lagrange_basis(kind.p), bub)
        return FunctionSpace(mesh, kind, trial_dim + nc * bub.count, dofs, basis, trial_dim)

    raise ValueError(f"unknown space family {kind.family!r}")


class DiscreteFunction:
    """Coefficient vector over a function space."""

    def __init__(self, space, coefficients=None):
        self.space = space
        if coefficients is None:
            coefficients = np.zeros(space.dim)
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (space.dim,):
            raise ValueError("coefficient vector length does not match space dim")

    def evaluate(self, points):
        """Point values anywhere in the domain (locates cells first)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.space.mesh.locate(points)
        return values_in_cells(self, cells, points)

    def evaluate_gradient(self, points):
        """Point gradients anywhere in the domain, shape (npoints, 2)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.space.mesh.locate(points)
        return gradients_in_cells(self, cells, points)


def values_in_cells(fn, cells, points):
    """Values at physical points with known containing cells."""
    xi = fn.space.mesh.to_reference(cells, points)
    phi = fn.space.local_basis.evaluate(xi)  # (n, nloc)
    coeffs = fn.coefficients[fn.space.cell_dofs[cells]]
    return np.einsum("ni,ni->n", coeffs, phi)


def gradients_in_cells(fn, cells, points):
    """Gradients at physical points with known containing cells."""
    mesh = fn.space.mesh
    xi = mesh.to_reference(cells, points)
    gref = fn.space.local_basis.gradient(xi)  # (n, nloc, 2)
    _, _, Jinv, _ = mesh.affine
    coeffs = fn.coefficients[fn.space.cell_dofs[cells]]
    # physical gradient: Jinv^T applied to the reference gradient
    gref_c = np.einsum("ni,nie->ne", coeffs, gref)
    return np.einsum("ned,ne->nd", Jinv[cells], gref_c)


def quad_values(fn, ref_points):
    """Values at the same reference points in every cell, shape (nc, nq)."""
    phi = fn.space.local_basis.evaluate(ref_points)  # (nq, nloc)
    coeffs = fn.coefficients[fn.space.cell_dofs]  # (nc, nloc)
    return coeffs @ phi.T


def quad_gradients(fn, ref_points):
    """Physical gradients at reference points in every cell, (nc, nq, 2)."""
    gref = fn.space.local_basis.gradient(ref_points)  # (nq, nloc, 2)
    coeffs = fn.coefficients[fn.space.cell_dofs]
    gref_c = np.einsum("ci,qie->cqe", coeffs, gref)
    _, _, Jinv, _ = fn.space.mesh.affine
    return np.einsum("ced,cqe->cqd", Jinv, gref_c)


def inject_trial(fn, target):
    """Zero-pad a trial function into its bubble enrichment.

    The pointwise values are unchanged because the enriched numbering
    nests the trial DoFs first.
    """
    src = fn.space
    if target.mesh is not src.mesh:
        raise ValueError("spaces live on different meshes")
    if src.kind.family != "lagrange" or target.kind.family != "enriched":
        raise ValueError("inject_trial maps a Lagrange space into its enrichment")
    if target.kind.p != src.kind.p or target.n_trial != src.dim:
        raise ValueError("target is not an enrichment of the source space")
    out = DiscreteFunction(target)
    out.coefficients[: src.dim] = fn.coefficients
    return out
