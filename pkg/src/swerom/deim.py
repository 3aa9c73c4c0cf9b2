"""Hyper-reduction of the nonlinear terms by discrete empirical interpolation.

Each nonlinear term gets its own orthonormal basis V (left singular vectors
of its raw, uncentered snapshot matrix), its own greedily selected sample
points, and a precomputed oblique projector E = W^T V (P^T V)^{-1}. On-line
evaluation then needs the term's componentwise products only at the m
sampled mesh rows. Selection matrices are never formed; P^T is row
gathering throughout.

The same sampled factors also yield coefficient tensors by summing over
the m sampled rows instead of all n mesh rows, which is what makes the
off-line stage cheap: the contraction of those tensors reproduces the
sampled evaluation exactly (same algebra, reordered), even though the
tensors themselves differ from the full-sum ones.

Operator file layout (little-endian): header ``{magic b"DEIMOP1\\0", n, m,
k, term tag}``, then the points as int64, the spectrum, V and E as float64,
and per product the variable tags, scale factor, and sampled arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from swerom.errors import FileFormatError
from swerom.model import TERMS, TERM_EQUATION, TERM_NAMES
from swerom.rom import ProductTensors, ReducedSpace, TensorCoefficients, TermTensors

__all__ = [
    "deim_select_points",
    "deim_projection",
    "SampledProduct",
    "DeimTermOperator",
    "build_deim_term_operator",
    "deim_operators_from_snapshots",
    "deim_nonlinear",
    "deim_tensor_coefficients",
    "save_deim_operator",
    "load_deim_operator",
]


def deim_select_points(V: np.ndarray) -> np.ndarray:
    """Greedy interpolation points for an n-by-m basis with independent columns.

    The first point maximizes |V[:, 0]|; each later point maximizes the
    residual of column j against its interpolation on the points selected so
    far. Ties break to the lowest index (first maximizer).
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] < 1:
        raise ValueError("basis must be n-by-m with m >= 1")
    n, m = V.shape
    points = np.empty(m, dtype=np.int64)
    points[0] = int(np.argmax(np.abs(V[:, 0])))
    for j in range(1, m):
        sel = points[:j]
        try:
            c = np.linalg.solve(V[sel, :j], V[sel, j])
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                f"singular interpolation system at selection stage {j}")
        r = V[:, j] - V[:, :j] @ c
        if np.max(np.abs(r)) <= 1e-13 * max(1.0, np.max(np.abs(V[:, j]))):
            raise np.linalg.LinAlgError(
                f"degenerate interpolation residual at selection stage {j}: "
                "basis columns are linearly dependent")
        points[j] = int(np.argmax(np.abs(r)))
        if points[j] in sel:
            raise np.linalg.LinAlgError(
                f"degenerate residual at selection stage {j}: duplicate point")
    return points


def deim_projection(W: np.ndarray, V: np.ndarray, points: np.ndarray
                    ) -> tuple[np.ndarray, float]:
    """E = W^T V (P^T V)^{-1} with P^T realized as row gathering.

    Returns the k-by-m projector and the condition number of P^T V.
    """
    PtV = V[points, :]
    cond = float(np.linalg.cond(PtV))
    try:
        E = np.linalg.solve(PtV.T, (W.T @ V).T).T
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("sampled basis P^T V is singular")
    return E, cond


@dataclass
class SampledProduct:
    """One product of a term, restricted to the sample rows."""

    a_var: str
    b_var: str
    coef: float
    Uam: np.ndarray   # (m, k_a) rows of the a basis
    Ubxm: np.ndarray  # (m, k_b) rows of the differentiated b basis
    am: np.ndarray    # (m,) mean of a at the points
    bxm: np.ndarray   # (m,) differentiated mean of b at the points


@dataclass
class DeimTermOperator:
    """Everything needed to evaluate one nonlinear term from m samples."""

    term: str
    V: np.ndarray
    points: np.ndarray
    E: np.ndarray
    cond: float
    sigma: np.ndarray
    products: list[SampledProduct]
    n: int

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def evaluate(self, xt) -> np.ndarray:
        samples = np.zeros(self.m)
        for p in self.products:
            samples += p.coef * ((p.am + p.Uam @ xt[p.a_var])
                                 * (p.bxm + p.Ubxm @ xt[p.b_var]))
        return self.E @ samples


def build_deim_term_operator(space: ReducedSpace, term: str, V: np.ndarray,
                             points: np.ndarray,
                             sigma: np.ndarray | None = None) -> DeimTermOperator:
    points = np.asarray(points, dtype=np.int64)
    if len(np.unique(points)) != points.shape[0]:
        raise ValueError("sample points must be distinct")
    if points.min() < 0 or points.max() >= space.n:
        raise ValueError("sample points out of mesh range")
    W = space.bases[TERM_EQUATION[term]].W
    E, cond = deim_projection(W, V, points)
    products = []
    for coef, avar, bvar, axis in TERMS[term]:
        ba = space.bases[avar]
        products.append(SampledProduct(
            a_var=avar, b_var=bvar, coef=coef,
            Uam=ba.U[points, :].copy(),
            Ubxm=space.dbasis[bvar, axis][points, :].copy(),
            am=ba.xbar[points].copy(),
            bxm=space.dmean[bvar, axis][points].copy()))
    sigma = sigma if sigma is not None else np.zeros(0)
    return DeimTermOperator(term=term, V=np.asarray(V, dtype=float), points=points,
                            E=E, cond=cond, sigma=np.asarray(sigma, dtype=float),
                            products=products, n=space.n)


def deim_operators_from_snapshots(space: ReducedSpace,
                                  nonlinear_snaps: dict[str, np.ndarray],
                                  m: int) -> dict[str, DeimTermOperator]:
    """One operator per term: SVD of its raw snapshots, then greedy points."""
    ops = {}
    for term in TERM_NAMES:
        snaps = nonlinear_snaps[term]
        if m > min(snaps.shape):
            raise ValueError(f"m={m} exceeds snapshot count/rank bound "
                             f"{min(snaps.shape)} for {term}")
        Vfull, s, _ = np.linalg.svd(snaps, full_matrices=False)
        V = Vfull[:, :m]
        points = deim_select_points(V)
        ops[term] = build_deim_term_operator(space, term, V, points, sigma=s)
    return ops


def deim_nonlinear(term: str, xt, op: DeimTermOperator) -> np.ndarray:
    """Sampled evaluation of one term (see DeimTermOperator.evaluate)."""
    if op.term != term:
        raise ValueError(f"operator was built for {op.term!r}, not {term!r}")
    return op.evaluate(xt)


def deim_tensor_coefficients(ops: dict[str, DeimTermOperator],
                             space: ReducedSpace) -> TensorCoefficients:
    """Coefficient tensors summed over the m sampled rows only.

    Contracting these against xt reproduces the sampled evaluation exactly;
    they are cheaper to build than the full-sum tensors whenever m << n and
    serve as the Newton matrices of the sampled reduced model.
    """
    terms = {}
    for name in TERM_NAMES:
        op = ops[name]
        products = []
        for p in op.products:
            quad = p.coef * np.einsum("il,lp,lq->ipq", op.E, p.Uam, p.Ubxm,
                                      optimize=True)
            lin_a = p.coef * (op.E @ (p.bxm[:, None] * p.Uam))
            lin_b = p.coef * (op.E @ (p.am[:, None] * p.Ubxm))
            const = p.coef * (op.E @ (p.am * p.bxm))
            products.append(ProductTensors(a_var=p.a_var, b_var=p.b_var, coef=p.coef,
                                           quad=quad, lin_a=lin_a, lin_b=lin_b,
                                           const=const))
        terms[name] = TermTensors(term=name, products=products)
    return TensorCoefficients(
        terms=terms,
        coriolis_uv=space.coriolis_uv, coriolis_vu=space.coriolis_vu,
        coriolis_u0=space.coriolis_u0, coriolis_v0=space.coriolis_v0,
        k={var: space.k(var) for var in ("u", "v", "phi")}, built_from="sampled")


# --- operator file ---------------------------------------------------------------

_MAGIC = b"DEIMOP1\0"
_HEADER = struct.Struct("<8sqqq8s")


def save_deim_operator(op: DeimTermOperator, path) -> None:
    k = op.E.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, op.n, op.m, k, op.term.encode().ljust(8, b"\0")))
        fh.write(np.asarray(op.points, dtype="<i8").tobytes())
        fh.write(struct.pack("<qd", op.sigma.shape[0], op.cond))
        fh.write(np.asarray(op.sigma, dtype="<f8").tobytes())
        fh.write(np.asarray(op.V, dtype="<f8").tobytes(order="F"))
        fh.write(np.asarray(op.E, dtype="<f8").tobytes(order="F"))
        fh.write(struct.pack("<q", len(op.products)))
        for p in op.products:
            fh.write(p.a_var.encode().ljust(8, b"\0"))
            fh.write(p.b_var.encode().ljust(8, b"\0"))
            fh.write(struct.pack("<dqq", p.coef, p.Uam.shape[1], p.Ubxm.shape[1]))
            fh.write(np.asarray(p.Uam, dtype="<f8").tobytes(order="F"))
            fh.write(np.asarray(p.Ubxm, dtype="<f8").tobytes(order="F"))
            fh.write(np.asarray(p.am, dtype="<f8").tobytes())
            fh.write(np.asarray(p.bxm, dtype="<f8").tobytes())


def load_deim_operator(path) -> DeimTermOperator:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FileFormatError("truncated operator file")
        magic, n, m, k, tag = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FileFormatError(f"bad operator magic {magic!r}")

        def read_f8(count, what, shape=None):
            data = fh.read(8 * count)
            if len(data) != 8 * count:
                raise FileFormatError(f"truncated operator file while reading {what}")
            arr = np.frombuffer(data, dtype="<f8").copy()
            return arr.reshape(shape, order="F") if shape else arr

        points = np.frombuffer(fh.read(8 * m), dtype="<i8").copy()
        nsigma, cond = struct.unpack("<qd", fh.read(16))
        sigma = read_f8(nsigma, "sigma")
        V = read_f8(n * m, "V", (n, m))
        E = read_f8(k * m, "E", (k, m))
        (n_products,) = struct.unpack("<q", fh.read(8))
        products = []
        for _ in range(n_products):
            a_var = fh.read(8).rstrip(b"\0").decode()
            b_var = fh.read(8).rstrip(b"\0").decode()
            coef, ka, kb = struct.unpack("<dqq", fh.read(24))
            Uam = read_f8(m * ka, "Uam", (m, ka))
            Ubxm = read_f8(m * kb, "Ubxm", (m, kb))
            am = read_f8(m, "am")
            bxm = read_f8(m, "bxm")
            products.append(SampledProduct(a_var=a_var, b_var=b_var, coef=coef,
                                           Uam=Uam, Ubxm=Ubxm, am=am, bxm=bxm))
    return DeimTermOperator(term=tag.rstrip(b"\0").decode(), V=V, points=points,
                            E=E, cond=cond, sigma=sigma, products=products, n=n)
