"""
离散化：把代数/态射表达式在给定网格分辨率下变成有限维代数和具体 *-同态

C_0 条件通过省略边界网格点实现；拉回（含映射柱、映射锥）变成直和里的约束子代数。
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import DimensionBoundError, OffGridError, ResolutionError, StructureError, UnsupportedNodeError
from .expr import (BlockMap, BoundaryRestrict, CircleRotation, Compose, ConstantEmbed, Cylinder, DirectSum,
                   Evaluation, FiniteDim, HalfOpenTensor, Identity, IntervalTensor, MappingCone, OpenCubeTensor,
                   Pair, ProjectionFirst, ProjectionSecond, Pullback, SphereTensor, SuspendedMorphism, UserNamed,
                   Zero, ZeroAlgebra, ZeroExtend, components, cone_square, cylinder_square, render,
                   render_morphism)
from .fdalg import ConcreteMorphism, FiniteDimAlgebra, MultiplicityMorphism, direct_sum, null_space
from .settings import BASIS_PAIR_CAP, DEFAULT_TOLERANCE, MAX_CUBE_DIM, RANK_RTOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Resolution:
    """区间等分数 N，以及立方体/球面维数上限"""
    N: int
    max_dim: int = MAX_CUBE_DIM

    def __post_init__(self):
        if int(self.N) < 1:
            raise ResolutionError(f"分辨率 N 必须 >= 1: {self.N}")
        object.__setattr__(self, 'N', int(self.N))


def as_resolution(res):
    return res if isinstance(res, Resolution) else Resolution(int(res))


# ---------------------------------------------------------------- 网格

def interval_points(N):
    return [Fraction(i, N) for i in range(N + 1)]


def open_points(N):
    return [Fraction(i, N) for i in range(1, N)]


def halfopen_points(N):
    return [Fraction(i, N) for i in range(1, N + 1)]


def cube_points(n, N):
    return list(itertools.product(interval_points(N), repeat=n))


def open_cube_points(n, N):
    return list(itertools.product(open_points(N), repeat=n))


def sphere_points(n, N):
    """S^n 网格：I^{n+1} 网格的边界点，字典序"""
    return [p for p in cube_points(n + 1, N) if any(x == 0 or x == 1 for x in p)]


def grid_points(expr, res):
    """网格张量代数的网格点（坐标元组）"""
    N = as_resolution(res).N
    if isinstance(expr, IntervalTensor):
        return cube_points(expr.n, N)
    if isinstance(expr, OpenCubeTensor):
        return open_cube_points(expr.n, N)
    if isinstance(expr, SphereTensor):
        return sphere_points(expr.n, N)
    if isinstance(expr, HalfOpenTensor):
        return [(t,) for t in halfopen_points(N)]
    raise UnsupportedNodeError(f"{render(expr)} 不是网格代数")


def face_parameter(expr, point):
    """
    绕数用的面参数：S^1 上从 (0,0) 出发逆时针的周长分数，其他网格取第一个坐标
    """
    if isinstance(expr, SphereTensor) and expr.n == 1:
        x, y = point
        if y == 0:
            s = x
        elif x == 1:
            s = 1 + y
        elif y == 1:
            s = 2 + (1 - x)
        else:
            s = 3 + (1 - y)
        return Fraction(s) / 4
    return Fraction(point[0])


def point_label(point):
    return '(' + ','.join(str(x) for x in point) + ')'


def _check_grid_dim(expr, res):
    if expr.n > res.max_dim:
        raise DimensionBoundError(expr.n, res.max_dim)


def _grid_algebra(points, base):
    blocks, labels = [], []
    for p in points:
        blocks.extend(base.blocks)
        labels.extend(f"{point_label(p)}|{label}" for label in base.labels)
    basis = None
    if base.constrained:
        basis = np.kron(np.eye(len(points)), base.basis)
    return FiniteDimAlgebra(tuple(blocks), basis, tuple(labels))


# ---------------------------------------------------------------- 纤维积

@dataclass
class FiberProduct:
    algebra: FiniteDimAlgebra
    pr1: ConcreteMorphism
    pr2: ConcreteMorphism


def fiber_product(alpha_c, beta_c, rtol=RANK_RTOL):
    """
    {(x, y) : alpha(x) = beta(y)} ⊂ X ⊕ Y
    基取自 [alpha·Bx, -beta·By] 的零空间
    """
    if alpha_c.codomain.ambient_dim != beta_c.codomain.ambient_dim:
        raise StructureError(f"纤维积的两条腿值域不一致: {alpha_c.provenance} / {beta_c.provenance}")
    X, Y = alpha_c.domain, beta_c.domain
    Bx, By = X.basis_matrix(), Y.basis_matrix()
    system = np.hstack([alpha_c.matrix @ Bx, -(beta_c.matrix @ By)])
    kernel = null_space(system, rtol)
    basis = linalg.block_diag(Bx, By) @ kernel if kernel.size else np.zeros((X.ambient_dim + Y.ambient_dim, 0), dtype=complex)
    ambient = direct_sum(X, Y)
    algebra = FiniteDimAlgebra(ambient.blocks, basis, ambient.labels)
    dx, dy = X.ambient_dim, Y.ambient_dim
    meta = {}
    if algebra.dim <= BASIS_PAIR_CAP:
        residual = algebra.closure_residual()
        meta['closure_residual'] = residual
        if residual > DEFAULT_TOLERANCE * max(1.0, algebra.dim):
            logger.warning(f"Fiber product of {alpha_c.provenance}/{beta_c.provenance} not closed: {residual:.3e}")
    pr1 = ConcreteMorphism(algebra, X, np.hstack([np.eye(dx), np.zeros((dx, dy))]), 'pr1', meta)
    pr2 = ConcreteMorphism(algebra, Y, np.hstack([np.zeros((dy, dx)), np.eye(dy)]), 'pr2')
    return FiberProduct(algebra, pr1, pr2)


# ---------------------------------------------------------------- 代数

@lru_cache(maxsize=4096)
def _discretize_algebra(a, res):
    if isinstance(a, FiniteDim):
        return FiniteDimAlgebra.full(a.blocks, tuple(f"M{n}" for n in a.blocks))
    if isinstance(a, ZeroAlgebra):
        return FiniteDimAlgebra.zero()
    if isinstance(a, (IntervalTensor, OpenCubeTensor, SphereTensor, HalfOpenTensor)):
        _check_grid_dim(a, res)
        points = grid_points(a, res)
        if not points:
            logger.warning(f"{render(a)} has an empty grid at N={res.N}, discretizing to the zero algebra")
        return _grid_algebra(points, _discretize_algebra(a.base, res))
    if isinstance(a, DirectSum):
        return direct_sum(_discretize_algebra(a.left, res), _discretize_algebra(a.right, res))
    if isinstance(a, Pullback):
        alpha_c = discretize_morphism(a.alpha, res)
        beta_c = discretize_morphism(a.beta, res)
        return fiber_product(alpha_c, beta_c).algebra
    if isinstance(a, Cylinder):
        return _discretize_algebra(cylinder_square(a.f), res)
    if isinstance(a, MappingCone):
        return _discretize_algebra(cone_square(a.f), res)
    raise UnsupportedNodeError(f"无法离散化 {type(a).__name__}")


def discretize_algebra(a, res):
    """代数表达式 -> 有限维（约束）代数，按 (表达式, 分辨率) 缓存，结果只读"""
    return _discretize_algebra(a, as_resolution(res))


# ---------------------------------------------------------------- 态射

def _selection(target_points, source_points, base_dim):
    """目标网格块取自源网格中同坐标点的块"""
    index = {p: k for k, p in enumerate(source_points)}
    M = np.zeros((len(target_points) * base_dim, len(source_points) * base_dim))
    for r, p in enumerate(target_points):
        k = index[p]
        M[r * base_dim:(r + 1) * base_dim, k * base_dim:(k + 1) * base_dim] = np.eye(base_dim)
    return M


def _evaluation(m, res):
    src = m.source
    base = _discretize_algebra(src.base, res)
    points = grid_points(src, res)
    t = m.t
    vanishing = (isinstance(src, OpenCubeTensor) and t in (0, 1)) or (isinstance(src, HalfOpenTensor) and t == 0)
    M = np.zeros((base.ambient_dim, len(points) * base.ambient_dim))
    if vanishing:
        return M
    if (t,) not in points:
        raise OffGridError(t, interval_points(res.N))
    k = points.index((t,))
    d = base.ambient_dim
    M[:, k * d:(k + 1) * d] = np.eye(d)
    return M


def _pointwise_block_map(m, res):
    src_base = _discretize_algebra(m.source.base, res)
    tgt_base = _discretize_algebra(m.target.base, res)
    points = grid_points(m.source, res)
    mats = []
    for p in points:
        unitaries = None
        if m.windings:
            tau = face_parameter(m.source, p)
            unitaries = [None if w is None else linalg.expm(2j * np.pi * w.m * float(tau) * w.matrix())
                         for w in m.windings]
        mm = MultiplicityMorphism(src_base.blocks, tgt_base.blocks, np.array(m.multiplicity, dtype=int).reshape(
            len(tgt_base.blocks), len(src_base.blocks)), unitaries, m.unital)
        mats.append(mm.to_matrix())
    if not mats:
        return np.zeros((0, 0))
    return linalg.block_diag(*mats)


def _circle_rotation(m, res):
    a = m.algebra
    N = res.N
    shift = m.fraction * N
    if shift.denominator != 1:
        raise OffGridError(m.fraction, interval_points(N)[:-1])
    s = int(shift)
    sigma = discretize_morphism(a.beta, res).matrix
    F = _discretize_algebra(a.alpha.base, res)
    d = F.ambient_dim
    diagonal = np.vstack([np.eye(d), np.eye(d)])
    if sigma.shape != diagonal.shape or not np.allclose(sigma, diagonal):
        raise StructureError("旋转要求附着映射是 S^0 上的对角嵌入")
    size = (N + 2) * d
    M = np.zeros((size, size))
    for i in range(N + 1):
        src = (i + s) % N
        M[i * d:(i + 1) * d, src * d:(src + 1) * d] = np.eye(d)
    M[(N + 1) * d:, s * d:(s + 1) * d] = np.eye(d)
    return M


@lru_cache(maxsize=8192)
def _discretize_morphism(m, res):
    dom = _discretize_algebra(m.domain, res)
    cod = _discretize_algebra(m.codomain, res)
    name = render_morphism(m)
    if isinstance(m, UserNamed):
        body = _discretize_morphism(m.body, res)
        return ConcreteMorphism(dom, cod, body.matrix, m.name, dict(body.meta))
    if isinstance(m, Identity):
        M = np.eye(dom.ambient_dim)
    elif isinstance(m, Zero):
        M = np.zeros((cod.ambient_dim, dom.ambient_dim))
    elif isinstance(m, Compose):
        M = _discretize_morphism(m.g, res).matrix @ _discretize_morphism(m.f, res).matrix
    elif isinstance(m, Evaluation):
        M = _evaluation(m, res)
    elif isinstance(m, BoundaryRestrict):
        base = _discretize_algebra(m.base, res)
        M = _selection(sphere_points(m.n - 1, res.N), cube_points(m.n, res.N), base.ambient_dim)
    elif isinstance(m, (ProjectionFirst, ProjectionSecond)):
        first, second = components(m.source)
        d1 = _discretize_algebra(first, res).ambient_dim
        d2 = _discretize_algebra(second, res).ambient_dim
        if isinstance(m, ProjectionFirst):
            M = np.hstack([np.eye(d1), np.zeros((d1, d2))])
        else:
            M = np.hstack([np.zeros((d2, d1)), np.eye(d2)])
    elif isinstance(m, ConstantEmbed):
        npts = len(grid_points(m.target, res))
        M = np.vstack([np.eye(dom.ambient_dim)] * npts) if npts else np.zeros((0, dom.ambient_dim))
    elif isinstance(m, SuspendedMorphism):
        inner = _discretize_morphism(m.f, res).matrix
        M = np.kron(np.eye(len(open_points(res.N))), inner)
    elif isinstance(m, BlockMap):
        if m.gridwise:
            M = _pointwise_block_map(m, res)
        else:
            mm = MultiplicityMorphism(dom.blocks, cod.blocks, np.array(m.multiplicity, dtype=int).reshape(
                len(cod.blocks), len(dom.blocks)), None, m.unital)
            M = mm.to_matrix()
    elif isinstance(m, Pair):
        M = np.vstack([_discretize_morphism(m.left, res).matrix, _discretize_morphism(m.right, res).matrix])
    elif isinstance(m, ZeroExtend):
        base = _discretize_algebra(m.source.base, res)
        M = _selection(grid_points(m.source, res), grid_points(m.target, res), base.ambient_dim).T
    elif isinstance(m, CircleRotation):
        M = _circle_rotation(m, res)
    else:
        raise UnsupportedNodeError(f"无法离散化态射 {type(m).__name__}")
    M = np.asarray(M, dtype=complex).reshape(cod.ambient_dim, dom.ambient_dim)
    concrete = ConcreteMorphism(dom, cod, M, name)
    concrete.matrix.setflags(write=False)
    if isinstance(m, Pair):
        leak = concrete.leak_residual()
        if leak > DEFAULT_TOLERANCE * max(1.0, dom.dim):
            raise StructureError(f"pair 的像不满足 {render(m.target)} 的约束，残差 {leak:.3e}")
    return concrete


def discretize_morphism(m, res):
    """态射表达式 -> 具体 *-同态（按 (表达式, 分辨率) 缓存；矩阵只读，meta 每次是新的字典）"""
    cached = _discretize_morphism(m, as_resolution(res))
    return ConcreteMorphism(cached.domain, cached.codomain, cached.matrix, cached.provenance, dict(cached.meta))


def discretize_pullback(a, res):
    """拉回型代数连同两个投影"""
    res = as_resolution(res)
    if isinstance(a, Cylinder):
        a = cylinder_square(a.f)
    elif isinstance(a, MappingCone):
        a = cone_square(a.f)
    if not isinstance(a, Pullback):
        raise StructureError(f"{render(a)} 不是拉回")
    return fiber_product(discretize_morphism(a.alpha, res), discretize_morphism(a.beta, res))


def clear_cache():
    _discretize_algebra.cache_clear()
    _discretize_morphism.cache_clear()


# ---------------------------------------------------------------- 分辨率细化

def _restriction_matrix(a, fine, coarse):
    if isinstance(a, (FiniteDim, ZeroAlgebra)):
        return np.eye(_discretize_algebra(a, fine).ambient_dim)
    if isinstance(a, (IntervalTensor, OpenCubeTensor, SphereTensor, HalfOpenTensor)):
        inner = _restriction_matrix(a.base, fine, coarse)
        fine_points = grid_points(a, fine)
        coarse_points = grid_points(a, coarse)
        index = {p: k for k, p in enumerate(fine_points)}
        rows, cols = inner.shape
        M = np.zeros((len(coarse_points) * rows, len(fine_points) * cols))
        for r, p in enumerate(coarse_points):
            k = index[p]
            M[r * rows:(r + 1) * rows, k * cols:(k + 1) * cols] = inner
        return M
    if isinstance(a, (DirectSum, Pullback, Cylinder, MappingCone)):
        first, second = components(a)
        return linalg.block_diag(_restriction_matrix(first, fine, coarse), _restriction_matrix(second, fine, coarse))
    raise UnsupportedNodeError(f"无法细化 {type(a).__name__}")


def restrict_resolution(a, fine, coarse):
    """细网格 -> 粗网格：丢掉不共享的网格块，是满射 *-同态"""
    fine, coarse = as_resolution(fine), as_resolution(coarse)
    if fine.N % coarse.N != 0:
        raise ResolutionError(f"细网格 N={fine.N} 不包含粗网格 N={coarse.N}")
    M = _restriction_matrix(a, fine, coarse)
    return ConcreteMorphism(discretize_algebra(a, fine), discretize_algebra(a, coarse), M,
                            f"restrict[{fine.N}->{coarse.N}]")


def check_refinement(m, fine, coarse):
    """‖R_cod · D_fine(m) − D_coarse(m) · R_dom‖，在细网格定义域子空间上取值"""
    fine, coarse = as_resolution(fine), as_resolution(coarse)
    r_dom = restrict_resolution(m.domain, fine, coarse)
    r_cod = restrict_resolution(m.codomain, fine, coarse)
    lhs = r_cod.matrix @ discretize_morphism(m, fine).matrix
    rhs = discretize_morphism(m, coarse).matrix @ r_dom.matrix
    B = r_dom.domain.basis_matrix()
    diff = (lhs - rhs) @ B
    return float(np.abs(diff).max()) if diff.size else 0.0
