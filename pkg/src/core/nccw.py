"""
NCCW 复形：逐级粘贴胞腔、验证，以及有限分辨率下的胞腔逼近驱动

A_k = I^k F_k ⊕_{S^{k-1} F_k} A_{k-1}，即 ∂ : C(I^k)⊗F_k -> C(S^{k-1})⊗F_k 与 σ_k 的拉回。
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy import linalg

from .check import (FAIL, PASS, SKIP, CheckReport, Homotopy, NDRData, check_exact_row, check_ndr_pair,
                    check_pullback_universal, check_star_hom, pullback_square, star_residual)
from .discretize import (as_resolution, check_refinement, cube_points, discretize_algebra, discretize_morphism,
                         discretize_pullback, fiber_product, open_cube_points, sphere_points)
from .errors import DimensionBoundError, StructureError
from .expr import (BoundaryRestrict, Cylinder, Evaluation, FiniteDim, HalfOpenTensor, Identity, IntervalTensor,
                   MappingCone, OpenCubeTensor, Pair, ProjectionFirst, ProjectionSecond, Pullback, SphereTensor,
                   Zero, ZeroAlgebra, ZeroExtend, cone_square, cylinder_square, linear_dim, render)
from .fdalg import ConcreteMorphism, decompose_star_hom, identity_morphism, matrix_rank
from .settings import (BASIS_PAIR_CAP, DEFAULT_TOLERANCE, DEFAULT_TRIALS, MAX_APPROX_CELL_DIM, MAX_CUBE_DIM, RANK_RTOL,
                       derive_seed)

logger = logging.getLogger(__name__)

SYMBOLIC_ONLY_HINT = "逼近驱动只支持维数不超过 2 的胞腔，请只做符号构造（attach/validate）"


# ---------------------------------------------------------------- 复形

@dataclass(frozen=True)
class Stage:
    """复形的第 k 级"""
    k: int
    algebra: object
    cell: object = None
    sigma: object = None
    name: str = ''
    cell_name: str = ''

    @property
    def attached(self):
        return self.sigma is not None

    @property
    def rho(self):
        """ρ_k : A_k -> C(I^k)⊗F_k"""
        return ProjectionFirst(self.algebra) if self.attached else None

    @property
    def pi(self):
        """π : A_k -> A_{k-1}"""
        if self.k == 0:
            return None
        return ProjectionSecond(self.algebra) if self.attached else Identity(self.algebra)

    def kernel_inclusion(self, previous):
        """C_0(I_0^k)⊗F_k -> A_k"""
        if not self.attached:
            return Zero(ZeroAlgebra(), self.algebra)
        K = OpenCubeTensor(self.k, self.cell)
        return Pair(self.algebra, ZeroExtend(K, IntervalTensor(self.k, self.cell)), Zero(K, previous))


@dataclass(frozen=True)
class NCCWComplex:
    stages: tuple
    name: str = ''

    @classmethod
    def base(cls, A0, name='A0', complex_name=''):
        if not isinstance(A0, FiniteDim):
            raise StructureError(f"第 0 级必须是有限维代数: {render(A0)}")
        return cls((Stage(0, A0, name=name),), complex_name or name)

    def __len__(self):
        return len(self.stages)

    @property
    def top(self):
        return self.stages[-1]

    @property
    def dimension(self):
        return len(self.stages) - 1

    def algebra(self, k):
        return self.stages[k].algebra

    def names(self):
        """表达式 -> 显示名"""
        out = {}
        for st in self.stages:
            out.setdefault(st.algebra, st.name)
            if st.cell is not None and st.cell_name:
                out.setdefault(st.cell, st.cell_name)
        return out


def attach_stage(X, F, k, sigma=None, name=None, cell_name='', max_dim=MAX_CUBE_DIM):
    """
    粘贴第 k 级胞腔：A_k = Pullback(∂ : C(I^k)⊗F -> C(S^{k-1})⊗F, σ)
    F 为零代数时 A_k = A_{k-1}
    """
    if k != len(X.stages):
        raise StructureError(f"复形已有 {len(X.stages)} 级，下一级必须是 k={len(X.stages)}，而不是 {k}")
    if k > max_dim:
        raise DimensionBoundError(k, max_dim)
    previous = X.top.algebra
    name = name or f"A{k}"
    if isinstance(F, ZeroAlgebra):
        stage = Stage(k, previous, F, None, name, cell_name)
        logger.info(f"Stage {name}: empty cell set, A_{k} = A_{k - 1}")
        return NCCWComplex(X.stages + (stage,), X.name)
    if not isinstance(F, FiniteDim):
        raise StructureError(f"胞腔代数必须是有限维代数: {render(F)}")
    if sigma is None:
        raise StructureError(f"第 {k} 级缺少附着映射 σ")
    if sigma.domain != previous:
        raise StructureError(f"σ 的定义域 {render(sigma.domain)} ≠ A_{k - 1} = {render(previous)}")
    expected = SphereTensor(k - 1, F)
    if sigma.codomain != expected:
        raise StructureError(f"σ 的值域 {render(sigma.codomain)} ≠ {render(expected)}")
    algebra = Pullback(BoundaryRestrict(k, F), sigma)
    logger.info(f"Stage {name} attached: dim {k} cell {render(F)}")
    return NCCWComplex(X.stages + (Stage(k, algebra, F, sigma, name, cell_name),), X.name)


def validate_complex(X, resolutions, tol=DEFAULT_TOLERANCE, seed=0, prefix=None):
    """每级、每个分辨率：σ 是 *-同态、行正合、维数公式，以及相邻分辨率的细化相容"""
    prefix = prefix or X.name or 'complex'
    reports = []
    resolutions = sorted(set(as_resolution(r).N for r in resolutions))
    for N in resolutions:
        for idx, st in enumerate(X.stages):
            sid = f"{prefix}/{st.name}/N{N}"
            actual = discretize_algebra(st.algebra, N).dim
            predicted = linear_dim(st.algebra, N)
            witness = {'predicted': int(predicted), 'actual': int(actual)}
            if idx > 0:
                prev = X.stages[idx - 1].algebra
                cells = linear_dim(OpenCubeTensor(st.k, st.cell), N) if st.attached else 0
                witness.update(open_cells=int(cells), previous=int(discretize_algebra(prev, N).dim))
                ok = actual == predicted == cells + witness['previous']
            else:
                ok = actual == predicted
            reports.append(CheckReport(f"{sid}/dim", 'dim', PASS if ok else FAIL, abs(actual - predicted),
                                       0.0, None, witness))
            if idx == 0:
                continue
            if st.attached:
                sigma_c = discretize_morphism(st.sigma, N)
                rid = f"{sid}/sigma"
                reports.append(check_star_hom(sigma_c, tol, rid, derive_seed(seed, rid)))
                reports.append(check_stage_row(st.k, st.cell, sigma_c, N, tol, f"{sid}/row"))
                continue
            inc = discretize_morphism(st.kernel_inclusion(X.stages[idx - 1].algebra), N)
            reports.append(check_exact_row(inc, discretize_morphism(st.pi, N), f"{sid}/row", tol))
    for fine in resolutions:
        for coarse in resolutions:
            if coarse >= fine or fine % coarse:
                continue
            for st in X.stages[1:]:
                maps = [st.pi] + ([st.rho, st.sigma] if st.attached else [])
                residual = max(check_refinement(m, fine, coarse) for m in maps)
                reports.append(CheckReport(f"{prefix}/{st.name}/refine{fine}to{coarse}", 'refine',
                                           PASS if residual <= tol else FAIL, residual, tol, None,
                                           None if residual <= tol else {'fine': fine, 'coarse': coarse}))
    logger.info(f"Validated complex {prefix}: {sum(r.passed for r in reports)}/{len(reports)} checks passed")
    return reports


def check_stage_row(k, F, sigma_c, res, tol=DEFAULT_TOLERANCE, check_id='row'):
    """
    0 -> C_0((0,1)^k)⊗F -> I^k F ⊕_σ A_{k-1} -> A_{k-1} -> 0，σ 以具体矩阵给出。
    σ 不是 *-同态时纤维积对乘法不封闭，行记为失败（violated 含 not_closed）。
    """
    fp = fiber_product(discretize_morphism(BoundaryRestrict(k, F), res), sigma_c)
    zext = discretize_morphism(ZeroExtend(OpenCubeTensor(k, F), IntervalTensor(k, F)), res)
    tail = np.zeros((sigma_c.domain.ambient_dim, zext.domain.ambient_dim))
    inc = ConcreteMorphism(zext.domain, fp.algebra, np.vstack([zext.matrix, tail]), 'kernel')
    report = check_exact_row(inc, fp.pr2, check_id, tol)
    closure = fp.algebra.closure_residual(BASIS_PAIR_CAP)
    if closure <= tol:
        return report
    witness = dict(report.witness)
    witness['violated'] = sorted(set(witness.get('violated', [])) | {'not_closed'})
    witness['closure_residual'] = closure
    return CheckReport(check_id, 'row', FAIL, max(report.max_residual, closure), tol, None, witness)


def cylinder_kernel(f):
    """{g ∈ C(I)⊗B : g(1) = 0}，映射柱投影 p 的核"""
    B = f.codomain
    return Pullback(Evaluation(Fraction(1), IntervalTensor(1, B)), Zero(ZeroAlgebra(), B))


def validate_mapping_constructions(f, resolutions, tol=DEFAULT_TOLERANCE, seed=0, trials=DEFAULT_TRIALS,
                                   prefix='inherit'):
    """
    映射柱和映射锥继承复形结构：纤维积封闭、拉回泛性质、以及
    0 -> ker p -> Cyl(f) -> A -> 0、0 -> S(B) -> Cone(f) -> A -> 0 正合
    """
    reports = []
    A, B = f.domain, f.codomain
    K = cylinder_kernel(f)
    cyl, cone = Cylinder(f), MappingCone(f)
    rows = {
        'cylinder': (Pair(cyl, Zero(K, A), ProjectionFirst(K)), ProjectionFirst(cyl)),
        'cone': (Pair(cone, Zero(OpenCubeTensor(1, B), A), ZeroExtend(OpenCubeTensor(1, B), HalfOpenTensor(B))),
                 ProjectionFirst(cone)),
    }
    for N in sorted(set(as_resolution(r).N for r in resolutions)):
        for label, node in (('cylinder', cyl), ('cone', cone)):
            rid = f"{prefix}/{label}/N{N}"
            fp = discretize_pullback(node, N)
            closure = fp.algebra.closure_residual()
            reports.append(CheckReport(f"{rid}/closure", 'inherit', PASS if closure <= tol else FAIL, closure,
                                       tol, None, None if closure <= tol else {'reason': '纤维积对乘法不封闭'}))
            ps = cylinder_square(f) if label == 'cylinder' else cone_square(f)
            square = pullback_square(ps.alpha, ps.beta, N)
            reports.append(check_pullback_universal(square, trials, derive_seed(seed, f"{rid}/pullback"), tol,
                                                    f"{rid}/pullback"))
            inc, proj = rows[label]
            reports.append(check_exact_row(discretize_morphism(inc, N), discretize_morphism(proj, N),
                                           f"{rid}/row", tol))
    return reports


def stage_table(X, resolutions):
    """每级每个分辨率的维数表：dim I_0^k F_k、dim A_{k-1}、dim A_k"""
    rows = []
    for N in sorted(set(as_resolution(r).N for r in resolutions)):
        for idx, st in enumerate(X.stages):
            cells = linear_dim(OpenCubeTensor(st.k, st.cell), N) if st.attached else (
                linear_dim(st.algebra, N) if idx == 0 else 0)
            previous = discretize_algebra(X.stages[idx - 1].algebra, N).dim if idx else 0
            actual = discretize_algebra(st.algebra, N).dim
            rows.append({'stage': st.name, 'k': st.k, 'N': N, 'cell': render(st.cell) if st.cell is not None else '',
                         'open_cells': cells, 'previous': previous, 'dim': actual,
                         'exact': actual == cells + previous})
    return pd.DataFrame(rows, columns=['stage', 'k', 'N', 'cell', 'open_cells', 'previous', 'dim', 'exact'])


# ---------------------------------------------------------------- 离散复形

@dataclass(frozen=True)
class CellRep:
    """不可约表示：第 level 个胞腔内部网格点 point 处的第 block 个块（level 0 为 A_0 的块）"""
    level: int
    point: tuple
    block: int
    size: int


class DiscreteComplex:
    """
    复形在一个分辨率下的全部数据：各级代数、π、ρ、σ 的矩阵，以及胞腔点取值同构
    A_q ≅ ⊕ (内部胞腔点 ⊗ F_k) ⊕ A_0
    """

    def __init__(self, complex_, res):
        self.complex = complex_
        self.res = as_resolution(res)
        self.N = self.res.N
        stages = complex_.stages
        self.algebras = [discretize_algebra(st.algebra, self.res) for st in stages]
        self.pi = [None] + [discretize_morphism(st.pi, self.res).matrix for st in stages[1:]]
        self.rho = [discretize_morphism(st.rho, self.res).matrix if st.attached else None for st in stages]
        self.sigma = [discretize_morphism(st.sigma, self.res).matrix if st.attached else None for st in stages]
        self.cells = [discretize_algebra(st.cell, self.res) if st.attached else None for st in stages]
        self.irreps = []
        current = [CellRep(0, (), j, n) for j, n in enumerate(self.algebras[0].blocks)]
        for q, st in enumerate(stages):
            if q > 0 and st.attached:
                current = current + [CellRep(st.k, p, j, n) for p in open_cube_points(st.k, self.N)
                                     for j, n in enumerate(self.cells[q].blocks)]
            self.irreps.append(list(current))
        self._cache = {}

    @property
    def top(self):
        return len(self.algebras) - 1

    def quotient(self, q_from, q_to):
        """A_{q_from} -> A_{q_to} 的商映射矩阵"""
        key = ('quotient', q_from, q_to)
        if key not in self._cache:
            M = np.eye(self.algebras[q_from].ambient_dim)
            for q in range(q_from, q_to, -1):
                M = self.pi[q] @ M
            self._cache[key] = M
        return self._cache[key]

    def cell_eval(self, q, k, point, j):
        """A_q 在第 k 个胞腔的网格点 point（内部或边界）处第 j 块的取值"""
        key = ('eval', q, k, point, j)
        if key not in self._cache:
            if k == 0:
                A0 = self.algebras[0]
                rows = np.eye(A0.ambient_dim)[A0.block_slice(j)]
                M = rows @ self.quotient(q, 0)
            else:
                F = self.cells[k]
                idx = cube_points(k, self.N).index(tuple(point))
                sl = F.block_slice(j)
                start = idx * F.ambient_dim
                M = self.rho[k][start + sl.start:start + sl.stop] @ self.quotient(q, k)
            self._cache[key] = M
        return self._cache[key]

    def sphere_eval(self, p, point, j):
        """σ_p 在 S^{p-1} 网格点 point 处第 j 块的取值，定义在 A_{p-1} 上"""
        key = ('sphere', p, point, j)
        if key not in self._cache:
            F = self.cells[p]
            idx = sphere_points(p - 1, self.N).index(tuple(point))
            sl = F.block_slice(j)
            start = idx * F.ambient_dim
            self._cache[key] = self.sigma[p][start + sl.start:start + sl.stop]
        return self._cache[key]

    def cell_matrix(self, q):
        """E_q：所有不可约表示的取值叠在一起"""
        key = ('E', q)
        if key not in self._cache:
            reps = self.irreps[q]
            mats = [self.cell_eval(q, r.level, r.point, r.block) for r in reps]
            self._cache[key] = np.vstack(mats) if mats else np.zeros((0, self.algebras[q].ambient_dim))
        return self._cache[key]

    def inverse(self, q):
        """Φ_q = B (E_q B)^{-1}：胞腔坐标 -> 环境坐标"""
        key = ('Phi', q)
        if key not in self._cache:
            B = self.algebras[q].basis_matrix()
            EB = self.cell_matrix(q) @ B
            if EB.shape[0] != EB.shape[1]:
                raise StructureError(f"胞腔点取值维数 {EB.shape[0]} ≠ dim A_{q} = {EB.shape[1]}")
            self._cache[key] = B @ linalg.inv(EB) if EB.size else B
        return self._cache[key]

    def row_offsets(self, q):
        sizes = [r.size ** 2 for r in self.irreps[q]]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def rows_for(self, q, predicate):
        offsets = self.row_offsets(q)
        idx = []
        for i, r in enumerate(self.irreps[q]):
            if predicate(r):
                idx.extend(range(offsets[i], offsets[i + 1]))
        return idx

    def decompose(self, rep, q=None, rtol=RANK_RTOL):
        """
        A_q -> M_n 的表示分解为不可约表示：返回 (酉矩阵 W, 槽位列表)
        槽位为 CellRep 或者 ('zero', 大小)
        """
        q = self.top if q is None else q
        n = int(round(np.sqrt(rep.shape[0])))
        M = rep @ self.inverse(q)
        sizes = tuple(r.size for r in self.irreps[q])
        m, residual = decompose_star_hom(M, sizes, (n,), rtol)
        if residual > 1e-8:
            raise StructureError(f"表示分解残差过大: {residual:.3e}")
        slots = []
        for i, r in enumerate(self.irreps[q]):
            slots.extend([r] * int(m.multiplicity[0, i]))
        pad = n - int(m.filled[0])
        if pad:
            slots.append(('zero', pad))
        return m.unitaries[0], slots


def _slot_size(slot):
    return slot[1] if isinstance(slot, tuple) else slot.size


def _assemble(src, W, slots, n):
    """W · blockdiag(槽位取值) · W^H，按行展开后的矩阵 (n² x 源环境维数)"""
    acc = np.zeros((n * n, src.algebras[src.top].ambient_dim), dtype=complex)
    o = 0
    for slot in slots:
        s = _slot_size(slot)
        if not isinstance(slot, tuple):
            R = src.cell_eval(src.top, slot.level, slot.point, slot.block)
            idx = [(o + a) * n + (o + b) for a in range(s) for b in range(s)]
            acc[idx] += R
        o += s
    return np.kron(W, W.conj()) @ acc


# ---------------------------------------------------------------- 逼近驱动

@dataclass
class StageHomotopy:
    """目标第 p 级上的同伦 g_p（切片 A_n -> B_p）"""
    p: int
    slices: list
    lower_index: list = None
    settled_blocks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def _snap(x, N):
    v = round(x * N)
    return Fraction(min(max(v, 0), N), N)


def prism_source(y, t, N, T):
    """
    棱柱 I^p x I 从 (中心, 2) 出发的径向投影到 I^p x {0} ∪ ∂I^p x I，落到网格上。
    返回 ('bottom', y', 0) 或 ('side', y_b, 时间下标)
    """
    c = Fraction(1, 2)
    d = max(abs(yi - c) for yi in y)
    lam0 = Fraction(2) / (2 - t)
    if d * lam0 <= c:
        return 'bottom', tuple(_snap(c + (yi - c) * lam0, N) for yi in y), 0
    lam_b = c / d
    yb = tuple(_snap(c + (yi - c) * lam_b, N) for yi in y)
    height = 2 + lam_b * (t - 2)
    s = min(max(round(height * T), 0), T)
    return 'side', yb, int(s)


def _compose_cells(target, p, lower_values, top_values):
    """低层取值 + 第 p 层取值 -> B_p 中的切片矩阵"""
    cell = np.vstack([lower_values] + top_values) if top_values else lower_values
    return target.inverse(p) @ cell


def cell_pair_ndr(target, p, steps):
    """
    第 p 级胞腔对 (C(I^p)⊗F_p, 边界) 的 NDR 数据：理想块是边界网格点上的块，
    u 在边界点取 t = 0 的值、在内部点取 t = 1 的值，形变是 steps 步的常值恒等映射
    """
    F = target.cells[p]
    B = discretize_algebra(IntervalTensor(p, target.complex.stages[p].cell), target.res)
    interval = discretize_algebra(IntervalTensor(1, FiniteDim((1,))), target.res)
    boundary = set(sphere_points(p - 1, target.N))
    U = np.zeros((B.ambient_dim, interval.ambient_dim))
    ideal = []
    for idx, y in enumerate(cube_points(p, target.N)):
        column = 0 if y in boundary else target.N
        for j, n in enumerate(F.blocks):
            b = idx * len(F.blocks) + j
            U[B.block_slice(b), column] = np.eye(n).reshape(-1)
            if y in boundary:
                ideal.append(b)
    u = ConcreteMorphism(interval, B, U, f"u[cell{p}]")
    return NDRData(B, ideal, u, Homotopy.constant(identity_morphism(B), steps, f"const[cell{p}]"))


def extend_relative(source, target, p, f, lower, tol=DEFAULT_TOLERANCE, check_id='extend', ndr=None):
    """
    把 B_{p-1} 上已有的同伦沿第 p 级胞腔扩张到 B_p：
    f1 边界数据 σ_p∘g_{p-1}(s)，f2 在 ∂I^p x {0} 上与 f 粘合，
    f3 棱柱径向投影（落到网格），f4 组装成切片。
    边界数据不随时间变化的块直接取常值同伦。

    ndr 缺省时取 cell_pair_ndr；NDR 条件不成立、或与胞腔和时间网格对不上时返回 (None, SKIP)。
    结果须满足 π_p∘g_p(s) = g_{p-1}(s)（lands_in_pair）和 g_p(0) = π_p∘f（start_recovers_f），
    两者都在定义域的约束子空间上比较。
    """
    st = target.complex.stages[p]
    m = target.top
    T = len(lower.slices) - 1
    F = target.cells[p]
    interior = open_cube_points(p, target.N)
    boundary = sphere_points(p - 1, target.N)
    ndr = ndr if ndr is not None else cell_pair_ndr(target, p, T)
    ndr_report = check_ndr_pair(ndr, tol, f"{check_id}/ndr")
    if not ndr_report.passed:
        return None, CheckReport(check_id, 'extend', SKIP, ndr_report.max_residual, tol, None,
                                 {'reason': '胞腔对的 NDR 条件不成立', 'ndr': ndr_report.witness})
    cell_blocks = tuple(F.blocks) * len(cube_points(p, target.N))
    if ndr.B.blocks != cell_blocks or len(ndr.phi.slices) != T + 1:
        return None, CheckReport(check_id, 'extend', SKIP, 0.0, tol, None,
                                 {'reason': f"NDR 数据与第 {p} 级胞腔或同伦的时间网格不一致",
                                  'ndr_blocks': len(ndr.B.blocks), 'ndr_slices': len(ndr.phi.slices)})
    Bd = f.domain.basis_matrix()
    # f2: t = 0 时边界上两种取值一致
    gluing = 0.0
    for yb in boundary:
        for j in range(len(F.blocks)):
            bottom = target.cell_eval(m, p, yb, j) @ f.matrix @ Bd
            side = target.sphere_eval(p, yb, j) @ lower.slices[0].matrix @ Bd
            gluing = max(gluing, _max_abs(bottom - side))
    if gluing > tol:
        return None, CheckReport(check_id, 'extend', SKIP, gluing, tol, None,
                                 {'reason': '低层同伦的起点不是 π∘f，边界粘合失败', 'gluing_residual': gluing})
    moving = []
    for j in range(len(F.blocks)):
        drift = 0.0
        for yb in boundary:
            E = target.sphere_eval(p, yb, j)
            base = E @ lower.slices[0].matrix @ Bd
            for s in range(1, T + 1):
                drift = max(drift, _max_abs(E @ lower.slices[s].matrix @ Bd - base))
        if drift > tol:
            moving.append(j)
    hits = {'bottom': 0, 'side': 0}
    E_lower = target.cell_matrix(p - 1)
    slices = []
    for s in range(T + 1):
        t = Fraction(s, T) if T else Fraction(0)
        values = []
        for y in interior:
            for j in range(len(F.blocks)):
                if j not in moving:
                    values.append(target.cell_eval(m, p, y, j) @ f.matrix)
                    continue
                kind, point, idx = prism_source(y, t, target.N, T)
                hits[kind] += 1
                if kind == 'bottom':
                    values.append(target.cell_eval(m, p, point, j) @ f.matrix)
                else:
                    values.append(target.sphere_eval(p, point, j) @ lower.slices[idx].matrix)
        M = _compose_cells(target, p, E_lower @ lower.slices[s].matrix, values)
        slices.append(ConcreteMorphism(f.domain, target.algebras[p], M, f"g{p}[{s}]"))
    residuals = {
        'gluing': gluing,
        'lands_in_pair': max(_max_abs((target.pi[p] @ g.matrix - l.matrix) @ Bd)
                             for g, l in zip(slices, lower.slices)),
        'start_recovers_f': _max_abs((slices[0].matrix - target.quotient(m, p) @ f.matrix) @ Bd),
    }
    worst = max(residuals.values())
    settled = [j for j in range(len(F.blocks)) if j not in moving]
    info = {'f1_boundary_points': len(boundary), 'f2_gluing_residual': gluing, 'f3_ray_hits': hits,
            'f4_slices': len(slices), 'moving_blocks': moving}
    stage = StageHomotopy(p, slices, list(range(T + 1)), settled, info)
    witness = dict(info, residuals={k: float(v) for k, v in residuals.items()},
                   ndr_residuals=ndr_report.witness['residuals'])
    failed = sorted(k for k, v in residuals.items() if v > tol)
    if failed:
        witness['violated'] = failed
    logger.debug(f"Stage {st.name}: extended over {len(slices)} slices, moving blocks {moving}")
    return stage, CheckReport(check_id, 'extend', FAIL if failed else PASS, worst, tol, None, witness)


def _nearest_face(point):
    best = None
    for i, x in enumerate(point):
        for goal, dist in ((0, x), (1, 1 - x)):
            if best is None or dist < best[0]:
                best = (dist, i, goal)
    return best[1], best[2]


def compress_stage(source, target, stage, f, tol=DEFAULT_TOLERANCE):
    """
    把末端切片里层数过高的成分沿网格射线推到胞腔边界，在边界处经附着映射分解成低层成分，
    直到第 p 层的每个目标表示只含层数 <= p 的成分
    """
    p = stage.p
    N = target.N
    reps = [r for r in target.irreps[p] if r.level == p]
    rows = target.row_offsets(p)
    index = {r: i for i, r in enumerate(target.irreps[p])}
    end = stage.slices[-1].matrix
    E = target.cell_matrix(p)
    states = {}
    for r in reps:
        i = index[r]
        value = E[rows[i]:rows[i + 1]] @ end
        W, slots = source.decompose(value)
        if any(not isinstance(s, tuple) and s.level > p for s in slots):
            states[r] = [W, [(s, None) for s in slots]]
    steps = 0
    limit = (source.top + 1) * (N + 1) + 1
    lower_values = E[:rows[len(target.irreps[p]) - len(reps)]] @ end
    current = {r: E[rows[index[r]]:rows[index[r] + 1]] @ end for r in reps}
    while states:
        steps += 1
        if steps > limit:
            raise StructureError(f"第 {p} 级压缩没有在 {limit} 步内结束")
        for r in list(states):
            W, slots = states[r]
            new_slots = []
            offset = 0
            for slot, direction in slots:
                size = _slot_size(slot)
                if isinstance(slot, tuple) or slot.level <= p:
                    new_slots.append((slot, direction))
                    offset += size
                    continue
                if direction is None:
                    direction = _nearest_face(slot.point)
                axis, goal = direction
                point = list(slot.point)
                point[axis] += Fraction(-1 if goal == 0 else 1, N)
                moved = CellRep(slot.level, tuple(point), slot.block, slot.size)
                if point[axis] != goal:
                    new_slots.append((moved, direction))
                    offset += size
                    continue
                rep = source.cell_eval(source.top, moved.level, moved.point, moved.block)
                V, sub = source.decompose(rep)
                n = W.shape[0]
                D = np.eye(n, dtype=complex)
                D[offset:offset + size, offset:offset + size] = V
                W = W @ D
                new_slots.extend((s, None) for s in sub)
                offset += size
            n = W.shape[0]
            current[r] = _assemble(source, W, [s for s, _ in new_slots], n)
            if any(not isinstance(s, tuple) and s.level > p for s, _ in new_slots):
                states[r] = [W, new_slots]
            else:
                del states[r]
        M = _compose_cells(target, p, lower_values, [current[r] for r in reps])
        stage.slices.append(ConcreteMorphism(f.domain, target.algebras[p], M, f"g{p}[c{steps}]"))
        if stage.lower_index is not None:
            stage.lower_index.append(stage.lower_index[-1])
    stage.info['compression_steps'] = steps
    return stage


def is_cellular(source, target, h, p=None, rtol=RANK_RTOL):
    """
    h : A_n -> B_p 是否保持骨架：对每个 q，ker(A_n -> A_q) 在 h 下的像经 B_p -> B_q 为零
    返回 (是否成立, 各 q 的秩)
    """
    p = target.top if p is None else p
    Phi = source.inverse(source.top)
    E = target.cell_matrix(p)
    ranks = {}
    for q in range(p + 1):
        rows = target.rows_for(p, lambda r: r.level <= q)
        cols = source.rows_for(source.top, lambda r: r.level > q)
        block = E[rows] @ h.matrix @ Phi[:, cols] if rows and cols else np.zeros((0, 0))
        ranks[q] = matrix_rank(block, rtol)
    return all(v == 0 for v in ranks.values()), ranks


@dataclass
class CellularMap:
    """胞腔映射 h : A_n -> B_m 以及逐级证书"""
    h: ConcreteMorphism
    source_expr: object = None
    certificates: list = field(default_factory=list)
    stages: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.status == PASS for r in self.certificates)


def _check_cells(X):
    for st in X.stages:
        if st.attached and st.k > MAX_APPROX_CELL_DIM:
            raise DimensionBoundError(st.k, MAX_APPROX_CELL_DIM, SYMBOLIC_ONLY_HINT)


def cellular_approximate(X, Y, f, resolution, tol=DEFAULT_TOLERANCE, check_id='approx', source_expr=None):
    """
    f : A_n -> B_m 同伦到胞腔映射 h。
    逐级构造 g_p：先 extend_relative 把 g_{p-1} 扩张到第 p 级，再压缩过高的成分。
    证书：1 起点为 π_p∘f；2 无需移动的块保持不动；3 π∘g_p 为 g_{p-1}（停顿补齐）；4 h_p 是胞腔映射。
    """
    _check_cells(X)
    _check_cells(Y)
    source = DiscreteComplex(X, resolution)
    target = DiscreteComplex(Y, resolution)
    if f.domain.ambient_dim != source.algebras[-1].ambient_dim or \
            f.codomain.ambient_dim != target.algebras[-1].ambient_dim:
        raise StructureError(f"{f.provenance} 不是 {X.top.name} -> {Y.top.name} 的映射")
    m = target.top
    certificates = []
    stages = []
    stage = None
    for p in range(m + 1):
        st = Y.stages[p]
        sid = f"{check_id}/{st.name}"
        if p == 0:
            start = ConcreteMorphism(f.domain, target.algebras[0], target.quotient(m, 0) @ f.matrix, 'g0[0]')
            stage = StageHomotopy(0, [start], None, list(range(len(target.algebras[0].blocks))))
        elif not st.attached:
            stage = StageHomotopy(p, list(stage.slices), list(range(len(stage.slices))), [], {'empty_cell': True})
        else:
            lower = stage
            stage, report = extend_relative(source, target, p, f, lower, tol, f"{sid}/extend")
            certificates.append(report)
            if stage is None:
                return None, None, certificates
            stage.info['lower'] = lower
        compress_stage(source, target, stage, f, tol)
        certificates.extend(_stage_certificates(source, target, stage, f, sid, tol))
        stages.append(stage)
    g = Homotopy(stage.slices, label=f"{check_id}/g")
    h = ConcreteMorphism(f.domain, f.codomain, g.end.matrix, f"ev(1)∘{check_id}/g")
    certificates.extend(_global_certificates(source, target, stages, f, g, h, check_id, tol))
    logger.info(f"Cellular approximation {check_id}: {len(g.slices)} slices, "
                f"{sum(r.passed for r in certificates)}/{len(certificates)} certificates passed")
    return CellularMap(h, source_expr, certificates, stages), g, certificates


def _max_abs(M):
    M = np.asarray(M)
    return float(np.abs(M).max()) if M.size else 0.0


def _stage_certificates(source, target, stage, f, sid, tol):
    p, m = stage.p, target.top
    out = []
    Bd = f.domain.basis_matrix()
    r1 = _max_abs((stage.slices[0].matrix - target.quotient(m, p) @ f.matrix) @ Bd)
    out.append(CheckReport(f"{sid}/property1", 'approx', PASS if r1 <= tol else FAIL, r1, tol, None,
                           None if r1 <= tol else {'reason': 'g_p 的起点不是 π_p∘f'}))
    if stage.lower_index is not None and p > 0:
        lower = stage.info.get('lower')
        lower_slices = lower.slices if lower is not None else stage.slices
        r3 = 0.0
        for s, idx in zip(stage.slices, stage.lower_index):
            r3 = max(r3, _max_abs((target.pi[p] @ s.matrix - lower_slices[idx].matrix) @ Bd))
        monotone = all(a <= b for a, b in zip(stage.lower_index, stage.lower_index[1:]))
        ok = r3 <= tol and monotone and stage.lower_index[-1] == len(lower_slices) - 1
        out.append(CheckReport(f"{sid}/property3", 'approx', PASS if ok else FAIL, r3, tol, None,
                               {'slices': len(stage.slices)} if ok else {'reason': 'π∘g_p 与 g_{p-1} 不相容'}))
    cellular, ranks = is_cellular(source, target, ConcreteMorphism(f.domain, target.algebras[p],
                                                                    stage.slices[-1].matrix), p)
    out.append(CheckReport(f"{sid}/property4", 'approx', PASS if cellular else FAIL, float(sum(ranks.values())),
                           0.0, None, {'ranks': {str(k): int(v) for k, v in ranks.items()}}))
    return out


def _global_certificates(source, target, stages, f, g, h, check_id, tol):
    out = []
    B = f.domain.basis_matrix()
    r1 = _max_abs((g.start.matrix - f.matrix) @ B)
    out.append(CheckReport(f"{check_id}/property1", 'approx', PASS if r1 <= tol else FAIL, r1, tol, None,
                           None if r1 <= tol else {'reason': '同伦起点不是 f'}))
    # 2: 起点已是胞腔映射、边界数据不动的目标块在整个同伦中保持不动
    m = target.top
    E = target.cell_matrix(m)
    worst, frozen = 0.0, []
    for stage in stages:
        for j in stage.settled_blocks:
            rows = target.rows_for(m, lambda r, p=stage.p, j=j: r.level == p and r.block == j)
            if not rows:
                continue
            start = E[rows] @ g.start.matrix @ B
            if not _block_cellular(source, target, E[rows], g.start.matrix, stage.p):
                continue
            frozen.append(f"{stage.p}:{j}")
            for s in g.slices:
                worst = max(worst, _max_abs(E[rows] @ s.matrix @ B - start))
    out.append(CheckReport(f"{check_id}/property2", 'approx', PASS if worst <= tol else FAIL, worst, tol, None,
                           {'stationary_blocks': frozen}))
    cellular, ranks = is_cellular(source, target, h)
    out.append(CheckReport(f"{check_id}/property4", 'approx', PASS if cellular else FAIL,
                           float(sum(ranks.values())), 0.0, None, {'ranks': {str(k): int(v) for k, v in ranks.items()}}))
    star = max(star_residual(s)[0] for s in g.slices)
    out.append(CheckReport(f"{check_id}/slices", 'approx', PASS if star <= tol else FAIL, star, tol, None,
                           {'slices': len(g.slices)}))
    return out


def _block_cellular(source, target, rows_matrix, fm, level):
    """目标块在 f 下的所有成分层数都不超过 level"""
    Phi = source.inverse(source.top)
    cols = source.rows_for(source.top, lambda r: r.level > level)
    if not cols:
        return True
    return matrix_rank(rows_matrix @ fm @ Phi[:, cols]) == 0
