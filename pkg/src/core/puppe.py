"""
同伦构造：映射柱收缩、映射锥分裂、Puppe 长链及其证书
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .check import FAIL, PASS, CheckReport, Homotopy, check_exact_row, check_homotopy, ideal_blocks_of, star_residual
from .discretize import as_resolution, discretize_algebra, discretize_morphism
from .errors import NotABlockIdealError, StructureError
from .expr import (Compose, ConstantEmbed, Cylinder, Evaluation, FiniteDim, HalfOpenTensor, Identity,
                   IntervalTensor, MappingCone, OpenCubeTensor, Pair, ProjectionFirst, ProjectionSecond,
                   SuspendedMorphism, Zero, ZeroExtend, render, render_morphism)
from .fdalg import ConcreteMorphism, FiniteDimAlgebra, compose_concrete, direct_sum, identity_morphism, zero_morphism
from .settings import DEFAULT_TOLERANCE, RANK_RTOL

logger = logging.getLogger(__name__)

CYLINDER_CLAIM = "命题原文：Cyl(φ : A -> B) ≃ B"
CYLINDER_VERIFIED = "已验证：Cyl(φ) ≃ A（p∘s = id，s∘p ≃ id）"
CONE_CLAIM = "命题原文：Cone(φ : A -> B) ≃ B/A"
CONE_VERIFIED = "已验证：Cone(ι) ≅ Cone(A) ⊕ S(B/A)，Cone(A) 可缩，同伦型为 S(B/A)；与 B/A 的关系未验证"


def _max_abs(M):
    M = np.asarray(M)
    return float(np.abs(M).max()) if M.size else 0.0


def _reindex(points, base_dim, index_of):
    """网格重排：第 i 个网格块取自第 index_of(i) 个，index_of 返回 None 时为零"""
    n = len(points)
    M = np.zeros((n * base_dim, n * base_dim))
    for i in range(n):
        k = index_of(i)
        if k is not None:
            M[i * base_dim:(i + 1) * base_dim, k * base_dim:(k + 1) * base_dim] = np.eye(base_dim)
    return M


# ---------------------------------------------------------------- 映射柱收缩

@dataclass
class CylinderRetraction:
    """p : Cyl(φ) -> A，s : A -> Cyl(φ)，以及 s∘p 到 id 的滑动同伦"""
    p: ConcreteMorphism
    s: ConcreteMorphism
    homotopy: Homotopy
    reports: list = field(default_factory=list)
    p_expr: object = None
    s_expr: object = None


def cylinder_section(phi):
    """s : a -> (a, 常值 φ(a))"""
    cyl = Cylinder(phi)
    return Pair(cyl, Identity(phi.domain), Compose(ConstantEmbed(IntervalTensor(1, phi.codomain)), phi))


def sliding_homotopy(phi, res):
    """
    H_u(a, g) = (a, t -> g(1 - u + u t))，第 j 个切片把 g 按 i -> N - j + ⌊i j / N⌋ 重排
    """
    res = as_resolution(res)
    N = res.N
    cyl = discretize_algebra(Cylinder(phi), res)
    dA = discretize_algebra(phi.domain, res).ambient_dim
    dB = discretize_algebra(phi.codomain, res).ambient_dim
    slices = []
    for j in range(N + 1):
        R = _reindex(range(N + 1), dB, lambda i, j=j: N - j + (i * j) // N)
        M = np.zeros((cyl.ambient_dim, cyl.ambient_dim))
        M[:dA, :dA] = np.eye(dA)
        M[dA:, dA:] = R
        slices.append(ConcreteMorphism(cyl, cyl, M, f"H[{j}/{N}]"))
    return Homotopy(slices, [Fraction(j, N) for j in range(N + 1)], f"slide({render_morphism(phi)})")


def cyl_retraction(phi, res, tol=DEFAULT_TOLERANCE, check_id=None):
    """映射柱形变收缩到定义域 A：p∘s = id 严格成立，s∘p 经滑动同伦连到 id"""
    res = as_resolution(res)
    check_id = check_id or f"cylinder/{render_morphism(phi)}/N{res.N}"
    cyl = Cylinder(phi)
    p_expr, s_expr = ProjectionFirst(cyl), cylinder_section(phi)
    p, s = discretize_morphism(p_expr, res), discretize_morphism(s_expr, res)
    H = sliding_homotopy(phi, res)
    reports = []
    ps = compose_concrete(p, s)
    exact = np.array_equal(ps.matrix, np.eye(ps.matrix.shape[0]))
    reports.append(CheckReport(f"{check_id}/retraction", 'cylinder', PASS if exact else FAIL,
                               _max_abs(ps.matrix - np.eye(ps.matrix.shape[0])), 0.0, None,
                               {'claim': CYLINDER_CLAIM, 'verified': CYLINDER_VERIFIED} if exact
                               else {'reason': 'p∘s ≠ id', 'claim': CYLINDER_CLAIM}))
    sp = compose_concrete(s, p)
    ident = identity_morphism(sp.domain)
    report = check_homotopy(H, sp, ident, tol, f"{check_id}/homotopy")
    report.kind = 'cylinder'
    report.witness = dict(report.witness or {}, claim=CYLINDER_CLAIM, verified=CYLINDER_VERIFIED)
    reports.append(report)
    worst = max(star_residual(p)[0], star_residual(s)[0])
    reports.append(CheckReport(f"{check_id}/maps", 'cylinder', PASS if worst <= tol else FAIL, worst, tol, None,
                               None if worst <= tol else {'reason': 'p 或 s 不是 *-同态'}))
    logger.info(f"Cylinder retraction {check_id}: {sum(r.passed for r in reports)}/{len(reports)} passed")
    return CylinderRetraction(p, s, H, reports, p_expr, s_expr)


# ---------------------------------------------------------------- 映射锥分裂

@dataclass
class ConeSplit:
    """Cone(ι) ≅ Cone(A) ⊕ S(Q) 的显式同构与 Cone(A) 的零伦"""
    iso: ConcreteMorphism
    ideal_blocks: list
    quotient_blocks: list
    null_homotopy: Homotopy
    homotopy_type: str
    reports: list = field(default_factory=list)


def cone_split_equivalence(iota, res, tol=DEFAULT_TOLERANCE, check_id=None, rtol=RANK_RTOL):
    """
    ι : A -> B 是块理想的包含时，把 (a, g) ∈ Cone(ι) 按 B = A ⊕ Q 拆成
    g_A ∈ C_0((0,1])⊗A 与 g_Q ∈ C_0((0,1))⊗Q（g_Q(1) = 0），a 由 g_A(1) 决定
    """
    res = as_resolution(res)
    N = res.N
    check_id = check_id or f"conesplit/{render_morphism(iota)}/N{N}"
    if not isinstance(iota.codomain, FiniteDim):
        raise NotABlockIdealError(f"值域必须是有限维块代数: {render(iota.codomain)}")
    inc = discretize_morphism(iota, res)
    ideal = ideal_blocks_of(inc, rtol)
    B = inc.codomain
    quotient = [j for j in range(len(B.blocks)) if j not in ideal]
    cone = discretize_algebra(MappingCone(iota), res)
    dA = inc.domain.ambient_dim
    dB = B.ambient_dim
    cone_part = FiniteDimAlgebra.full(tuple(B.blocks[j] for j in ideal) * N)
    susp_part = FiniteDimAlgebra.full(tuple(B.blocks[j] for j in quotient) * (N - 1))
    target = direct_sum(cone_part, susp_part)
    rows = []
    # Cone(A) 部分：所有半开网格点上的 A 块
    for i in range(N):
        for j in ideal:
            sl = B.block_slice(j)
            for r in range(sl.start, sl.stop):
                rows.append(dA + i * dB + r)
    # S(Q) 部分：内部网格点上的 Q 块
    for i in range(N - 1):
        for j in quotient:
            sl = B.block_slice(j)
            for r in range(sl.start, sl.stop):
                rows.append(dA + i * dB + r)
    M = np.eye(cone.ambient_dim)[rows] if rows else np.zeros((0, cone.ambient_dim))
    iso = ConcreteMorphism(cone, target, M, f"split[{render_morphism(iota)}]")
    reports = []
    rank = iso.rank(rtol)
    bijective = rank == cone.dim == target.dim
    star = star_residual(iso)[0]
    ok = bijective and star <= tol
    reports.append(CheckReport(f"{check_id}/decomposition", 'conesplit', PASS if ok else FAIL, star, tol, None,
                               {'dims': {'cone': int(cone.dim), 'cone_A': int(cone_part.dim),
                                         'suspension_Q': int(susp_part.dim)},
                                'rank': int(rank), 'ideal_blocks': ideal, 'quotient_blocks': quotient}))
    H = cone_null_homotopy(cone_part, N)
    report = check_homotopy(H, zero_morphism(cone_part, cone_part), identity_morphism(cone_part), tol,
                            f"{check_id}/contraction")
    report.kind = 'conesplit'
    reports.append(report)
    homotopy_type = f"S({'+'.join(f'M{B.blocks[j]}' for j in quotient) or '0'})"
    reports.append(CheckReport(f"{check_id}/type", 'conesplit', PASS if all(r.passed for r in reports) else FAIL,
                               0.0, tol, None, {'homotopy_type': homotopy_type, 'claim': CONE_CLAIM,
                                                'verified': CONE_VERIFIED}))
    logger.info(f"Cone split {check_id}: homotopy type {homotopy_type}")
    return ConeSplit(iso, ideal, quotient, H, homotopy_type, reports)


def cone_null_homotopy(cone_part, N):
    """C_0((0,1])⊗A 上的零伦 h_u(g)(t) = g(u t)，第 j 个切片把点 i 取自 ⌊i j / N⌋"""
    if cone_part.ambient_dim % N:
        raise StructureError("锥代数的环境维数不是网格点数的整数倍")
    d = cone_part.ambient_dim // N
    slices = []
    for j in range(N + 1):
        # 半开网格第 i 个点是 (i+1)/N
        M = _reindex(range(N), d, lambda i, j=j: ((i + 1) * j) // N - 1 if ((i + 1) * j) // N >= 1 else None)
        slices.append(ConcreteMorphism(cone_part, cone_part, M, f"h[{j}/{N}]"))
    return Homotopy(slices, [Fraction(j, N) for j in range(N + 1)], 'contract')


# ---------------------------------------------------------------- Puppe 链

def suspend(m, times=1):
    for _ in range(times):
        m = SuspendedMorphism(m)
    return m


def suspend_algebra(a, times=1):
    for _ in range(times):
        a = OpenCubeTensor(1, a)
    return a


@dataclass(frozen=True)
class PuppeChain:
    """
    A_0 = B <- A_1 = A <- A_2 = Cyl(φ) <- A_3 = Cone(φ) <- S(A) <- S(Cyl) <- S(Cone) <- S^2(A) ...
    maps[i] : terms[i+1] -> terms[i]
    """
    phi: object
    terms: tuple
    maps: tuple

    def __len__(self):
        return len(self.terms)

    def labels(self, names=None):
        return [render(t, names) for t in self.terms]

    def map_labels(self):
        return [f"φ{i}" for i in range(len(self.maps))]


def _chain_term(phi, i):
    base = (phi.codomain, phi.domain, Cylinder(phi), MappingCone(phi))
    if i < 4:
        return base[i]
    return suspend_algebra(_chain_term(phi, i - 3))


def _chain_map(phi, i):
    if i == 0:
        return phi
    B = phi.codomain
    cyl, cone = Cylinder(phi), MappingCone(phi)
    if i == 1:
        return ProjectionFirst(cyl)
    if i == 2:
        return Pair(cyl, ProjectionFirst(cone),
                    Compose(ZeroExtend(HalfOpenTensor(B), IntervalTensor(1, B)), ProjectionSecond(cone)))
    if i == 3:
        sa = OpenCubeTensor(1, phi.domain)
        return Pair(cone, Zero(sa, phi.domain),
                    Compose(ZeroExtend(OpenCubeTensor(1, B), HalfOpenTensor(B)), SuspendedMorphism(phi)))
    return SuspendedMorphism(_chain_map(phi, i - 3))


def puppe_chain(phi, terms):
    """前 terms 项以及连接映射 φ_0 … φ_{terms-2}"""
    if terms < 2:
        raise StructureError(f"Puppe 链至少两项: {terms}")
    chain = PuppeChain(phi, tuple(_chain_term(phi, i) for i in range(terms)),
                       tuple(_chain_map(phi, i) for i in range(terms - 1)))
    for i, m in enumerate(chain.maps):
        if m.domain != chain.terms[i + 1] or m.codomain != chain.terms[i]:
            raise StructureError(f"φ{i} 的类型与链的项不符")
    logger.info(f"Built Puppe chain of {terms} terms for {render_morphism(phi)}")
    return chain


def discretize_chain(chain, res):
    """链上每个连接映射的具体矩阵"""
    return [discretize_morphism(m, res) for m in chain.maps]


def cone_row(phi):
    """0 -> S(B) -> Cone(φ) -> A -> 0"""
    B = phi.codomain
    cone = MappingCone(phi)
    sb = OpenCubeTensor(1, B)
    inclusion = Pair(cone, Zero(sb, phi.domain), ZeroExtend(sb, HalfOpenTensor(B)))
    return inclusion, ProjectionFirst(cone)


def _kron_homotopy(H, times, res, domain, codomain):
    """S^times 作用在同伦的每个切片上"""
    if not times:
        return H
    k = (as_resolution(res).N - 1) ** times
    slices = [ConcreteMorphism(domain, codomain, np.kron(np.eye(k), s.matrix), f"S^{times}({s.provenance})")
              for s in H.slices]
    return Homotopy(slices, list(H.times), f"S^{times}({H.label})")


def chain_certificates(chain, res, tol=DEFAULT_TOLERANCE, check_id=None):
    """
    (i) Cyl(φ) -> A -> B 经 H_u(a, g) = g(u) 零伦，复合 φ_2 后 u = 0 端严格为零
    (ii) 0 -> S(B) -> Cone(φ) -> A -> 0 正合
    (iii) S(B) -> Cone(φ) -> A 的复合严格为零
    (iv) 链中出现的每一层双角标都在 S 之后重新验证
    """
    res = as_resolution(res)
    N = res.N
    phi = chain.phi
    check_id = check_id or f"puppe/{render_morphism(phi)}/N{N}"
    reports = []
    levels = [0] + [s for s in range(1, len(chain.terms)) if 3 + 3 * s < len(chain.terms)]
    base_ranks = None
    for s in levels:
        sid = check_id if s == 0 else f"{check_id}/S{s}"
        # (i)
        cyl = Cylinder(phi)
        H = Homotopy([discretize_morphism(Compose(Evaluation(t, IntervalTensor(1, phi.codomain)),
                                                  ProjectionSecond(cyl)), res)
                      for t in [Fraction(j, N) for j in range(N + 1)]], label='g(u)')
        H = _kron_homotopy(H, s, res, discretize_algebra(suspend_algebra(cyl, s), res),
                           discretize_algebra(suspend_algebra(phi.codomain, s), res))
        start_expr = Compose(Evaluation(Fraction(0), IntervalTensor(1, phi.codomain)), ProjectionSecond(cyl))
        end_expr = Compose(phi, ProjectionFirst(cyl))
        start = discretize_morphism(suspend(start_expr, s), res)
        end = discretize_morphism(suspend(end_expr, s), res)
        report = check_homotopy(H, start, end, tol, f"{sid}/i/cylinder")
        report.kind = 'puppe'
        reports.append(report)
        phi2 = discretize_morphism(suspend(_chain_map(phi, 2), s), res)
        H2 = H.after(phi2)
        zero_start = _max_abs(H2.start.matrix @ phi2.domain.basis_matrix())
        report = check_homotopy(H2, zero_morphism(phi2.domain, H2.codomain),
                                compose_concrete(end, phi2), tol, f"{sid}/i/null")
        report.kind = 'puppe'
        report.witness = dict(report.witness or {}, zero_end_exact=zero_start == 0.0)
        if zero_start != 0.0:
            report.status = FAIL
        reports.append(report)
        # (ii)
        inclusion, projection = cone_row(phi)
        inc = discretize_morphism(suspend(inclusion, s), res)
        proj = discretize_morphism(suspend(projection, s), res)
        report = check_exact_row(inc, proj, f"{sid}/ii/row", tol)
        report.kind = 'puppe'
        ranks = (report.witness['rank_f'], report.witness['rank_g'])
        if s == 0:
            base_ranks = ranks
        else:
            scale = (N - 1) ** s
            scaled = ranks == (base_ranks[0] * scale, base_ranks[1] * scale)
            report.witness['scaled_from_base'] = bool(scaled)
            if not scaled:
                report.status = FAIL
        reports.append(report)
        # (iii)
        composite = compose_concrete(proj, inc)
        nonzero = int(np.count_nonzero(composite.matrix))
        reports.append(CheckReport(f"{sid}/iii/composite", 'puppe', PASS if nonzero == 0 else FAIL,
                                   _max_abs(composite.matrix), 0.0, None,
                                   {'nonzero_entries': nonzero}))
    logger.info(f"Puppe certificates {check_id}: {sum(r.passed for r in reports)}/{len(reports)} passed")
    return reports
