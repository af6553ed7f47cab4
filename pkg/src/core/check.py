"""
验证引擎：泛性质、正合性、同伦、NDR/HEP 条件

每个检查返回一个 CheckReport；数学上的失败不抛异常，只体现在报告里。
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd

from .discretize import (as_resolution, discretize_morphism, discretize_pullback,
                         interval_points)
from .errors import NotABlockIdealError, StructureError
from .expr import Compose, Evaluation, IntervalTensor, Pullback
from .fdalg import (ConcreteMorphism, FiniteDimAlgebra, compose_concrete, decompose_star_hom, matrix_rank,
                    null_space, random_multiplicity_morphism, span_closure, spectral_projections)
from .settings import BASIS_PAIR_CAP, DEFAULT_TOLERANCE, DEFAULT_TRIALS, RANDOM_PAIR_COUNT, RANK_RTOL

logger = logging.getLogger(__name__)

PASS, FAIL, SKIP = 'pass', 'fail', 'skip'

NDR_READING_NOTE = "条件 1 的解读：u 限制到 C_0((0,1]) 后的像生成的理想与 A 只交于零"


@dataclass
class CheckReport:
    """一次检查的结果"""
    id: str
    kind: str
    status: str
    max_residual: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    seed: int = None
    witness: dict = None

    def __post_init__(self):
        if self.status not in (PASS, FAIL, SKIP):
            raise StructureError(f"未知的检查状态: {self.status}")
        self.max_residual = float(self.max_residual)
        if self.status == FAIL and not self.witness:
            self.witness = {'reason': 'unspecified'}

    @property
    def passed(self):
        return self.status == PASS

    def to_dict(self):
        out = {
            'id': self.id,
            'kind': self.kind,
            'status': self.status,
            'max_residual': self.max_residual,
            'tolerance': float(self.tolerance),
            'seed': self.seed,
        }
        if self.witness is not None:
            out['witness'] = self.witness
        return out


def vector_json(v, digits=12):
    """复向量 -> [[re, im], ...]"""
    return [[round(float(z.real), digits), round(float(z.imag), digits)] for z in np.asarray(v).reshape(-1)]


def _opnorms(algebra, V):
    """按列计算各块算子范数的最大值"""
    V = np.asarray(V).reshape(algebra.ambient_dim, -1)
    out = np.zeros(V.shape[1])
    for j, n in enumerate(algebra.blocks):
        mats = V[algebra.block_slice(j)].reshape(n, n, -1)
        out = np.maximum(out, np.linalg.norm(np.moveaxis(mats, 2, 0), ord=2, axis=(1, 2)))
    return out


def _max_abs(M):
    M = np.asarray(M)
    return float(np.abs(M).max()) if M.size else 0.0


# ---------------------------------------------------------------- *-同态

def star_residual(f, rng=None):
    """
    f 在定义域基的所有元素对上的乘法/伴随残差；维数超过上限时改用随机元素对。
    返回 (残差, 最坏处的说明)
    """
    dom, cod = f.domain, f.codomain
    if dom.dim == 0:
        return 0.0, None
    if dom.dim <= BASIS_PAIR_CAP:
        X = dom.basis_matrix()
        mode = 'basis'
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        X = np.column_stack([dom.random_element(rng) for _ in range(RANDOM_PAIR_COUNT)])
        mode = 'random'
    FX = f.matrix @ X
    worst, where = 0.0, None
    for i in range(X.shape[1]):
        lhs = f.matrix @ dom.mul(X[:, i], X)
        rhs = cod.mul(FX[:, i], FX)
        norms = _opnorms(cod, lhs - rhs)
        j = int(np.argmax(norms))
        if norms[j] > worst:
            worst, where = float(norms[j]), {'defect': 'product', 'pair': [i, j], 'mode': mode}
    norms = _opnorms(cod, f.matrix @ dom.adjoint(X) - cod.adjoint(FX))
    j = int(np.argmax(norms))
    if norms[j] > worst:
        worst, where = float(norms[j]), {'defect': 'adjoint', 'element': j, 'mode': mode}
    leak = f.leak_residual()
    if leak > worst:
        worst, where = leak, {'defect': 'leaves codomain subalgebra', 'mode': mode}
    return worst, where


def check_star_hom(f, tol=DEFAULT_TOLERANCE, check_id='star', seed=None):
    """f 是否保持乘法和伴随"""
    rng = np.random.default_rng(seed) if seed is not None else None
    residual, where = star_residual(f, rng)
    status = PASS if residual <= tol else FAIL
    witness = None
    if status == FAIL:
        witness = dict(where or {}, morphism=f.provenance, residual=residual)
    logger.debug(f"[{check_id}] star-hom residual {residual:.3e}")
    return CheckReport(check_id, 'star', status, residual, tol, seed, witness)


# ---------------------------------------------------------------- 拉回

@dataclass
class PullbackSquare:
    """
    X --delta--> B
    |gamma       |beta
    A --alpha--> C
    """
    X: FiniteDimAlgebra
    gamma: ConcreteMorphism
    delta: ConcreteMorphism
    alpha: ConcreteMorphism
    beta: ConcreteMorphism

    def commutativity_residual(self):
        B = self.X.basis_matrix()
        diff = (self.alpha.matrix @ self.gamma.matrix - self.beta.matrix @ self.delta.matrix) @ B
        return _max_abs(diff)


def pullback_square(alpha, beta, res):
    """拉回表达式的规范方块：X 为纤维积，gamma/delta 为两个投影"""
    res = as_resolution(res)
    alpha_c, beta_c = discretize_morphism(alpha, res), discretize_morphism(beta, res)
    fp = discretize_pullback(Pullback(alpha, beta), res)
    return PullbackSquare(fp.algebra, fp.pr1, fp.pr2, alpha_c, beta_c)


def random_cone(X, rng):
    """随机 *-同态 C^r -> X：取 X 中随机自伴元的谱投影并随机分组"""
    projections = spectral_projections(X, X.random_self_adjoint(rng))
    if not projections:
        return np.zeros((X.ambient_dim, 0), dtype=complex)
    r = int(rng.integers(1, len(projections) + 1))
    groups = rng.integers(0, r, size=len(projections))
    columns = [sum(p for p, g in zip(projections, groups) if g == k) for k in range(r) if (groups == k).any()]
    return np.column_stack(columns)


def check_pullback_universal(square, trials=DEFAULT_TRIALS, seed=0, tol=DEFAULT_TOLERANCE,
                             check_id='pullback', rtol=RANK_RTOL):
    """
    (i) ker gamma ∩ ker delta = 0
    (ii) 随机锥 (Y, phi, psi) 的中介映射存在、唯一且与构造时的映射一致
    """
    commute = square.commutativity_residual()
    if commute > tol:
        return CheckReport(check_id, 'pullback', SKIP, commute, tol, seed,
                           {'reason': '外方块不交换', 'commutativity_residual': commute})
    X = square.X
    stacked = np.vstack([square.gamma.coord_matrix(), square.delta.coord_matrix()])
    rank = matrix_rank(stacked, rtol)
    overlap = X.dim - rank
    if overlap > 0:
        common = X.lift(null_space(stacked, rtol)[:, 0])
        return CheckReport(check_id, 'pullback', FAIL, float(np.linalg.norm(
            np.vstack([square.gamma.matrix, square.delta.matrix]) @ common)), tol, seed,
            {'kernel_intersection_rank': int(overlap), 'common_kernel_vector': vector_json(common),
             'blocks': list(X.labels)})
    rng = np.random.default_rng(seed)
    BX = X.basis_matrix()
    G = np.vstack([square.gamma.matrix @ BX, square.delta.matrix @ BX])
    worst, cone_ranks = commute, []
    for _ in range(trials):
        sigma_true = random_cone(X, rng)
        cone_ranks.append(int(sigma_true.shape[1]))
        if sigma_true.shape[1] == 0:
            continue
        psi = square.gamma.matrix @ sigma_true
        phi = square.delta.matrix @ sigma_true
        rhs = np.vstack([psi, phi])
        coords, *_ = np.linalg.lstsq(G, rhs, rcond=None)
        sigma = BX @ coords
        worst = max(worst, _max_abs(G @ coords - rhs), _max_abs(sigma - sigma_true))
    status = PASS if worst <= tol else FAIL
    witness = {'kernel_intersection_rank': 0, 'dim': int(X.dim), 'cone_ranks': cone_ranks}
    if status == FAIL:
        witness['reason'] = '中介映射与构造的锥不一致'
    logger.debug(f"[{check_id}] pullback universal residual {worst:.3e} over {trials} cones")
    return CheckReport(check_id, 'pullback', status, worst, tol, seed, witness)


# ---------------------------------------------------------------- 推出

@dataclass
class PushoutSquare:
    """
    C --alpha--> A
    |beta        |delta
    B --gamma--> X
    """
    X: FiniteDimAlgebra
    gamma: ConcreteMorphism
    delta: ConcreteMorphism
    alpha: ConcreteMorphism
    beta: ConcreteMorphism

    def commutativity_residual(self):
        B = self.alpha.domain.basis_matrix()
        diff = (self.delta.matrix @ self.alpha.matrix - self.gamma.matrix @ self.beta.matrix) @ B
        return _max_abs(diff)


def pushout_square(alpha, beta, gamma, delta, res):
    res = as_resolution(res)
    alpha_c, beta_c = discretize_morphism(alpha, res), discretize_morphism(beta, res)
    gamma_c, delta_c = discretize_morphism(gamma, res), discretize_morphism(delta, res)
    return PushoutSquare(gamma_c.codomain, gamma_c, delta_c, alpha_c, beta_c)


def check_pushout_universal(square, trials=DEFAULT_TRIALS, seed=0, tol=DEFAULT_TOLERANCE,
                            check_id='pushout', rtol=RANK_RTOL):
    """
    (i) gamma(B) ∪ delta(A) 生成 X
    (ii) 随机余锥上中介映射由生成元上的值唯一确定
    """
    commute = square.commutativity_residual()
    if commute > tol:
        return CheckReport(check_id, 'pushout', SKIP, commute, tol, seed,
                           {'reason': '外方块不交换', 'commutativity_residual': commute})
    X = square.X
    gens = np.column_stack([square.gamma.matrix @ square.gamma.domain.basis_matrix(),
                            square.delta.matrix @ square.delta.domain.basis_matrix()])
    closure = span_closure(X, gens, rtol=rtol)
    if closure.dim < X.dim:
        return CheckReport(check_id, 'pushout', FAIL, float(X.dim - closure.dim), tol, seed,
                           {'reason': '像不生成候选推出', 'generated_dim': int(closure.dim), 'dim': int(X.dim)})
    rng = np.random.default_rng(seed)
    BX = X.basis_matrix()
    worst = commute
    for _ in range(trials):
        tau = random_multiplicity_morphism(X.blocks, rng)
        T = tau.to_matrix()
        Y = FiniteDimAlgebra.full(tau.target_blocks)
        carried = span_closure(X, gens, Y, T @ gens, rtol=rtol)
        sigma = carried.images @ np.linalg.pinv(carried.words)
        worst = max(worst, carried.consistency_residual, _max_abs((sigma - T) @ BX))
    status = PASS if worst <= tol else FAIL
    witness = {'generated_dim': int(closure.dim), 'dim': int(X.dim), 'trials': trials}
    if status == FAIL:
        witness['reason'] = '余锥的中介映射不唯一或不相容'
    return CheckReport(check_id, 'pushout', status, worst, tol, seed, witness)


# ---------------------------------------------------------------- 正合行

def check_exact_row(f, g, check_id='row', tol=DEFAULT_TOLERANCE, rtol=RANK_RTOL):
    """0 -> K --f--> E --g--> Q -> 0 是否正合（整数秩比较）"""
    if f.codomain.ambient_dim != g.domain.ambient_dim:
        raise StructureError(f"行不可复合: {f.provenance} / {g.provenance}")
    dK, dE, dQ = f.domain.dim, f.codomain.dim, g.codomain.dim
    rf, rg = f.rank(rtol), g.rank(rtol)
    gf = compose_concrete(g, f)
    rgf = gf.rank(rtol)
    leak = max(f.leak_residual(), g.leak_residual())
    checks = {
        'injective': rf == dK,
        'surjective': rg == dQ,
        'composite_zero': rgf == 0,
        'image_is_kernel': rf == dE - rg,
    }
    residual = max(_max_abs(gf.coord_matrix()), leak)
    ok = all(checks.values()) and leak <= tol
    witness = {'dims': [int(dK), int(dE), int(dQ)], 'rank_f': int(rf), 'rank_g': int(rg), 'rank_gf': int(rgf)}
    if not ok:
        witness['violated'] = sorted(k for k, v in checks.items() if not v)
        if leak > tol:
            witness['violated'].append('leaves_subalgebra')
    return CheckReport(check_id, 'row', PASS if ok else FAIL, residual, tol, None, witness)


# ---------------------------------------------------------------- 同伦

@dataclass
class Homotopy:
    """时间网格上的一族 *-同态切片 ev(t)∘Φ"""
    slices: list
    times: list = field(default_factory=list)
    label: str = ''

    def __post_init__(self):
        if not self.slices:
            raise StructureError("同伦至少要有一个切片")
        if not self.times:
            n = len(self.slices) - 1
            self.times = [Fraction(j, max(n, 1)) for j in range(n + 1)]

    @property
    def start(self):
        return self.slices[0]

    @property
    def end(self):
        return self.slices[-1]

    @property
    def domain(self):
        return self.slices[0].domain

    @property
    def codomain(self):
        return self.slices[0].codomain

    @classmethod
    def constant(cls, f, steps=1, label='const'):
        return cls([f] * (steps + 1), label=label)

    @classmethod
    def from_expr(cls, Phi, res, label=None):
        """Φ : A -> C(I)⊗B 的表达式，按网格时间取切片"""
        res = as_resolution(res)
        if not (isinstance(Phi.codomain, IntervalTensor) and Phi.codomain.n == 1):
            raise StructureError("同伦的值域必须是 C(I)⊗B")
        slices = [discretize_morphism(Compose(Evaluation(t, Phi.codomain), Phi), res)
                  for t in interval_points(res.N)]
        return cls(slices, interval_points(res.N), label or str(Phi))

    def reversed(self):
        return Homotopy(list(reversed(self.slices)), [1 - t for t in reversed(self.times)], f"{self.label}^-1")

    def then(self, g):
        """后复合 g"""
        return Homotopy([compose_concrete(g, s) for s in self.slices], list(self.times), self.label)

    def after(self, f):
        """前复合 f"""
        return Homotopy([compose_concrete(s, f) for s in self.slices], list(self.times), self.label)


def check_homotopy(H, phi, psi, tol=DEFAULT_TOLERANCE, check_id='homotopy'):
    """端点等于 phi / psi，且每个切片都是 *-同态"""
    B = H.domain.basis_matrix()
    start = _max_abs((H.start.matrix - phi.matrix) @ B)
    end = _max_abs((H.end.matrix - psi.matrix) @ B)
    worst = max(start, end)
    witness = None
    if start > tol:
        witness = {'endpoint': 'start', 'residual': start}
    elif end > tol:
        witness = {'endpoint': 'end', 'residual': end}
    for j, s in enumerate(H.slices):
        r, where = star_residual(s)
        if r > worst:
            worst = r
        if r > tol and witness is None:
            witness = dict(where or {}, slice=j, time=str(H.times[j]), residual=r)
    status = PASS if worst <= tol else FAIL
    return CheckReport(check_id, 'homotopy', status, worst, tol, None,
                       witness if status == FAIL else {'slices': len(H.slices)})


# ---------------------------------------------------------------- NDR / HEP

def ideal_blocks_of(inclusion, rtol=RANK_RTOL):
    """包含映射 A -> B 覆盖的 B 的块；不是块理想的包含则报错"""
    dom, cod = inclusion.domain, inclusion.codomain
    if dom.constrained or cod.constrained:
        raise NotABlockIdealError("块理想要求无约束的块代数")
    m, residual = decompose_star_hom(inclusion.matrix, dom.blocks, cod.blocks, rtol)
    M = m.multiplicity
    if residual > DEFAULT_TOLERANCE or (M.sum(axis=0) != 1).any() or (M.sum(axis=1) > 1).any():
        raise NotABlockIdealError(f"{inclusion.provenance} 不是块理想的包含，重数 {M.tolist()}")
    blocks = []
    for i in range(M.shape[1]):
        j = int(np.flatnonzero(M[:, i])[0])
        if cod.blocks[j] != dom.blocks[i]:
            raise NotABlockIdealError(f"{inclusion.provenance} 的像不是整个块 {j}")
        blocks.append(j)
    return sorted(blocks)


def _block_columns(B, blocks):
    P = np.zeros((B.ambient_dim, B.ambient_dim))
    for j in blocks:
        sl = B.block_slice(j)
        P[sl, sl] = np.eye(sl.stop - sl.start)
    return P


@dataclass
class NDRData:
    """
    B: 无约束块代数；ideal_blocks: A 占据的块
    u: 离散化的 C[0,1] -> B；phi: B 上的形变 h_t（时间切片）
    """
    B: FiniteDimAlgebra
    ideal_blocks: list
    u: ConcreteMorphism
    phi: Homotopy

    def __post_init__(self):
        if self.B.constrained:
            raise NotABlockIdealError("NDR 数据要求 B 是无约束的块代数")
        blocks = sorted(set(int(j) for j in self.ideal_blocks))
        if any(j < 0 or j >= len(self.B.blocks) for j in blocks):
            raise NotABlockIdealError(f"理想块下标越界: {blocks}")
        self.ideal_blocks = blocks
        interval = self.u.domain
        if interval.constrained or len(interval.blocks) < 2 or any(n != 1 for n in interval.blocks):
            raise StructureError(f"u 的定义域必须是离散化的 C[0,1]，而不是块 {interval.blocks}")
        if self.u.codomain.constrained or self.u.codomain.blocks != self.B.blocks:
            raise StructureError(f"u 的值域块 {self.u.codomain.blocks} ≠ B 的块 {self.B.blocks}")
        for s in self.phi.slices:
            if s.domain.blocks != self.B.blocks or s.codomain.blocks != self.B.blocks:
                raise StructureError(f"形变切片 {s.provenance} 不是 B -> B 的映射")

    @property
    def projection(self):
        """到 A 块的投影 P_A（环境坐标）"""
        return _block_columns(self.B, self.ideal_blocks)

    def detected_blocks(self, tol=DEFAULT_TOLERANCE):
        """u(e_1) 不是块单位的块"""
        e1 = np.zeros(self.u.domain.ambient_dim, dtype=complex)
        e1[-1] = 1
        image = self.B.split(self.u.matrix @ e1)
        return [j for j, X in enumerate(image) if _max_abs(X - np.eye(X.shape[0])) > tol]


def check_ndr_pair(ndr, tol=DEFAULT_TOLERANCE, check_id='ndr'):
    """按时间切片 h_t = ev(t)∘phi 检查 NDR 条件 1-4"""
    B, P_A = ndr.B, ndr.projection
    outside = np.eye(B.ambient_dim) - P_A
    residuals = {}
    # 1: u 在 t > 0 的网格点上的像在 A 块上为零
    U = ndr.u.matrix[:, 1:]
    residuals['preimage'] = _max_abs(P_A @ U)
    # 2: h_0 = id
    residuals['start_identity'] = _max_abs(ndr.phi.start.matrix - np.eye(B.ambient_dim))
    # 3: h_t 固定 A
    residuals['fixes_ideal'] = max(_max_abs((s.matrix - np.eye(B.ambient_dim)) @ P_A) for s in ndr.phi.slices)
    # 4: h_1 把被 u 探测到的块映进 A
    detected = ndr.detected_blocks(tol)
    residuals['end_into_ideal'] = _max_abs(outside @ ndr.phi.end.matrix @ _block_columns(B, detected))
    star = max(star_residual(s)[0] for s in ndr.phi.slices)
    residuals['slices_star_hom'] = star
    worst = max(residuals.values())
    failed = sorted(k for k, v in residuals.items() if v > tol)
    witness = {'note': NDR_READING_NOTE, 'ideal_blocks': list(ndr.ideal_blocks), 'detected_blocks': detected,
               'residuals': {k: float(v) for k, v in sorted(residuals.items())}}
    if failed:
        witness['violated'] = failed
    return CheckReport(check_id, 'ndr', FAIL if failed else PASS, worst, tol, None, witness)


def solve_hep(f, phi_t, ndr, tol=DEFAULT_TOLERANCE, check_id='hep'):
    """
    同伦扩张：给定 f : C -> B 和 C -> A 上的同伦 phi_t（phi_0 = q∘f），
    取 h~_t = h_t ∘ (i∘phi_t + (1 - P_A)∘f)，检查 h~_0 = f、q∘h~_t = phi_t 以及每个切片是 *-同态。
    返回 (Homotopy 或 None, CheckReport)
    """
    ndr_report = check_ndr_pair(ndr, tol, f"{check_id}/ndr")
    if not ndr_report.passed:
        return None, CheckReport(check_id, 'hep', SKIP, ndr_report.max_residual, tol, None,
                                 {'reason': 'NDR 条件不成立', 'ndr': ndr_report.witness})
    if len(phi_t.slices) != len(ndr.phi.slices):
        return None, CheckReport(check_id, 'hep', SKIP, 0.0, tol, None,
                                 {'reason': '同伦与 NDR 形变的时间网格不一致'})
    B = ndr.B
    keep = [j for j in range(len(B.blocks)) if j not in ndr.ideal_blocks]
    # q : B -> A 和 i : A -> B 都是块坐标映射
    q = np.vstack([np.eye(B.ambient_dim)[B.block_slice(j)] for j in ndr.ideal_blocks]) \
        if ndr.ideal_blocks else np.zeros((0, B.ambient_dim))
    i = q.T
    outside = _block_columns(B, keep)
    slices = []
    for h, phi in zip(ndr.phi.slices, phi_t.slices):
        M = h.matrix @ (i @ phi.matrix + outside @ f.matrix)
        slices.append(ConcreteMorphism(f.domain, B, M, f"hep[{phi.provenance}]"))
    H = Homotopy(slices, list(ndr.phi.times), 'hep')
    C = f.domain.basis_matrix()
    residuals = {
        'start': _max_abs((H.start.matrix - f.matrix) @ C),
        'restriction': max(_max_abs((q @ s.matrix - p.matrix) @ C) for s, p in zip(H.slices, phi_t.slices)),
        'slices_star_hom': max(star_residual(s)[0] for s in H.slices),
        'phi_start': _max_abs((phi_t.start.matrix - q @ f.matrix) @ C),
    }
    worst = max(residuals.values())
    failed = sorted(k for k, v in residuals.items() if v > tol)
    witness = {'residuals': {k: float(v) for k, v in sorted(residuals.items())}, 'note': NDR_READING_NOTE}
    if failed:
        witness['violated'] = failed
    return H, CheckReport(check_id, 'hep', FAIL if failed else PASS, worst, tol, None, witness)


# ---------------------------------------------------------------- 汇总

def reports_frame(reports):
    """报告列表 -> DataFrame"""
    rows = [{k: v for k, v in r.to_dict().items() if k != 'witness'} for r in reports]
    df = pd.DataFrame(rows, columns=['id', 'kind', 'status', 'max_residual', 'tolerance', 'seed'])
    return df.sort_values('id').reset_index(drop=True) if not df.empty else df


def status_counts(reports):
    """按检查类型统计 pass / fail / skip 个数"""
    df = reports_frame(reports)
    if df.empty:
        return pd.DataFrame(columns=[PASS, FAIL, SKIP])
    table = df.pivot_table(index='kind', columns='status', values='id', aggfunc='count', fill_value=0)
    return table.reindex(columns=[PASS, FAIL, SKIP], fill_value=0)
