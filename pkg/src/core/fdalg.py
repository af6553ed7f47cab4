"""
有限维 C*-代数 M_{n1} ⊕ ... ⊕ M_{nk} 上的运算

元素用向量表示：各块矩阵按行展开后依次拼接（环境坐标）。
纤维积等子代数带一个正交列基，坐标为 B^H v。
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import StructureError
from .settings import DEFAULT_TOLERANCE, RANK_RTOL, UNITARY_TOLERANCE

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- 秩与零空间

def singular_values(M):
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return np.zeros(0)
    return linalg.svd(M, compute_uv=False)


def _rank_from_sv(s, rtol):
    if s.size == 0:
        return 0
    # 相对阈值，下限按 1 计
    return int(np.sum(s > rtol * max(s[0], 1.0)))


def matrix_rank(M, rtol=RANK_RTOL):
    return _rank_from_sv(singular_values(M), rtol)


def null_space(M, rtol=RANK_RTOL):
    """正交零空间基（列）"""
    M = np.asarray(M, dtype=complex)
    n = M.shape[1]
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    if M.shape[0] == 0:
        return np.eye(n, dtype=complex)
    U, s, Vh = linalg.svd(M, full_matrices=True)
    r = _rank_from_sv(s, rtol)
    return Vh[r:].conj().T


def orth(M, rtol=RANK_RTOL):
    """列空间的正交基"""
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=complex)
    U, s, Vh = linalg.svd(M, full_matrices=False)
    r = _rank_from_sv(s, rtol)
    return U[:, :r]


# ---------------------------------------------------------------- 代数

@dataclass(frozen=True, eq=False)
class FiniteDimAlgebra:
    """
    有限维代数（可带约束子空间）

    blocks: 环境块大小
    basis: 约束子空间的正交基（环境维数 x dim），None 表示整个块代数
    labels: 每个环境块的标签（网格点、分量名）
    """
    blocks: tuple
    basis: np.ndarray = None
    labels: tuple = ()

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        if any(b < 1 for b in blocks):
            raise StructureError(f"块大小必须 >= 1: {blocks}")
        object.__setattr__(self, 'blocks', blocks)
        if not self.labels:
            object.__setattr__(self, 'labels', tuple(f"b{i}" for i in range(len(blocks))))
        if len(self.labels) != len(blocks):
            raise StructureError("块标签个数与块数不一致")
        offsets = np.concatenate([[0], np.cumsum([n * n for n in blocks])]).astype(int)
        object.__setattr__(self, 'offsets', offsets)
        if self.basis is not None:
            basis = np.asarray(self.basis, dtype=complex)
            if basis.shape[0] != offsets[-1]:
                raise StructureError(f"约束基的行数 {basis.shape[0]} ≠ 环境维数 {offsets[-1]}")
            object.__setattr__(self, 'basis', basis)

    @classmethod
    def full(cls, blocks, labels=()):
        return cls(tuple(blocks), None, tuple(labels))

    @classmethod
    def zero(cls):
        return cls((), None, ())

    @property
    def ambient_dim(self):
        return int(self.offsets[-1])

    @property
    def constrained(self):
        return self.basis is not None

    @property
    def dim(self):
        if self.basis is None:
            return self.ambient_dim
        return self.basis.shape[1]

    def block_slice(self, j):
        return slice(int(self.offsets[j]), int(self.offsets[j + 1]))

    def basis_matrix(self):
        """子空间基（环境坐标的列）"""
        if self.basis is None:
            return np.eye(self.ambient_dim, dtype=complex)
        return self.basis

    def coords(self, v):
        if self.basis is None:
            return np.asarray(v, dtype=complex)
        return self.basis.conj().T @ v

    def lift(self, c):
        if self.basis is None:
            return np.asarray(c, dtype=complex)
        return self.basis @ c

    def project(self, v):
        return self.lift(self.coords(v))

    def membership_residual(self, v):
        v = np.asarray(v, dtype=complex)
        if self.basis is None or v.size == 0:
            return 0.0
        return float(np.linalg.norm(v - self.project(v)))

    def split(self, v):
        """向量 -> 各块矩阵"""
        v = np.asarray(v, dtype=complex)
        return [v[self.block_slice(j)].reshape(n, n) for j, n in enumerate(self.blocks)]

    def join(self, mats):
        if len(mats) != len(self.blocks):
            raise StructureError(f"块数不一致: {len(mats)} vs {len(self.blocks)}")
        parts = []
        for m, n in zip(mats, self.blocks):
            m = np.asarray(m, dtype=complex)
            if m.shape != (n, n):
                raise StructureError(f"块形状不一致: {m.shape} vs {(n, n)}")
            parts.append(m.reshape(-1))
        if not parts:
            return np.zeros(0, dtype=complex)
        return np.concatenate(parts)

    def unit(self):
        return self.join([np.eye(n) for n in self.blocks])

    def block_unit(self, j):
        v = np.zeros(self.ambient_dim, dtype=complex)
        n = self.blocks[j]
        v[self.block_slice(j)] = np.eye(n).reshape(-1)
        return v

    def mul(self, u, v):
        """块乘法；u, v 可以是单个向量或按列排列的一批向量"""
        u = np.asarray(u, dtype=complex)
        v = np.asarray(v, dtype=complex)
        single = u.ndim == 1
        U = u.reshape(self.ambient_dim, -1)
        V = v.reshape(self.ambient_dim, -1)
        k = max(U.shape[1], V.shape[1])
        U, V = np.broadcast_to(U, (self.ambient_dim, k)), np.broadcast_to(V, (self.ambient_dim, k))
        single = single and v.ndim == 1
        out = np.zeros((self.ambient_dim, k), dtype=complex)
        for j, n in enumerate(self.blocks):
            sl = self.block_slice(j)
            a = U[sl].reshape(n, n, -1)
            b = V[sl].reshape(n, n, -1)
            out[sl] = np.einsum('ijk,jlk->ilk', a, b).reshape(n * n, -1)
        return out[:, 0] if single else out

    def adjoint(self, u):
        u = np.asarray(u, dtype=complex)
        single = u.ndim == 1
        U = u.reshape(self.ambient_dim, -1)
        out = np.zeros_like(U)
        for j, n in enumerate(self.blocks):
            sl = self.block_slice(j)
            out[sl] = U[sl].reshape(n, n, -1).transpose(1, 0, 2).conj().reshape(n * n, -1)
        return out[:, 0] if single else out

    def norm(self, v):
        """各块算子范数的最大值"""
        mats = self.split(v)
        if not mats:
            return 0.0
        return max(float(np.linalg.norm(m, 2)) for m in mats)

    def random_element(self, rng):
        c = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        return self.lift(c)

    def random_self_adjoint(self, rng):
        x = self.random_element(rng)
        return (x + self.adjoint(x)) / 2

    def closure_residual(self, max_pairs=None):
        """约束子空间对乘法和伴随的封闭性残差（在基上验证）"""
        if self.basis is None or self.dim == 0:
            return 0.0
        B = self.basis
        worst = float(np.linalg.norm(self.adjoint(B) - self.project(self.adjoint(B)))) if B.size else 0.0
        cols = range(self.dim) if max_pairs is None else range(min(self.dim, max_pairs))
        for i in cols:
            prods = self.mul(np.repeat(B[:, [i]], self.dim, axis=1), B)
            worst = max(worst, float(np.linalg.norm(prods - self.project(prods))))
        return worst


def direct_sum(*algebras):
    """直和：环境块拼接，约束基按块对角拼接"""
    blocks, labels = [], []
    for k, a in enumerate(algebras):
        blocks.extend(a.blocks)
        labels.extend(f"{k}:{label}" for label in a.labels)
    if not any(a.constrained for a in algebras):
        return FiniteDimAlgebra(tuple(blocks), None, tuple(labels))
    basis = linalg.block_diag(*[a.basis_matrix() for a in algebras])
    return FiniteDimAlgebra(tuple(blocks), basis, tuple(labels))


@dataclass
class Element:
    """代数中的元素：每个块一个复矩阵"""
    algebra: FiniteDimAlgebra
    blocks: list

    def __post_init__(self):
        if len(self.blocks) != len(self.algebra.blocks):
            raise StructureError(f"元素块数 {len(self.blocks)} 与代数块数 {len(self.algebra.blocks)} 不一致")
        mats = []
        for m, n in zip(self.blocks, self.algebra.blocks):
            m = np.atleast_2d(np.asarray(m, dtype=complex))
            if m.shape != (n, n):
                raise StructureError(f"元素块形状 {m.shape} 与代数块 {(n, n)} 不一致")
            mats.append(m)
        self.blocks = mats

    @classmethod
    def from_vector(cls, algebra, v):
        return cls(algebra, algebra.split(v))

    @property
    def vector(self):
        return self.algebra.join(self.blocks)


def algebra_ops(x, y=None, op='mul'):
    """逐块运算：mul, add, adjoint, norm"""
    if op in ('mul', 'add'):
        if y is None or len(x.blocks) != len(y.blocks) or any(
                a.shape != b.shape for a, b in zip(x.blocks, y.blocks)):
            raise StructureError("两个元素不在同一个代数中")
        if op == 'mul':
            return Element(x.algebra, [a @ b for a, b in zip(x.blocks, y.blocks)])
        return Element(x.algebra, [a + b for a, b in zip(x.blocks, y.blocks)])
    if op == 'adjoint':
        return Element(x.algebra, [a.conj().T for a in x.blocks])
    if op == 'norm':
        return max((float(np.linalg.norm(a, 2)) for a in x.blocks), default=0.0)
    raise StructureError(f"未知运算: {op}")


# ---------------------------------------------------------------- 重数态射

def _is_unitary(U, tol=UNITARY_TOLERANCE):
    return np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=tol * max(1, U.shape[0]))


@dataclass
class MultiplicityMorphism:
    """
    块代数之间的 *-同态：目标块 j 上为
    U_j · blockdiag(源块按重数重复, 零填充) · U_j^H
    """
    source_blocks: tuple
    target_blocks: tuple
    multiplicity: np.ndarray
    unitaries: list = None
    unital: bool = False

    def __post_init__(self):
        self.source_blocks = tuple(int(n) for n in self.source_blocks)
        self.target_blocks = tuple(int(n) for n in self.target_blocks)
        M = np.asarray(self.multiplicity, dtype=int).reshape(len(self.target_blocks), len(self.source_blocks))
        if (M < 0).any():
            raise StructureError("重数必须非负")
        self.multiplicity = M
        filled = M @ np.array(self.source_blocks, dtype=int) if self.source_blocks else np.zeros(len(self.target_blocks), dtype=int)
        for j, n in enumerate(self.target_blocks):
            if filled[j] > n or (self.unital and filled[j] != n):
                raise StructureError(f"目标块 {j}: Σ m·n = {filled[j]} 与块大小 {n} 不相容")
        if self.unitaries is None:
            self.unitaries = [None] * len(self.target_blocks)
        if len(self.unitaries) != len(self.target_blocks):
            raise StructureError("酉矩阵个数与目标块数不一致")
        checked = []
        for U, n in zip(self.unitaries, self.target_blocks):
            if U is not None:
                U = np.asarray(U, dtype=complex)
                if U.shape != (n, n) or not _is_unitary(U):
                    raise StructureError(f"给定矩阵不是 {n}x{n} 酉矩阵")
            checked.append(U)
        self.unitaries = checked

    @classmethod
    def identity(cls, blocks):
        return cls(blocks, blocks, np.eye(len(blocks), dtype=int), unital=True)

    @property
    def filled(self):
        return self.multiplicity @ np.array(self.source_blocks, dtype=int)

    def _canonical(self, j, mats):
        n = self.target_blocks[j]
        parts = []
        for i, a in enumerate(mats):
            parts.extend([a] * int(self.multiplicity[j, i]))
        pad = n - int(self.filled[j]) if self.source_blocks else n
        if pad:
            parts.append(np.zeros((pad, pad), dtype=complex))
        X = linalg.block_diag(*parts) if parts else np.zeros((0, 0), dtype=complex)
        U = self.unitaries[j]
        return X if U is None else U @ X @ U.conj().T

    def apply(self, mats):
        """作用在各源块矩阵上，返回各目标块矩阵"""
        if isinstance(mats, Element):
            mats = mats.blocks
        if len(mats) != len(self.source_blocks):
            raise StructureError("输入元素的块数与定义域不一致")
        for a, n in zip(mats, self.source_blocks):
            if np.shape(a) != (n, n):
                raise StructureError(f"输入块形状 {np.shape(a)} 与定义域块 {(n, n)} 不一致")
        return [self._canonical(j, mats) for j in range(len(self.target_blocks))]

    def to_matrix(self):
        """环境坐标下的线性映射矩阵"""
        src = FiniteDimAlgebra.full(self.source_blocks)
        tgt = FiniteDimAlgebra.full(self.target_blocks)
        M = np.zeros((tgt.ambient_dim, src.ambient_dim), dtype=complex)
        for k in range(src.ambient_dim):
            e = np.zeros(src.ambient_dim, dtype=complex)
            e[k] = 1
            M[:, k] = tgt.join(self.apply(src.split(e)))
        return M

    def to_json(self):
        unitaries = []
        for U in self.unitaries:
            unitaries.append(None if U is None else [[[z.real, z.imag] for z in row] for row in U])
        return {
            'source_blocks': list(self.source_blocks),
            'target_blocks': list(self.target_blocks),
            'multiplicity': self.multiplicity.tolist(),
            'unital': bool(self.unital),
            'unitaries': unitaries,
        }


def apply_morphism(m, a):
    """apply_morphism(m, a) -> Element"""
    if isinstance(a, Element):
        return Element(FiniteDimAlgebra.full(m.target_blocks), m.apply(a.blocks))
    return m.apply(a)


def compose_morphisms(g, f):
    """g ∘ f：重数相乘，酉矩阵按规范排布合成"""
    if tuple(f.target_blocks) != tuple(g.source_blocks):
        raise StructureError(f"复合不匹配: f 的值域块 {f.target_blocks} ≠ g 的定义域块 {g.source_blocks}")
    M = g.multiplicity @ f.multiplicity
    unitaries = []
    for j, n in enumerate(g.target_blocks):
        # 内层排布：对 g 的每个源块 i' 的每个拷贝，放 f 在 i' 上的像（含 f 的零填充），再加 g 的零填充
        segments = []
        pos = 0
        conj = []
        for ip, nip in enumerate(g.source_blocks):
            for _ in range(int(g.multiplicity[j, ip])):
                start = pos
                for i, ni in enumerate(f.source_blocks):
                    for _ in range(int(f.multiplicity[ip, i])):
                        segments.append((i, pos, ni))
                        pos += ni
                pos = start + nip
                conj.append((start, nip, f.unitaries[ip]))
        V = np.eye(n, dtype=complex)
        for start, size, U in conj:
            if U is not None:
                V[start:start + size, start:start + size] = U
        # 置换：规范排布（按源块排序，零在最后）-> 内层排布
        P = np.zeros((n, n), dtype=complex)
        used = np.zeros(n, dtype=bool)
        canon = 0
        for i in range(len(f.source_blocks)):
            for (si, start, size) in segments:
                if si != i:
                    continue
                for r in range(size):
                    P[start + r, canon + r] = 1
                    used[start + r] = True
                canon += size
        for r in np.flatnonzero(~used):
            P[r, canon] = 1
            canon += 1
        Ug = g.unitaries[j] if g.unitaries[j] is not None else np.eye(n, dtype=complex)
        W = Ug @ V @ P
        unitaries.append(None if np.allclose(W, np.eye(n), atol=UNITARY_TOLERANCE) else W)
    return MultiplicityMorphism(f.source_blocks, g.target_blocks, M, unitaries, f.unital and g.unital)


# ---------------------------------------------------------------- 具体态射

@dataclass
class ConcreteMorphism:
    """
    离散化后的 *-同态：环境坐标下的矩阵（值域环境维数 x 定义域环境维数）
    provenance 记录产生它的表达式节点
    """
    domain: FiniteDimAlgebra
    codomain: FiniteDimAlgebra
    matrix: np.ndarray
    provenance: str = ''
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        expected = (self.codomain.ambient_dim, self.domain.ambient_dim)
        if self.matrix.shape != expected:
            raise StructureError(f"{self.provenance}: 矩阵形状 {self.matrix.shape} ≠ {expected}")

    def __call__(self, v):
        return self.matrix @ v

    def coord_matrix(self):
        """子空间坐标下的矩阵 Bc^H M Bd"""
        M = self.matrix @ self.domain.basis_matrix()
        if self.codomain.constrained:
            M = self.codomain.basis.conj().T @ M
        return M

    def rank(self, rtol=RANK_RTOL):
        return matrix_rank(self.coord_matrix(), rtol)

    def kernel_dim(self, rtol=RANK_RTOL):
        return self.domain.dim - self.rank(rtol)

    def leak_residual(self):
        """像是否落在值域的约束子空间里"""
        if not self.codomain.constrained or self.domain.dim == 0:
            return 0.0
        M = self.matrix @ self.domain.basis_matrix()
        return float(np.linalg.norm(M - self.codomain.project(M))) if M.size else 0.0

    def then(self, g):
        return compose_concrete(g, self)


def compose_concrete(g, f):
    if g.domain.ambient_dim != f.codomain.ambient_dim:
        raise StructureError(f"复合不匹配: {f.provenance} -> {g.provenance}")
    return ConcreteMorphism(f.domain, g.codomain, g.matrix @ f.matrix, f"{g.provenance}∘{f.provenance}")


def identity_morphism(algebra, provenance='id'):
    return ConcreteMorphism(algebra, algebra, np.eye(algebra.ambient_dim, dtype=complex), provenance)


def zero_morphism(source, target, provenance='0'):
    return ConcreteMorphism(source, target, np.zeros((target.ambient_dim, source.ambient_dim), dtype=complex), provenance)


def concrete_from_multiplicity(m, provenance='block'):
    return ConcreteMorphism(FiniteDimAlgebra.full(m.source_blocks), FiniteDimAlgebra.full(m.target_blocks),
                            m.to_matrix(), provenance, {'multiplicity': m.multiplicity.tolist()})


# ---------------------------------------------------------------- 生成子代数

@dataclass
class SpanClosure:
    basis: np.ndarray
    words: np.ndarray
    images: np.ndarray = None
    consistency_residual: float = 0.0

    @property
    def dim(self):
        return self.basis.shape[1]


def span_closure(algebra, gens, image_algebra=None, images=None, rtol=RANK_RTOL, max_rounds=None):
    """
    对生成元做乘法和伴随的张成增长直到不动点（不自动添加单位）。
    给了 images 时，同时按词携带候选映射的像，并检查线性相关的词的像是否相容。
    """
    gens = np.asarray(gens, dtype=complex).reshape(algebra.ambient_dim, -1)
    carry = images is not None
    if carry:
        images = np.asarray(images, dtype=complex).reshape(image_algebra.ambient_dim, -1)
    Q = np.zeros((algebra.ambient_dim, 0), dtype=complex)
    words, word_images, dependent = [], [], []

    def offer(w, y):
        nonlocal Q
        r = w - Q @ (Q.conj().T @ w)
        r = r - Q @ (Q.conj().T @ r)
        scale = max(float(np.linalg.norm(w)), 1.0)
        if np.linalg.norm(r) > rtol * scale:
            Q = np.column_stack([Q, r / np.linalg.norm(r)])
            words.append(w)
            word_images.append(y)
            return True
        if carry:
            dependent.append((w, y))
        return False

    fresh = []
    for k in range(gens.shape[1]):
        y = images[:, k] if carry else None
        if offer(gens[:, k], y):
            fresh.append(len(words) - 1)
        y_star = image_algebra.adjoint(y) if carry else None
        if offer(algebra.adjoint(gens[:, k]), y_star):
            fresh.append(len(words) - 1)
    rounds = 0
    limit = max_rounds or algebra.ambient_dim + 1
    while fresh and rounds < limit:
        rounds += 1
        new = []
        current = len(words)
        for a in fresh:
            for b in range(current):
                for (x, y) in ((a, b), (b, a)):
                    w = algebra.mul(words[x], words[y])
                    img = image_algebra.mul(word_images[x], word_images[y]) if carry else None
                    if offer(w, img):
                        new.append(len(words) - 1)
        fresh = new
    W = np.column_stack(words) if words else np.zeros((algebra.ambient_dim, 0), dtype=complex)
    closure = SpanClosure(Q, W)
    if carry:
        Y = np.column_stack(word_images) if word_images else np.zeros((image_algebra.ambient_dim, 0), dtype=complex)
        closure.images = Y
        if words and dependent:
            sigma = Y @ np.linalg.pinv(W)
            closure.consistency_residual = max(float(np.linalg.norm(sigma @ w - y)) for w, y in dependent)
    logger.debug(f"Span closure reached dim {closure.dim} after {rounds} rounds")
    return closure


def generated_subalgebra(algebra, gens, rtol=RANK_RTOL):
    """生成的（非单位）*-子代数：返回正交基和维数"""
    closure = span_closure(algebra, gens, rtol=rtol)
    return closure.basis, closure.dim


# ---------------------------------------------------------------- 块理想

def _check_block_subset(A, ideal_blocks):
    if A.constrained:
        raise StructureError("块商只对无约束的块代数有定义")
    ideal = sorted(set(int(i) for i in ideal_blocks))
    if any(i < 0 or i >= len(A.blocks) for i in ideal):
        raise StructureError(f"块下标越界: {ideal}")
    return ideal


def _coordinate_map(A, kept, target):
    """保留块 kept 的坐标选取矩阵 A -> target"""
    M = np.zeros((target.ambient_dim, A.ambient_dim), dtype=complex)
    for new, old in enumerate(kept):
        M[target.block_slice(new), A.block_slice(old)] = np.eye(A.blocks[old] ** 2)
    return M


def quotient_by_blocks(A, ideal_blocks):
    """A / (理想块) -> (商代数, 商映射)"""
    ideal = _check_block_subset(A, ideal_blocks)
    kept = [j for j in range(len(A.blocks)) if j not in ideal]
    Q = FiniteDimAlgebra(tuple(A.blocks[j] for j in kept), None, tuple(A.labels[j] for j in kept))
    q = ConcreteMorphism(A, Q, _coordinate_map(A, kept, Q), 'quotient')
    return Q, q


def block_inclusion(A, ideal_blocks):
    """理想块 -> A 的包含"""
    ideal = _check_block_subset(A, ideal_blocks)
    I = FiniteDimAlgebra(tuple(A.blocks[j] for j in ideal), None, tuple(A.labels[j] for j in ideal))
    M = _coordinate_map(A, ideal, I).conj().T
    return I, ConcreteMorphism(I, A, M, 'inclusion')


# ---------------------------------------------------------------- 结构定理的逆

def decompose_star_hom(matrix, source_blocks, target_blocks, rtol=RANK_RTOL):
    """
    由无约束块代数之间的 *-同态矩阵恢复重数和酉矩阵。
    返回 (MultiplicityMorphism, 重构残差)
    """
    src = FiniteDimAlgebra.full(source_blocks)
    tgt = FiniteDimAlgebra.full(target_blocks)
    matrix = np.asarray(matrix, dtype=complex)
    M = np.zeros((len(tgt.blocks), len(src.blocks)), dtype=int)
    unitaries = []
    for j, nj in enumerate(tgt.blocks):
        columns = []
        for i, ni in enumerate(src.blocks):
            e11 = np.zeros(src.ambient_dim, dtype=complex)
            e11[src.block_slice(i)][0] = 1
            P = tgt.split(matrix @ e11)[j]
            P = (P + P.conj().T) / 2
            vals, vecs = linalg.eigh(P)
            vecs = vecs[:, vals > 0.5]
            M[j, i] = vecs.shape[1]
            for c in range(vecs.shape[1]):
                for k in range(ni):
                    ek1 = np.zeros(src.ambient_dim, dtype=complex)
                    ek1[src.block_slice(i)][k * ni] = 1
                    columns.append(tgt.split(matrix @ ek1)[j] @ vecs[:, c])
        V = np.column_stack(columns) if columns else np.zeros((nj, 0), dtype=complex)
        if V.shape[1] < nj:
            V = np.column_stack([V, null_space(V.conj().T, rtol)])
        unitaries.append(V)
    m = MultiplicityMorphism(src.blocks, tgt.blocks, M, unitaries)
    residual = float(np.abs(m.to_matrix() - matrix).max()) if matrix.size else 0.0
    return m, residual


# ---------------------------------------------------------------- 随机辅助

def random_unitary(n, rng):
    """Haar 随机酉矩阵"""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_multiplicity_morphism(source_blocks, rng, max_mult=2, max_pad=1):
    """随机 *-同态：一到两个目标块，随机重数、填充和酉矩阵"""
    source_blocks = tuple(source_blocks)
    k = int(rng.integers(1, 3))
    M = rng.integers(0, max_mult + 1, size=(k, len(source_blocks)))
    if source_blocks and not M.any():
        M[0, int(rng.integers(len(source_blocks)))] = 1
    filled = M @ np.array(source_blocks, dtype=int) if source_blocks else np.zeros(k, dtype=int)
    targets = tuple(int(f + rng.integers(0, max_pad + 1)) or 1 for f in filled)
    unitaries = [random_unitary(n, rng) for n in targets]
    return MultiplicityMorphism(source_blocks, targets, M, unitaries)


def spectral_projections(algebra, x, tol=DEFAULT_TOLERANCE):
    """
    自伴元 x 的非零谱投影（按特征值聚类，跨块合并）。
    这些投影属于 x 生成的非单位 C*-代数，因而落在 x 所在的子代数里。
    """
    entries = []
    for j, X in enumerate(algebra.split(x)):
        vals, vecs = linalg.eigh((X + X.conj().T) / 2)
        for v, vec in zip(vals, vecs.T):
            entries.append((float(v), j, vec))
    scale = max([abs(v) for v, _, _ in entries], default=1.0)
    cutoff = max(tol, 1e-6 * scale)
    entries = sorted((e for e in entries if abs(e[0]) > cutoff), key=lambda e: e[0])
    clusters = []
    for e in entries:
        if clusters and abs(e[0] - clusters[-1][-1][0]) <= cutoff:
            clusters[-1].append(e)
        else:
            clusters.append([e])
    projections = []
    for cluster in clusters:
        mats = [np.zeros((n, n), dtype=complex) for n in algebra.blocks]
        for _, j, vec in cluster:
            mats[j] += np.outer(vec, vec.conj())
        projections.append(algebra.join(mats))
    return projections
