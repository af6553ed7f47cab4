"""
C*-代数表达式与态射表达式

所有表达式都是不可变值（frozen dataclass），结构相等即字段相等。
离散化、检查、NCCW 复形和 Puppe 序列都只消费这里的表达式树。
"""

import logging
from dataclasses import dataclass, fields
from fractions import Fraction

import numpy as np

from .errors import DimensionBoundError, StructureError, UnsupportedNodeError
from .settings import MAX_CUBE_DIM, UNITARY_TOLERANCE

logger = logging.getLogger(__name__)

_REGISTRY = {}


def _register(cls):
    _REGISTRY[cls.__name__] = cls
    return cls


def _as_fraction(t):
    if isinstance(t, Fraction):
        return t
    if isinstance(t, float):
        return Fraction(t).limit_denominator(1 << 20)
    return Fraction(t)


class AlgebraExpr:
    """代数表达式基类"""

    @property
    def kind(self):
        return type(self).__name__

    def children(self):
        return ()

    def to_json(self):
        return _encode(self)

    def __str__(self):
        return render(self)


class MorphismExpr:
    """*-同态表达式基类，子类提供 domain / codomain"""

    @property
    def kind(self):
        return type(self).__name__

    @property
    def domain(self):
        raise NotImplementedError

    @property
    def codomain(self):
        raise NotImplementedError

    def to_json(self):
        return _encode(self)

    def __str__(self):
        return render_morphism(self)


# ---------------------------------------------------------------- 代数节点

@_register
@dataclass(frozen=True)
class FiniteDim(AlgebraExpr):
    """有限维代数 M_{n1} ⊕ ... ⊕ M_{nk}"""
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        if not blocks:
            raise StructureError("有限维代数至少要有一个块，空代数请用 ZeroAlgebra")
        if any(b < 1 for b in blocks):
            raise StructureError(f"块大小必须 >= 1: {blocks}")
        object.__setattr__(self, 'blocks', blocks)


@_register
@dataclass(frozen=True)
class ZeroAlgebra(AlgebraExpr):
    """零代数"""


@dataclass(frozen=True)
class _GridTensor(AlgebraExpr):
    n: int
    base: AlgebraExpr

    _MIN_N = 1

    def __post_init__(self):
        if not isinstance(self.base, AlgebraExpr):
            raise StructureError(f"{self.kind} 的底代数必须是代数表达式: {self.base!r}")
        if int(self.n) < self._MIN_N:
            raise StructureError(f"{self.kind} 的维数必须 >= {self._MIN_N}: {self.n}")
        object.__setattr__(self, 'n', int(self.n))

    def children(self):
        return (self.base,)


@_register
@dataclass(frozen=True)
class IntervalTensor(_GridTensor):
    """C(I^n) ⊗ base"""


@_register
@dataclass(frozen=True)
class OpenCubeTensor(_GridTensor):
    """C_0(I_0^n) ⊗ base"""


@_register
@dataclass(frozen=True)
class SphereTensor(_GridTensor):
    """C(S^n) ⊗ base"""
    _MIN_N = 0


@_register
@dataclass(frozen=True)
class HalfOpenTensor(AlgebraExpr):
    """C_0((0,1]) ⊗ base，即 Cone(base)"""
    base: AlgebraExpr

    def __post_init__(self):
        if not isinstance(self.base, AlgebraExpr):
            raise StructureError(f"HalfOpenTensor 的底代数必须是代数表达式: {self.base!r}")

    @property
    def n(self):
        return 1

    def children(self):
        return (self.base,)


@_register
@dataclass(frozen=True)
class DirectSum(AlgebraExpr):
    left: AlgebraExpr
    right: AlgebraExpr

    def children(self):
        return (self.left, self.right)


@_register
@dataclass(frozen=True)
class Pullback(AlgebraExpr):
    """纤维积 {(x, y) : alpha(x) = beta(y)}"""
    alpha: MorphismExpr
    beta: MorphismExpr

    def __post_init__(self):
        if self.alpha.codomain != self.beta.codomain:
            raise StructureError(
                f"拉回的两条腿值域不一致: alpha 值域 {render(self.alpha.codomain)}，"
                f"beta 值域 {render(self.beta.codomain)}")

    def children(self):
        return (self.alpha.domain, self.beta.domain)


@_register
@dataclass(frozen=True)
class Cylinder(AlgebraExpr):
    """映射柱 {(a, g) ∈ A ⊕ C(I, B) : g(1) = f(a)}"""
    f: MorphismExpr

    def children(self):
        return (self.f.domain, self.f.codomain)


@_register
@dataclass(frozen=True)
class MappingCone(AlgebraExpr):
    """映射锥 {(a, g) ∈ A ⊕ C_0((0,1], B) : g(1) = f(a)}"""
    f: MorphismExpr

    def children(self):
        return (self.f.domain, self.f.codomain)


GRID_KINDS = (IntervalTensor, OpenCubeTensor, SphereTensor, HalfOpenTensor)


def block_sizes(a):
    """FiniteDim / ZeroAlgebra 的块大小"""
    if isinstance(a, FiniteDim):
        return a.blocks
    if isinstance(a, ZeroAlgebra):
        return ()
    raise StructureError(f"{render(a)} 不是有限维块代数")


def is_block_algebra(a):
    return isinstance(a, (FiniteDim, ZeroAlgebra))


def flat_blocks(a):
    """块代数的块；C(S^0)⊗F 与分辨率无关，按两个点展开成 F ⊕ F 的块"""
    if isinstance(a, SphereTensor) and a.n == 0 and is_block_algebra(a.base):
        return block_sizes(a.base) * 2
    return block_sizes(a)


def same_grid_shape(x, y):
    """两个网格张量是否同类同维（底代数可以不同）"""
    return type(x) is type(y) and isinstance(x, GRID_KINDS) and x.n == y.n


def with_base(grid, base):
    if isinstance(grid, HalfOpenTensor):
        return HalfOpenTensor(base)
    return type(grid)(grid.n, base)


# ---------------------------------------------------------------- 态射节点

@_register
@dataclass(frozen=True)
class Winding:
    """绕数数据：在面参数 tau 处的酉矩阵为 exp(2πi·m·tau·K)"""
    K: tuple
    m: int

    def __post_init__(self):
        K = tuple(tuple(complex(z) for z in row) for row in self.K)
        mat = np.array(K, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StructureError(f"绕数矩阵必须是方阵: {mat.shape}")
        if not np.allclose(mat, mat.conj().T, atol=UNITARY_TOLERANCE):
            raise StructureError("绕数矩阵 K 必须是厄米矩阵")
        object.__setattr__(self, 'K', K)
        object.__setattr__(self, 'm', int(self.m))

    @property
    def size(self):
        return len(self.K)

    def matrix(self):
        return np.array(self.K, dtype=complex)


@_register
@dataclass(frozen=True)
class Identity(MorphismExpr):
    algebra: AlgebraExpr

    @property
    def domain(self):
        return self.algebra

    @property
    def codomain(self):
        return self.algebra


@_register
@dataclass(frozen=True)
class Zero(MorphismExpr):
    source: AlgebraExpr
    target: AlgebraExpr

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return self.target


@_register
@dataclass(frozen=True)
class Compose(MorphismExpr):
    """g ∘ f"""
    g: MorphismExpr
    f: MorphismExpr

    def __post_init__(self):
        if self.f.codomain != self.g.domain:
            raise StructureError(
                f"复合不匹配: f 的值域 {render(self.f.codomain)} ≠ g 的定义域 {render(self.g.domain)}")

    @property
    def domain(self):
        return self.f.domain

    @property
    def codomain(self):
        return self.g.codomain


@_register
@dataclass(frozen=True)
class Evaluation(MorphismExpr):
    """ev(t)：区间函数在 t 处取值；C_0 端点处为零映射"""
    t: Fraction
    source: AlgebraExpr

    def __post_init__(self):
        t = _as_fraction(self.t)
        if not 0 <= t <= 1:
            raise StructureError(f"取值点必须在 [0,1] 内: {t}")
        object.__setattr__(self, 't', t)
        ok = (isinstance(self.source, HalfOpenTensor)
              or (isinstance(self.source, (IntervalTensor, OpenCubeTensor)) and self.source.n == 1))
        if not ok:
            raise StructureError(f"ev 只作用于一维区间代数: {render(self.source)}")

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return self.source.base


@_register
@dataclass(frozen=True)
class BoundaryRestrict(MorphismExpr):
    """∂ : C(I^n) ⊗ F -> C(S^{n-1}) ⊗ F"""
    n: int
    base: AlgebraExpr

    def __post_init__(self):
        if int(self.n) < 1:
            raise StructureError(f"边界限制要求 n >= 1: {self.n}")
        object.__setattr__(self, 'n', int(self.n))

    @property
    def domain(self):
        return IntervalTensor(self.n, self.base)

    @property
    def codomain(self):
        return SphereTensor(self.n - 1, self.base)


def _components(source):
    if isinstance(source, Pullback):
        return source.alpha.domain, source.beta.domain
    if isinstance(source, Cylinder):
        return source.f.domain, IntervalTensor(1, source.f.codomain)
    if isinstance(source, MappingCone):
        return source.f.domain, HalfOpenTensor(source.f.codomain)
    if isinstance(source, DirectSum):
        return source.left, source.right
    raise StructureError(f"{render(source)} 没有两个分量，无法投影")


def components(source):
    """拉回/映射柱/映射锥/直和的两个分量代数"""
    return _components(source)


@_register
@dataclass(frozen=True)
class ProjectionFirst(MorphismExpr):
    source: AlgebraExpr

    def __post_init__(self):
        _components(self.source)

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return _components(self.source)[0]


@_register
@dataclass(frozen=True)
class ProjectionSecond(MorphismExpr):
    source: AlgebraExpr

    def __post_init__(self):
        _components(self.source)

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return _components(self.source)[1]


@_register
@dataclass(frozen=True)
class ConstantEmbed(MorphismExpr):
    """A -> C(I^n, A) 或 C(S^n, A)，a 映到常值函数"""
    target: AlgebraExpr

    def __post_init__(self):
        if not isinstance(self.target, (IntervalTensor, SphereTensor)):
            raise StructureError(f"常值嵌入的目标必须是 C(I^n)⊗A 或 C(S^n)⊗A: {render(self.target)}")

    @property
    def domain(self):
        return self.target.base

    @property
    def codomain(self):
        return self.target


@_register
@dataclass(frozen=True)
class SuspendedMorphism(MorphismExpr):
    """S(f) : S(A) -> S(B)，在内部网格上逐点作用"""
    f: MorphismExpr

    @property
    def domain(self):
        return OpenCubeTensor(1, self.f.domain)

    @property
    def codomain(self):
        return OpenCubeTensor(1, self.f.codomain)


@_register
@dataclass(frozen=True)
class BlockMap(MorphismExpr):
    """重数矩阵给出的 *-同态，可以是有限维之间，也可以在网格上逐点作用"""
    source: AlgebraExpr
    target: AlgebraExpr
    multiplicity: tuple
    unital: bool = False
    windings: tuple = ()

    def __post_init__(self):
        mult = tuple(tuple(int(x) for x in row) for row in self.multiplicity)
        object.__setattr__(self, 'multiplicity', mult)
        object.__setattr__(self, 'windings', tuple(self.windings))
        src, tgt = self.source, self.target
        gridwise = same_grid_shape(src, tgt)
        if gridwise:
            src_blocks, tgt_blocks = block_sizes(src.base), block_sizes(tgt.base)
        else:
            try:
                src_blocks, tgt_blocks = flat_blocks(src), flat_blocks(tgt)
            except StructureError:
                raise StructureError(
                    f"块映射要求块代数、C(S^0)⊗F，或同类同维的网格代数: "
                    f"{render(self.source)} -> {render(self.target)}") from None
        if len(mult) != len(tgt_blocks) or any(len(row) != len(src_blocks) for row in mult):
            raise StructureError(
                f"重数矩阵形状应为 {len(tgt_blocks)}x{len(src_blocks)}，实际 {mult}")
        for j, row in enumerate(mult):
            if any(x < 0 for x in row):
                raise StructureError(f"重数必须非负: {row}")
            filled = sum(m * n for m, n in zip(row, src_blocks))
            if filled > tgt_blocks[j] or (self.unital and filled != tgt_blocks[j]):
                raise StructureError(
                    f"目标块 {j} 的重数 Σ m·n = {filled} 与块大小 {tgt_blocks[j]} 不相容"
                    + ("（要求保单位）" if self.unital else ""))
        if self.windings:
            if not gridwise:
                raise StructureError("绕数只能用于网格上的逐点块映射")
            if len(self.windings) != len(tgt_blocks):
                raise StructureError(f"绕数个数 {len(self.windings)} 与目标块数 {len(tgt_blocks)} 不一致")
            for j, w in enumerate(self.windings):
                if w is not None and w.size != tgt_blocks[j]:
                    raise StructureError(f"目标块 {j} 的绕数矩阵大小 {w.size} ≠ {tgt_blocks[j]}")

    @property
    def gridwise(self):
        return same_grid_shape(self.source, self.target)

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return self.target


@_register
@dataclass(frozen=True)
class UserNamed(MorphismExpr):
    """DSL 中命名的态射"""
    name: str
    body: MorphismExpr

    @property
    def domain(self):
        return self.body.domain

    @property
    def codomain(self):
        return self.body.codomain


@_register
@dataclass(frozen=True)
class Pair(MorphismExpr):
    """到拉回型代数的中介映射 x -> (left(x), right(x))"""
    target: AlgebraExpr
    left: MorphismExpr
    right: MorphismExpr

    def __post_init__(self):
        first, second = _components(self.target)
        if self.left.domain != self.right.domain:
            raise StructureError(
                f"pair 两个分量的定义域不同: {render(self.left.domain)} / {render(self.right.domain)}")
        if self.left.codomain != first or self.right.codomain != second:
            raise StructureError(
                f"pair 的分量值域应为 {render(first)} 和 {render(second)}，"
                f"实际为 {render(self.left.codomain)} 和 {render(self.right.codomain)}")

    @property
    def domain(self):
        return self.left.domain

    @property
    def codomain(self):
        return self.target


@_register
@dataclass(frozen=True)
class ZeroExtend(MorphismExpr):
    """C_0 网格代数按零延拓到更大的网格"""
    source: AlgebraExpr
    target: AlgebraExpr

    def __post_init__(self):
        src, tgt = self.source, self.target
        ok = False
        if isinstance(src, OpenCubeTensor) and isinstance(tgt, IntervalTensor):
            ok = src.n == tgt.n and src.base == tgt.base
        elif isinstance(src, OpenCubeTensor) and isinstance(tgt, HalfOpenTensor):
            ok = src.n == 1 and src.base == tgt.base
        elif isinstance(src, HalfOpenTensor) and isinstance(tgt, IntervalTensor):
            ok = tgt.n == 1 and src.base == tgt.base
        if not ok:
            raise StructureError(f"无法按零延拓: {render(src)} -> {render(tgt)}")

    @property
    def domain(self):
        return self.source

    @property
    def codomain(self):
        return self.target


@_register
@dataclass(frozen=True)
class CircleRotation(MorphismExpr):
    """圆周型一胞腔代数的网格旋转（旋转量为一圈的分数）"""
    algebra: AlgebraExpr
    fraction: Fraction

    def __post_init__(self):
        fraction = _as_fraction(self.fraction)
        if not 0 <= fraction < 1:
            raise StructureError(f"旋转量必须在 [0,1) 内: {fraction}")
        object.__setattr__(self, 'fraction', fraction)
        a = self.algebra
        ok = (isinstance(a, Pullback) and isinstance(a.alpha, BoundaryRestrict)
              and a.alpha.n == 1 and a.beta.domain == a.alpha.base)
        if not ok:
            raise StructureError(f"旋转只对圆周型一胞腔代数有定义: {render(a)}")

    @property
    def domain(self):
        return self.algebra

    @property
    def codomain(self):
        return self.algebra


# ---------------------------------------------------------------- 构造函数

FUNCTOR_KINDS = ('cone', 'suspension', 'interval', 'opencube', 'sphere')


def apply_functor(kind, a, n=None, max_dim=MAX_CUBE_DIM):
    """
    把代数 a 包进函子：
    Cone(A) = C_0((0,1]) ⊗ A，S(A) = C_0((0,1)) ⊗ A，以及 C(I^n)、C_0(I_0^n)、C(S^n) 张量
    """
    kind = kind.lower()
    if kind == 'cone':
        return HalfOpenTensor(a)
    if kind == 'suspension':
        return OpenCubeTensor(1, a)
    if kind not in FUNCTOR_KINDS:
        raise StructureError(f"未知函子: {kind}")
    if n is None:
        raise StructureError(f"函子 {kind} 需要维数 n")
    if n > max_dim:
        raise DimensionBoundError(n, max_dim)
    if kind == 'interval':
        return IntervalTensor(n, a)
    if kind == 'opencube':
        return OpenCubeTensor(n, a)
    return SphereTensor(n, a)


def mapping_construction(kind, f):
    """映射柱或映射锥节点"""
    kind = kind.lower()
    if kind in ('cylinder', 'cyl'):
        return Cylinder(f)
    if kind in ('mappingcone', 'cone'):
        return MappingCone(f)
    raise StructureError(f"未知映射构造: {kind}")


def pullback_expr(alpha, beta):
    return Pullback(alpha, beta)


def cylinder_square(f):
    """映射柱作为拉回：(f : A -> B, ev(1) : C(I)⊗B -> B)"""
    return Pullback(f, Evaluation(Fraction(1), IntervalTensor(1, f.codomain)))


def cone_square(f):
    """映射锥作为拉回：(f : A -> B, ev(1) : C_0((0,1])⊗B -> B)"""
    return Pullback(f, Evaluation(Fraction(1), HalfOpenTensor(f.codomain)))


def compose(*maps):
    """compose(h, g, f) = h ∘ g ∘ f"""
    result = maps[-1]
    for g in reversed(maps[:-1]):
        result = Compose(g, result)
    return result


def check_bounds(expr, max_dim=MAX_CUBE_DIM):
    """遍历表达式树，维数超限时报错"""
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, (IntervalTensor, OpenCubeTensor, SphereTensor)) and node.n > max_dim:
            raise DimensionBoundError(node.n, max_dim)
        if isinstance(node, BoundaryRestrict) and node.n > max_dim:
            raise DimensionBoundError(node.n, max_dim)
        for f in fields(node):
            value = getattr(node, f.name)
            if isinstance(value, (AlgebraExpr, MorphismExpr)):
                stack.append(value)
    return expr


# ---------------------------------------------------------------- 维数预测

def _grid_size(expr, N):
    if isinstance(expr, IntervalTensor):
        return (N + 1) ** expr.n
    if isinstance(expr, OpenCubeTensor):
        return max(N - 1, 0) ** expr.n
    if isinstance(expr, SphereTensor):
        return (N + 1) ** (expr.n + 1) - max(N - 1, 0) ** (expr.n + 1)
    if isinstance(expr, HalfOpenTensor):
        return N
    raise UnsupportedNodeError(f"{render(expr)} 不是网格代数")


def _surjective(m, N):
    """结构上可判定的满射"""
    if isinstance(m, UserNamed):
        return _surjective(m.body, N)
    if isinstance(m, Identity):
        return True
    if isinstance(m, Zero):
        return linear_dim(m.target, N) == 0
    if isinstance(m, Evaluation):
        if isinstance(m.source, IntervalTensor):
            return True
        return 0 < m.t < 1 or (m.t == 1 and isinstance(m.source, HalfOpenTensor))
    if isinstance(m, BoundaryRestrict):
        return True
    if isinstance(m, ProjectionFirst):
        return isinstance(m.source, (Cylinder, MappingCone, DirectSum))
    if isinstance(m, ProjectionSecond):
        return isinstance(m.source, DirectSum)
    if isinstance(m, Compose):
        return _surjective(m.g, N) and _surjective(m.f, N)
    return False


def linear_dim(a, res):
    """预测离散化后代数的维数，与 discretize_algebra 的结果严格相等"""
    N = res if isinstance(res, int) else res.N
    if isinstance(a, FiniteDim):
        return sum(n * n for n in a.blocks)
    if isinstance(a, ZeroAlgebra):
        return 0
    if isinstance(a, GRID_KINDS):
        return _grid_size(a, N) * linear_dim(a.base, N)
    if isinstance(a, DirectSum):
        return linear_dim(a.left, N) + linear_dim(a.right, N)
    if isinstance(a, Cylinder):
        return linear_dim(a.f.domain, N) + N * linear_dim(a.f.codomain, N)
    if isinstance(a, MappingCone):
        return linear_dim(a.f.domain, N) + (N - 1) * linear_dim(a.f.codomain, N)
    if isinstance(a, Pullback):
        if _surjective(a.alpha, N) or _surjective(a.beta, N):
            return (linear_dim(a.alpha.domain, N) + linear_dim(a.beta.domain, N)
                    - linear_dim(a.alpha.codomain, N))
        raise UnsupportedNodeError(f"拉回 {render(a)} 的两条腿都不是结构满射，无法预测维数")
    raise UnsupportedNodeError(f"无法预测 {type(a).__name__} 的维数")


# ---------------------------------------------------------------- 显示

def _name_of(m):
    if isinstance(m, UserNamed):
        return m.name
    return render_morphism(m)


def render(a, names=None):
    """代数表达式的可读标签，names 把子表达式映到用户给的名字"""
    if names and a in names:
        return names[a]
    if isinstance(a, FiniteDim):
        return '+'.join(f"M{n}" for n in a.blocks)
    if isinstance(a, ZeroAlgebra):
        return '0'
    if isinstance(a, OpenCubeTensor) and a.n == 1:
        depth, inner = 1, a.base
        while isinstance(inner, OpenCubeTensor) and inner.n == 1 and not (names and inner in names):
            depth, inner = depth + 1, inner.base
        prefix = 'S' if depth == 1 else f"S^{depth}"
        return f"{prefix}({render(inner, names)})"
    if isinstance(a, OpenCubeTensor):
        return f"I0^{a.n}({render(a.base, names)})"
    if isinstance(a, IntervalTensor):
        return f"I^{a.n}({render(a.base, names)})"
    if isinstance(a, SphereTensor):
        return f"Sph^{a.n}({render(a.base, names)})"
    if isinstance(a, HalfOpenTensor):
        return f"Cone({render(a.base, names)})"
    if isinstance(a, DirectSum):
        return f"({render(a.left, names)} ⊕ {render(a.right, names)})"
    if isinstance(a, Cylinder):
        return f"Cyl({_name_of(a.f)})"
    if isinstance(a, MappingCone):
        return f"Cone({_name_of(a.f)})"
    if isinstance(a, Pullback):
        return f"PB({_name_of(a.alpha)}, {_name_of(a.beta)})"
    return type(a).__name__


def render_morphism(m):
    if isinstance(m, UserNamed):
        return m.name
    if isinstance(m, Identity):
        return 'id'
    if isinstance(m, Zero):
        return '0'
    if isinstance(m, Compose):
        return f"{render_morphism(m.g)}∘{render_morphism(m.f)}"
    if isinstance(m, Evaluation):
        return f"ev({m.t})"
    if isinstance(m, BoundaryRestrict):
        return '∂'
    if isinstance(m, ProjectionFirst):
        return 'pr1'
    if isinstance(m, ProjectionSecond):
        return 'pr2'
    if isinstance(m, ConstantEmbed):
        return 'const'
    if isinstance(m, SuspendedMorphism):
        return f"S({render_morphism(m.f)})"
    if isinstance(m, BlockMap):
        return 'block'
    if isinstance(m, Pair):
        return f"<{render_morphism(m.left)}, {render_morphism(m.right)}>"
    if isinstance(m, ZeroExtend):
        return 'ext0'
    if isinstance(m, CircleRotation):
        return f"rot({m.fraction})"
    return type(m).__name__


# ---------------------------------------------------------------- JSON 编解码

def _encode(value):
    if isinstance(value, (AlgebraExpr, MorphismExpr, Winding)):
        out = {'kind': type(value).__name__}
        for f in fields(value):
            out[f.name] = _encode(getattr(value, f.name))
        return out
    if isinstance(value, Fraction):
        return {'fraction': f"{value.numerator}/{value.denominator}"}
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    if isinstance(value, tuple):
        return [_encode(v) for v in value]
    return value


def _decode(value):
    if isinstance(value, dict):
        if 'kind' in value:
            cls = _REGISTRY.get(value['kind'])
            if cls is None:
                raise StructureError(f"未知的表达式类型: {value['kind']}")
            kwargs = {k: _decode(v) for k, v in value.items() if k != 'kind'}
            return cls(**kwargs)
        if 'fraction' in value:
            return Fraction(value['fraction'])
        if set(value) == {'re', 'im'}:
            return complex(value['re'], value['im'])
        raise StructureError(f"无法解码: {value}")
    if isinstance(value, list):
        return tuple(_decode(v) for v in value)
    return value


def to_json(expr):
    """表达式 -> 嵌套 JSON 对象"""
    return _encode(expr)


def from_json(data):
    """嵌套 JSON 对象 -> 表达式"""
    return _decode(data)
