"""
内置语料：测试和演示共用的复形、映射和脚本
"""

import logging
from fractions import Fraction
from pathlib import Path

from src.core.expr import (BlockMap, CircleRotation, ConstantEmbed, FiniteDim, Identity, ProjectionSecond,
                           SphereTensor, Winding, Zero, compose)
from src.core.nccw import NCCWComplex, attach_stage

logger = logging.getLogger(__name__)

CORPUS_DIR = Path(__file__).resolve().parent.parent.parent / 'corpus'

M1 = FiniteDim((1,))
M2 = FiniteDim((2,))
M3 = FiniteDim((3,))


def point_complex(sizes=(1,), name='A0'):
    """只有第 0 级的复形：有限维代数本身"""
    return NCCWComplex.base(FiniteDim(tuple(sizes)), name)


def circle_complex():
    """
    圆周 C(S^1)：A_0 = C，一个 1 胞腔，两个端点都粘到同一个点
    A_1 = {(g, a) : g(0) = g(1) = a}
    """
    X = point_complex((1,))
    sigma = ConstantEmbed(SphereTensor(0, M1))
    return attach_stage(X, M1, 1, sigma, 'A1', 'F1')


def two_cell_complex():
    """
    两级复形：A_0 = C ⊕ C，1 胞腔连接两个点，再用带绕数的酉元把 M_2 的 2 胞腔粘上去
    """
    A0 = FiniteDim((1, 1))
    X = NCCWComplex.base(A0, 'A0')
    s1 = BlockMap(A0, SphereTensor(0, M1), ((1, 0), (0, 1)), True)
    X = attach_stage(X, M1, 1, s1, 'A1', 'F1')
    q1 = ProjectionSecond(X.top.algebra)
    c1 = ConstantEmbed(SphereTensor(1, A0))
    flip = Winding(((0, 1), (1, 0)), 1)
    w2 = BlockMap(SphereTensor(1, A0), SphereTensor(1, M2), ((1, 1),), True, (flip,))
    return attach_stage(X, M2, 2, compose(w2, c1, q1), 'A2', 'F2')


def circle_rotation(fraction=Fraction(1, 2)):
    """圆周复形的旋转，一般不是胞腔映射（0 胞腔被移走）"""
    X = circle_complex()
    return X, CircleRotation(X.top.algebra, Fraction(fraction))


def phi_examples():
    """映射柱收缩和 Puppe 链使用的 φ"""
    return {
        'id_M2': Identity(M2),
        'zero_M2': Zero(M2, M2),
        'mult2': BlockMap(M1, M2, ((2,),)),
    }


def block_ideal_inclusion():
    """M_2 -> M_2 ⊕ M_3 的块理想包含"""
    return BlockMap(M2, FiniteDim((2, 3)), ((1,), (0,)))


def corpus_scripts():
    """corpus/ 下的 .nccw 脚本，按文件名排序"""
    if not CORPUS_DIR.is_dir():
        logger.warning(f"Corpus directory missing: {CORPUS_DIR}")
        return []
    return sorted(CORPUS_DIR.glob('*.nccw'))


def load_script(name):
    path = CORPUS_DIR / (name if name.endswith('.nccw') else f"{name}.nccw")
    return path.read_text(encoding='utf-8')
