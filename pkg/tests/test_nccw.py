import unittest
import numpy as np
from fractions import Fraction
from pathlib import Path
import sys

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.core.check import FAIL, PASS, SKIP, NDRData, check_ndr_pair, check_star_hom
from src.core.discretize import discretize_algebra, discretize_morphism
from src.core.errors import DimensionBoundError, StructureError
from src.core.expr import (BlockMap, ConstantEmbed, Identity, IntervalTensor, ProjectionSecond, SphereTensor,
                           ZeroAlgebra, compose)
from src.core.fdalg import ConcreteMorphism, identity_morphism
from src.core.nccw import (DiscreteComplex, NCCWComplex, StageHomotopy, attach_stage, cell_pair_ndr,
                           cellular_approximate, check_stage_row, compress_stage, extend_relative, is_cellular,
                           prism_source, stage_table, validate_complex, validate_mapping_constructions)
from src.data.corpus import M1, M2, circle_complex, circle_rotation, two_cell_complex

RESOLUTIONS = (2, 4, 8)


class TestComplexConstruction(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """测试开始前的准备工作"""
        cls.circle = circle_complex()
        cls.two_cell = two_cell_complex()

    def test_circle_dimensions(self):
        """测试圆周复形在分辨率 N 下维数为 N"""
        for N in RESOLUTIONS:
            self.assertEqual(discretize_algebra(self.circle.algebra(0), N).dim, 1)
            self.assertEqual(discretize_algebra(self.circle.top.algebra, N).dim, N)

    def test_complex_shape(self):
        """测试复形的级数、名字表和投影"""
        self.assertEqual(len(self.two_cell), 3)
        self.assertEqual(self.two_cell.dimension, 2)
        names = self.two_cell.names()
        self.assertEqual(names[self.two_cell.top.algebra], 'A2')
        self.assertEqual(names[M2], 'F2')
        self.assertIsNone(self.two_cell.stages[0].pi)
        self.assertTrue(self.two_cell.top.attached)

    def test_attach_errors(self):
        """测试粘贴胞腔时的各种结构错误"""
        X = NCCWComplex.base(M1)
        sigma = ConstantEmbed(SphereTensor(0, M1))
        with self.assertRaises(StructureError):
            attach_stage(X, M1, 2, sigma)
        with self.assertRaises(StructureError):
            attach_stage(X, M1, 1, None)
        with self.assertRaises(StructureError):
            attach_stage(X, IntervalTensor(1, M1), 1, sigma)
        with self.assertRaises(StructureError):
            attach_stage(X, M2, 1, sigma)
        with self.assertRaises(StructureError):
            NCCWComplex.base(IntervalTensor(1, M1))

    def test_empty_cell_set(self):
        """测试空胞腔集时 A_k = A_{k-1}"""
        X = attach_stage(NCCWComplex.base(M2), ZeroAlgebra(), 1)
        self.assertEqual(X.top.algebra, M2)
        self.assertFalse(X.top.attached)
        self.assertEqual(X.top.pi, Identity(M2))

    def test_dimension_bound(self):
        """测试超过维数上限的胞腔被拒绝，放宽上限后只允许符号构造"""
        X = circle_complex()
        s2 = compose(ConstantEmbed(SphereTensor(1, M1)), ProjectionSecond(X.top.algebra))
        X = attach_stage(X, M1, 2, s2)
        A2 = X.top.algebra
        s3 = compose(ConstantEmbed(SphereTensor(2, M1)), ProjectionSecond(X.algebra(1)), ProjectionSecond(A2))
        with self.assertRaises(DimensionBoundError):
            attach_stage(X, M1, 3, s3)
        X3 = attach_stage(X, M1, 3, s3, max_dim=3)
        self.assertEqual(X3.dimension, 3)
        f = identity_morphism(discretize_algebra(M1, 2))
        with self.assertRaises(DimensionBoundError):
            cellular_approximate(X3, X3, f, 2)


class TestValidation(unittest.TestCase):
    def test_corpus_complexes_validate(self):
        """测试语料复形的维数、σ、正合行和细化检查全部通过"""
        for X in (circle_complex(), two_cell_complex()):
            reports = validate_complex(X, RESOLUTIONS)
            failed = [r.id for r in reports if r.status != PASS]
            self.assertEqual(failed, [], X.name)
            kinds = {r.kind for r in reports}
            self.assertEqual(kinds, {'dim', 'star', 'row', 'refine'})

    def test_corrupted_sigma_breaks_row(self):
        """测试附着映射被改成非 *-同态时，σ 检查和正合行都失败并给出 witness"""
        st = circle_complex().stages[1]
        sigma_c = discretize_morphism(st.sigma, 4)
        self.assertEqual(check_stage_row(st.k, st.cell, sigma_c, 4).status, PASS)
        scale = np.ones((sigma_c.matrix.shape[0], 1))
        scale[-1] = 2
        bad = ConcreteMorphism(sigma_c.domain, sigma_c.codomain, sigma_c.matrix * scale, 'sigma*')
        self.assertEqual(check_star_hom(bad).status, FAIL)
        report = check_stage_row(st.k, st.cell, bad, 4, check_id='circle/A1/row')
        self.assertEqual(report.status, FAIL)
        self.assertEqual(report.id, 'circle/A1/row')
        self.assertIn('not_closed', report.witness['violated'])
        self.assertGreater(report.witness['closure_residual'], 1e-6)
        self.assertEqual(report.witness['dims'], [3, 4, 1])

    def test_stage_table(self):
        """测试每级的维数表"""
        table = stage_table(circle_complex(), (2, 4))
        self.assertEqual(len(table), 4)
        self.assertTrue(table['exact'].all())
        row = table[(table['stage'] == 'A1') & (table['N'] == 4)].iloc[0]
        self.assertEqual((row['open_cells'], row['previous'], row['dim']), (3, 1, 4))

    def test_mapping_constructions_inherit(self):
        """测试映射柱和映射锥继承复形结构"""
        for f in (Identity(M2), BlockMap(M1, M2, ((2,),))):
            reports = validate_mapping_constructions(f, (2, 4))
            self.assertEqual(len(reports), 12)
            self.assertTrue(all(r.status == PASS for r in reports), [r.id for r in reports if not r.passed])


class TestDiscreteComplex(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """分辨率 8 下的圆周复形"""
        cls.X = circle_complex()
        cls.D = DiscreteComplex(cls.X, 8)

    def test_cell_values_are_isomorphism(self):
        """测试胞腔点取值 E 与 Φ 互逆"""
        for q in (0, 1):
            E = self.D.cell_matrix(q)
            np.testing.assert_allclose(E @ self.D.inverse(q), np.eye(E.shape[0]), atol=1e-10)
        self.assertEqual(len(self.D.irreps[1]), 8)

    def test_decompose_identity_representation(self):
        """测试把不可约表示分解回自身"""
        rep = self.D.cell_eval(1, 1, (Fraction(1, 2),), 0)
        W, slots = self.D.decompose(rep)
        self.assertEqual(len(slots), 1)
        self.assertEqual(slots[0].level, 1)
        self.assertEqual(slots[0].point, (Fraction(1, 2),))

    def test_is_cellular(self):
        """测试恒等映射是胞腔映射，旋转把 0 胞腔移进 1 胞腔内部"""
        ident = identity_morphism(self.D.algebras[-1])
        ok, ranks = is_cellular(self.D, self.D, ident)
        self.assertTrue(ok)
        self.assertEqual(set(ranks), {0, 1})
        _, rot = circle_rotation(Fraction(1, 2))
        ok, ranks = is_cellular(self.D, self.D, discretize_morphism(rot, 8))
        self.assertFalse(ok)
        self.assertGreater(ranks[0], 0)


class TestCellularApproximation(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """圆周旋转半圈，N = 8"""
        cls.X, cls.rot = circle_rotation(Fraction(1, 2))
        cls.f = discretize_morphism(cls.rot, 8)
        cls.cm, cls.g, cls.certs = cellular_approximate(cls.X, cls.X, cls.f, 8, check_id='approx/rot',
                                                        source_expr=cls.rot)

    def test_all_certificates_pass(self):
        """测试逼近的所有证书通过"""
        failed = [r.id for r in self.certs if r.status != PASS]
        self.assertEqual(failed, [])
        self.assertTrue(self.cm.passed)
        ids = {r.id for r in self.certs}
        for suffix in ('property1', 'property2', 'property4', 'slices'):
            self.assertIn(f"approx/rot/{suffix}", ids)

    def test_homotopy_endpoints(self):
        """测试同伦从 f 出发、终点为胞腔映射 h"""
        np.testing.assert_allclose(self.g.start.matrix, self.f.matrix, atol=1e-12)
        np.testing.assert_allclose(self.g.end.matrix, self.cm.h.matrix)
        D = DiscreteComplex(self.X, 8)
        self.assertTrue(is_cellular(D, D, self.cm.h)[0])
        self.assertIs(self.cm.source_expr, self.rot)

    def test_cellular_map_is_fixed(self):
        """测试已是胞腔映射的恒等映射逼近后不变"""
        f = discretize_morphism(Identity(self.X.top.algebra), 4)
        cm, g, certs = cellular_approximate(self.X, self.X, f, 4)
        self.assertTrue(all(r.passed for r in certs))
        B = f.domain.basis_matrix()
        np.testing.assert_allclose(cm.h.matrix @ B, f.matrix @ B, atol=1e-10)
        self.assertEqual(next(r for r in certs if r.kind == 'extend').witness['moving_blocks'], [])

    def test_wrong_shape_rejected(self):
        """测试映射的维数与复形不符时报错"""
        f = discretize_morphism(Identity(M2), 4)
        with self.assertRaises(StructureError):
            cellular_approximate(self.X, self.X, f, 4)


class TestPrismSource(unittest.TestCase):
    def test_center_stays_on_bottom(self):
        """测试 t = 0 时中心点落在底面原处"""
        self.assertEqual(prism_source((Fraction(1, 2),), Fraction(0), 4, 4), ('bottom', (Fraction(1, 2),), 0))

    def test_ray_reaches_bottom_corner(self):
        """测试 t = 1 时 1/4 处的射线恰好落到底面的端点"""
        self.assertEqual(prism_source((Fraction(1, 4),), Fraction(1), 4, 4), ('bottom', (Fraction(0),), 0))

    def test_ray_hits_side(self):
        """测试靠近边界的点在 t = 1 时打到侧面，时间下标按 T 取整"""
        self.assertEqual(prism_source((Fraction(1, 8),), Fraction(1), 8, 3), ('side', (Fraction(0),), 2))

    def test_two_dimensional_point(self):
        """测试二维点按最大坐标偏移判断落在底面还是侧面"""
        kind, point, idx = prism_source((Fraction(1, 2), Fraction(1, 4)), Fraction(0), 4, 2)
        self.assertEqual((kind, point, idx), ('bottom', (Fraction(1, 2), Fraction(1, 4)), 0))
        kind, point, idx = prism_source((Fraction(1, 2), Fraction(1, 8)), Fraction(1), 8, 3)
        self.assertEqual((kind, point, idx), ('side', (Fraction(1, 2), Fraction(0)), 2))


class TestExtendRelative(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """分辨率 4 下的圆周复形和半圈旋转"""
        cls.N = 4
        cls.X, cls.rot = circle_rotation(Fraction(1, 2))
        cls.D = DiscreteComplex(cls.X, cls.N)

    def _base_stage(self, f):
        start = ConcreteMorphism(f.domain, self.D.algebras[0], self.D.quotient(1, 0) @ f.matrix, 'g0[0]')
        return StageHomotopy(0, [start], None, list(range(len(self.D.algebras[0].blocks))))

    def test_cell_pair_ndr(self):
        """测试胞腔对的 NDR 数据：理想块是两个端点，条件全部成立"""
        ndr = cell_pair_ndr(self.D, 1, 2)
        self.assertEqual(ndr.ideal_blocks, [0, self.N])
        self.assertEqual(len(ndr.phi.slices), 3)
        report = check_ndr_pair(ndr)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['detected_blocks'], [0, self.N])

    def test_constant_lower_homotopy(self):
        """测试低层同伦为常值时扩张出的切片都等于 f，没有需要移动的块"""
        f = discretize_morphism(Identity(self.X.top.algebra), self.N)
        base = self._base_stage(f)
        lower = StageHomotopy(0, [base.slices[0]] * 3)
        stage, report = extend_relative(self.D, self.D, 1, f, lower)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['moving_blocks'], [])
        self.assertEqual(len(stage.slices), 3)
        B = f.domain.basis_matrix()
        for s in stage.slices:
            np.testing.assert_allclose(s.matrix @ B, f.matrix @ B, atol=1e-10)
        for key in ('gluing', 'lands_in_pair', 'start_recovers_f'):
            self.assertLessEqual(report.witness['residuals'][key], 1e-9)

    def test_identity_pair_without_time(self):
        """测试 T = 0 时扩张只有起点切片，残差为零"""
        f = discretize_morphism(Identity(self.X.top.algebra), self.N)
        stage, report = extend_relative(self.D, self.D, 1, f, self._base_stage(f))
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(len(stage.slices), 1)
        self.assertLessEqual(report.max_residual, 1e-9)

    def test_rotation_stage_by_stage(self):
        """测试旋转：先压缩第 0 级，再扩张到第 1 级，报告带 f1-f4 的数据"""
        f = discretize_morphism(self.rot, self.N)
        stage0 = self._base_stage(f)
        compress_stage(self.D, self.D, stage0, f)
        self.assertEqual(stage0.info['compression_steps'], 2)
        self.assertEqual(len(stage0.slices), 3)
        end0 = ConcreteMorphism(f.domain, self.D.algebras[0], stage0.slices[-1].matrix)
        self.assertTrue(is_cellular(self.D, self.D, end0, 0)[0])
        stage1, report = extend_relative(self.D, self.D, 1, f, stage0, check_id='rot/A1/extend')
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.id, 'rot/A1/extend')
        w = report.witness
        self.assertEqual(w['moving_blocks'], [0])
        self.assertEqual(w['f1_boundary_points'], 2)
        self.assertEqual(w['f4_slices'], 3)
        self.assertEqual(sum(w['f3_ray_hits'].values()), 3 * 3)
        self.assertLessEqual(w['residuals']['lands_in_pair'], 1e-9)
        self.assertLessEqual(w['residuals']['start_recovers_f'], 1e-9)
        self.assertEqual(stage1.lower_index, [0, 1, 2])

    def test_failing_ndr_skips(self):
        """测试给定的 NDR 数据不满足原像条件时扩张被跳过"""
        f = discretize_morphism(self.rot, self.N)
        lower = self._base_stage(f)
        lower.slices = lower.slices * 3
        good = cell_pair_ndr(self.D, 1, 2)
        U = np.zeros(good.u.matrix.shape)
        U[:, self.N] = 1
        bad = NDRData(good.B, good.ideal_blocks, ConcreteMorphism(good.u.domain, good.B, U, 'u'), good.phi)
        stage, report = extend_relative(self.D, self.D, 1, f, lower, ndr=bad)
        self.assertIsNone(stage)
        self.assertEqual(report.status, SKIP)
        self.assertIn('preimage', report.witness['ndr']['violated'])

    def test_mismatched_time_grid_skips(self):
        """测试 NDR 形变的时间网格与低层同伦不一致时扩张被跳过"""
        f = discretize_morphism(self.rot, self.N)
        lower = self._base_stage(f)
        stage, report = extend_relative(self.D, self.D, 1, f, lower, ndr=cell_pair_ndr(self.D, 1, 4))
        self.assertIsNone(stage)
        self.assertEqual(report.status, SKIP)
        self.assertEqual(report.witness['ndr_slices'], 5)


if __name__ == '__main__':
    unittest.main(verbosity=2)
