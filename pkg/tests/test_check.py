import unittest
import numpy as np
from fractions import Fraction
from pathlib import Path
import sys

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.core.check import (FAIL, PASS, SKIP, CheckReport, Homotopy, NDRData, PullbackSquare, check_exact_row,
                            check_homotopy, check_ndr_pair, check_pullback_universal, check_pushout_universal,
                            check_star_hom, ideal_blocks_of, pullback_square, pushout_square, reports_frame,
                            solve_hep, status_counts)
from src.core.discretize import discretize_algebra, discretize_morphism
from src.core.errors import NotABlockIdealError, StructureError
from src.core.expr import (BlockMap, ConstantEmbed, Evaluation, FiniteDim, HalfOpenTensor, IntervalTensor,
                           Zero, ZeroAlgebra, compose)
from src.core.fdalg import (ConcreteMorphism, FiniteDimAlgebra, block_inclusion, identity_morphism,
                            quotient_by_blocks, zero_morphism)
from src.data.corpus import M1, M2

RESOLUTIONS = (2, 4, 8)


class TestStarHom(unittest.TestCase):
    def test_block_map_passes(self):
        """测试块映射是 *-同态"""
        f = discretize_morphism(BlockMap(M1, M2, ((2,),)), 2)
        report = check_star_hom(f, check_id='star/mult2')
        self.assertEqual(report.status, PASS)
        self.assertEqual(report.kind, 'star')

    def test_scaled_identity_fails(self):
        """测试 2·id 不保持乘法，给出 witness"""
        A = FiniteDimAlgebra.full((2,))
        f = ConcreteMorphism(A, A, 2 * np.eye(4), '2id')
        report = check_star_hom(f, check_id='star/2id')
        self.assertEqual(report.status, FAIL)
        self.assertGreater(report.max_residual, 1.0)
        self.assertEqual(report.witness['defect'], 'product')
        self.assertEqual(report.witness['morphism'], '2id')


class TestPullback(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """映射柱和映射锥的拉回方块"""
        cls.phi = BlockMap(M1, M2, ((2,),))

    def test_cylinder_and_cone_squares(self):
        """测试映射柱和映射锥方块满足拉回的泛性质"""
        legs = [Evaluation(Fraction(1), IntervalTensor(1, M2)), Evaluation(Fraction(1), HalfOpenTensor(M2))]
        for beta in legs:
            for N in RESOLUTIONS:
                with self.subTest(beta=str(beta), N=N):
                    square = pullback_square(self.phi, beta, N)
                    self.assertLess(square.commutativity_residual(), 1e-12)
                    report = check_pullback_universal(square, trials=20, seed=N)
                    self.assertEqual(report.status, PASS, report.witness)
                    self.assertEqual(report.witness['kernel_intersection_rank'], 0)

    def test_kernel_overlap_fails(self):
        """测试两个投影的核相交时不是拉回"""
        X = FiniteDim((1, 1))
        leg = discretize_morphism(BlockMap(X, M1, ((1, 0),)), 2)
        ident = identity_morphism(discretize_algebra(M1, 2))
        square = PullbackSquare(discretize_algebra(X, 2), leg, leg, ident, ident)
        report = check_pullback_universal(square, seed=1)
        self.assertEqual(report.status, FAIL)
        self.assertEqual(report.witness['kernel_intersection_rank'], 1)
        self.assertEqual(len(report.witness['common_kernel_vector']), 2)

    def test_non_commuting_square_is_skipped(self):
        """测试外方块不交换时跳过"""
        A = discretize_algebra(M1, 2)
        square = PullbackSquare(A, identity_morphism(A), identity_morphism(A), identity_morphism(A),
                                zero_morphism(A, A))
        self.assertEqual(check_pullback_universal(square).status, SKIP)


class TestPushout(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """零代数上的推出：C = 0"""
        cls.alpha = Zero(ZeroAlgebra(), M1)
        cls.beta = Zero(ZeroAlgebra(), M1)

    def test_direct_sum_is_pushout(self):
        """测试 M1 ⊕ M1 是两个 M1 在零代数上的推出"""
        X = FiniteDim((1, 1))
        gamma = BlockMap(M1, X, ((1,), (0,)))
        delta = BlockMap(M1, X, ((0,), (1,)))
        square = pushout_square(self.alpha, self.beta, gamma, delta, 2)
        report = check_pushout_universal(square, seed=3)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['generated_dim'], 2)

    def test_too_large_candidate_fails(self):
        """测试像不生成候选代数时失败"""
        X = FiniteDim((1, 1, 1))
        gamma = BlockMap(M1, X, ((1,), (0,), (0,)))
        delta = BlockMap(M1, X, ((0,), (1,), (0,)))
        report = check_pushout_universal(pushout_square(self.alpha, self.beta, gamma, delta, 2))
        self.assertEqual(report.status, FAIL)
        self.assertEqual(report.witness['generated_dim'], 2)
        self.assertEqual(report.witness['dim'], 3)


class TestExactRow(unittest.TestCase):
    def test_block_ideal_row(self):
        """测试 0 -> M2 -> M2 ⊕ M3 -> M3 -> 0 正合"""
        A = FiniteDimAlgebra.full((2, 3))
        _, inc = block_inclusion(A, [0])
        _, q = quotient_by_blocks(A, [0])
        report = check_exact_row(inc, q)
        self.assertEqual(report.status, PASS)
        self.assertEqual(report.witness['dims'], [4, 13, 9])

    def test_identity_row_fails(self):
        """测试 id 后接 id 的复合非零"""
        A = FiniteDimAlgebra.full((2,))
        report = check_exact_row(identity_morphism(A), identity_morphism(A))
        self.assertEqual(report.status, FAIL)
        self.assertIn('composite_zero', report.witness['violated'])
        self.assertIn('image_is_kernel', report.witness['violated'])

    def test_row_not_composable(self):
        """测试行不可复合时报错"""
        with self.assertRaises(StructureError):
            check_exact_row(identity_morphism(FiniteDimAlgebra.full((1,))),
                            identity_morphism(FiniteDimAlgebra.full((2,))))


class TestHomotopy(unittest.TestCase):
    def test_constant_homotopy(self):
        """测试常值同伦连接 f 和 f"""
        f = discretize_morphism(BlockMap(M1, M2, ((2,),)), 4)
        report = check_homotopy(Homotopy.constant(f, 3), f, f)
        self.assertEqual(report.status, PASS)
        self.assertEqual(report.witness['slices'], 4)

    def test_homotopy_from_expression(self):
        """测试从 A -> C(I)⊗B 的表达式取时间切片"""
        Phi = ConstantEmbed(IntervalTensor(1, M2))
        H = Homotopy.from_expr(Phi, 4)
        self.assertEqual(len(H.slices), 5)
        self.assertEqual(H.times[-1], 1)
        ident = identity_morphism(H.domain)
        self.assertTrue(check_homotopy(H, ident, ident).passed)
        report = check_homotopy(H, zero_morphism(H.domain, H.codomain), ident)
        self.assertEqual(report.status, FAIL)
        self.assertEqual(report.witness['endpoint'], 'start')
        with self.assertRaises(StructureError):
            Homotopy.from_expr(BlockMap(M1, M2, ((2,),)), 4)

    def test_reversed(self):
        """测试反向同伦交换端点"""
        A = discretize_algebra(M2, 2)
        H = Homotopy([identity_morphism(A), zero_morphism(A, A)])
        R = H.reversed()
        self.assertIs(R.start, H.end)
        self.assertEqual(R.times, [Fraction(0), Fraction(1)])


class TestNDR(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """B = M1 ⊕ M1，理想 A 为第 0 块"""
        cls.N = 4
        cls.B_expr = FiniteDim((1, 1))
        cls.B = discretize_algebra(cls.B_expr, cls.N)
        cls.interval = discretize_algebra(IntervalTensor(1, M1), cls.N)
        cls.end = Evaluation(Fraction(1), IntervalTensor(1, M1))
        cls.phi = Homotopy.from_expr(ConstantEmbed(IntervalTensor(1, cls.B_expr)), cls.N)

    def _ndr(self, column):
        incl = BlockMap(M1, self.B_expr, column)
        u = discretize_morphism(compose(incl, self.end), self.N)
        return NDRData(self.B, [0], u, self.phi)

    def test_ndr_pair_passes(self):
        """测试 u 只碰到理想外的块时 NDR 条件成立"""
        report = check_ndr_pair(self._ndr(((0,), (1,))))
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['ideal_blocks'], [0])
        self.assertIn('note', report.witness)

    def test_ndr_pair_fails(self):
        """测试 u 的像碰到理想块时原像条件不成立"""
        report = check_ndr_pair(self._ndr(((1,), (1,))))
        self.assertEqual(report.status, FAIL)
        self.assertIn('preimage', report.witness['violated'])

    def test_ndr_validation(self):
        """测试理想块下标越界时报错"""
        u = self._ndr(((0,), (1,))).u
        with self.assertRaises(NotABlockIdealError):
            NDRData(self.B, [5], u, self.phi)

    def test_ndr_shape_validation(self):
        """测试 u 的定义域、值域和形变切片与 B 不匹配时报错"""
        u = self._ndr(((0,), (1,))).u
        M2_alg = FiniteDimAlgebra.full((2,))
        with self.assertRaises(StructureError):
            NDRData(self.B, [0], zero_morphism(M2_alg, self.B), self.phi)
        with self.assertRaises(StructureError):
            NDRData(self.B, [0], zero_morphism(self.interval, FiniteDimAlgebra.full((1, 1, 1))), self.phi)
        with self.assertRaises(StructureError):
            NDRData(self.B, [0], u, Homotopy.constant(identity_morphism(M2_alg), self.N))

    def test_deformation_must_start_at_identity(self):
        """测试 u 合法但 h_0 是零映射时只违反起点条件和固定 A 的条件"""
        u = self._ndr(((0,), (1,))).u
        ndr = NDRData(self.B, [0], u, Homotopy.constant(zero_morphism(self.B, self.B), self.N))
        report = check_ndr_pair(ndr)
        self.assertEqual(report.status, FAIL)
        self.assertIn('start_identity', report.witness['violated'])
        self.assertNotIn('preimage', report.witness['violated'])
        self.assertAlmostEqual(report.witness['residuals']['start_identity'], 1.0)

    def _two_point(self):
        """B = C²，A 为第 1 块，u(g) = (g(1), g(0))，形变为常值恒等映射"""
        U = np.zeros((2, self.N + 1))
        U[0, self.N] = 1
        U[1, 0] = 1
        u = ConcreteMorphism(self.interval, self.B, U, 'u')
        return NDRData(self.B, [1], u, Homotopy.constant(identity_morphism(self.B), self.N))

    def test_two_point_pair(self):
        """测试两点空间的 NDR 对：所有条件残差为零，u 探测到第 1 块"""
        report = check_ndr_pair(self._two_point())
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['detected_blocks'], [1])
        self.assertLessEqual(max(report.witness['residuals'].values()), 1e-12)

    def test_whole_algebra_pair(self):
        """测试 (B, B)：A 是全部块、u = 0 时 NDR 条件成立"""
        ndr = NDRData(self.B, [0, 1], zero_morphism(self.interval, self.B),
                      Homotopy.constant(identity_morphism(self.B), self.N))
        report = check_ndr_pair(ndr)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(report.witness['detected_blocks'], [0, 1])

    def test_hep_on_two_point_pair(self):
        """测试两点空间上的同伦扩张：交换两块的 f 被原样延拓"""
        ndr = self._two_point()
        f = ConcreteMorphism(self.B, self.B, np.array([[0.0, 1.0], [1.0, 0.0]]), 'swap')
        A = FiniteDimAlgebra.full((1,))
        qf = ConcreteMorphism(self.B, A, np.array([[1.0, 0.0]]), 'q∘swap')
        H, report = solve_hep(f, Homotopy.constant(qf, self.N), ndr)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertLessEqual(report.max_residual, 1e-9)
        np.testing.assert_allclose(H.start.matrix, f.matrix)
        np.testing.assert_allclose(H.end.matrix[1:], qf.matrix)

    def test_hep_identity_inclusion(self):
        """测试 A = B 时同伦扩张就是给定的同伦本身"""
        ndr = NDRData(self.B, [0, 1], zero_morphism(self.interval, self.B),
                      Homotopy.constant(identity_morphism(self.B), self.N))
        f = identity_morphism(self.B)
        H, report = solve_hep(f, Homotopy.constant(f, self.N), ndr)
        self.assertEqual(report.status, PASS, report.witness)
        for s in H.slices:
            np.testing.assert_allclose(s.matrix, f.matrix)

    def test_hep_solution(self):
        """测试同伦扩张：h~_0 = f 且限制到 A 上等于给定同伦"""
        ndr = self._ndr(((0,), (1,)))
        f = identity_morphism(self.B)
        A = FiniteDimAlgebra.full((1,))
        qf = ConcreteMorphism(self.B, A, np.array([[1.0, 0.0]]), 'q')
        H, report = solve_hep(f, Homotopy.constant(qf, self.N), ndr)
        self.assertEqual(report.status, PASS, report.witness)
        self.assertEqual(len(H.slices), self.N + 1)
        np.testing.assert_allclose(H.start.matrix, f.matrix)

    def test_hep_skipped_without_ndr(self):
        """测试 NDR 不成立时同伦扩张被跳过"""
        ndr = self._ndr(((1,), (1,)))
        f = identity_morphism(self.B)
        qf = ConcreteMorphism(self.B, FiniteDimAlgebra.full((1,)), np.array([[1.0, 0.0]]), 'q')
        H, report = solve_hep(f, Homotopy.constant(qf, self.N), ndr)
        self.assertIsNone(H)
        self.assertEqual(report.status, SKIP)

    def test_ideal_blocks_of(self):
        """测试从包含映射读出理想块"""
        inc = discretize_morphism(BlockMap(M2, FiniteDim((2, 3)), ((1,), (0,))), 2)
        self.assertEqual(ideal_blocks_of(inc), [0])
        with self.assertRaises(NotABlockIdealError):
            ideal_blocks_of(discretize_morphism(BlockMap(M1, M2, ((1,),)), 2))


class TestReports(unittest.TestCase):
    def test_report_validation(self):
        """测试报告状态校验和默认 witness"""
        with self.assertRaises(StructureError):
            CheckReport('x', 'star', 'maybe')
        report = CheckReport('x', 'star', FAIL, 1)
        self.assertEqual(report.witness, {'reason': 'unspecified'})
        self.assertIsInstance(report.max_residual, float)
        self.assertNotIn('witness', CheckReport('y', 'star', PASS).to_dict())

    def test_frame_and_counts(self):
        """测试报告汇总成 DataFrame 和计数表"""
        reports = [CheckReport('b', 'star', PASS), CheckReport('a', 'star', FAIL, 1.0),
                   CheckReport('c', 'row', SKIP)]
        df = reports_frame(reports)
        self.assertEqual(list(df['id']), ['a', 'b', 'c'])
        self.assertNotIn('witness', df.columns)
        counts = status_counts(reports)
        self.assertEqual(list(counts.columns), [PASS, FAIL, SKIP])
        self.assertEqual(int(counts.loc['star', PASS]), 1)
        self.assertEqual(int(counts.loc['star', FAIL]), 1)
        self.assertEqual(int(counts.loc['row', SKIP]), 1)
        self.assertTrue(status_counts([]).empty)


if __name__ == '__main__':
    unittest.main(verbosity=2)
