import unittest
import numpy as np
from fractions import Fraction
from pathlib import Path
import sys

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.core.check import check_star_hom
from src.core.discretize import (check_refinement, clear_cache, cube_points, discretize_algebra,
                                 discretize_morphism, discretize_pullback, face_parameter, open_cube_points,
                                 restrict_resolution, sphere_points)
from src.core.errors import DimensionBoundError, OffGridError, ResolutionError
from src.core.expr import (BlockMap, BoundaryRestrict, CircleRotation, Compose, ConstantEmbed, Cylinder, DirectSum,
                           Evaluation, FiniteDim, HalfOpenTensor, Identity, IntervalTensor, MappingCone,
                           OpenCubeTensor, ProjectionFirst, ProjectionSecond, SphereTensor, SuspendedMorphism,
                           Winding, Zero, ZeroExtend, linear_dim)
from src.core.puppe import cylinder_section
from src.data.corpus import M1, M2, circle_complex, two_cell_complex

RESOLUTIONS = (2, 4, 8)


class TestGrids(unittest.TestCase):
    def test_point_counts(self):
        """测试网格点个数"""
        self.assertEqual(len(cube_points(2, 4)), 25)
        self.assertEqual(len(open_cube_points(2, 4)), 9)
        self.assertEqual(len(sphere_points(1, 4)), 16)
        self.assertEqual(sphere_points(0, 4), [(Fraction(0),), (Fraction(1),)])

    def test_face_parameter(self):
        """测试 S^1 上的周长参数"""
        S1 = SphereTensor(1, M1)
        self.assertEqual(face_parameter(S1, (Fraction(0), Fraction(0))), 0)
        self.assertEqual(face_parameter(S1, (Fraction(1), Fraction(0))), Fraction(1, 4))
        self.assertEqual(face_parameter(S1, (Fraction(1), Fraction(1))), Fraction(1, 2))
        self.assertEqual(face_parameter(S1, (Fraction(0), Fraction(1, 2))), Fraction(7, 8))


class TestAlgebraDiscretization(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """语料中的代数表达式"""
        phi = BlockMap(M1, M2, ((2,),))
        cls.corpus = [
            FiniteDim((2, 3)),
            IntervalTensor(2, M2),
            OpenCubeTensor(2, FiniteDim((1, 2))),
            SphereTensor(1, M2),
            SphereTensor(0, M1),
            HalfOpenTensor(M2),
            DirectSum(IntervalTensor(1, M1), M2),
            Cylinder(Identity(M2)),
            Cylinder(phi),
            MappingCone(phi),
            MappingCone(Zero(M2, M2)),
            OpenCubeTensor(1, MappingCone(phi)),
            circle_complex().top.algebra,
            two_cell_complex().algebra(1),
            two_cell_complex().top.algebra,
        ]

    def test_linear_dim_matches(self):
        """测试维数预测与离散化结果严格相等"""
        for a in self.corpus:
            for N in RESOLUTIONS:
                with self.subTest(a=str(a), N=N):
                    self.assertEqual(linear_dim(a, N), discretize_algebra(a, N).dim)

    def test_pullbacks_are_closed(self):
        """测试纤维积对乘法和伴随封闭"""
        for a in (Cylinder(Identity(M2)), MappingCone(BlockMap(M1, M2, ((2,),))), circle_complex().top.algebra):
            fp = discretize_pullback(a, 4)
            self.assertLess(fp.algebra.closure_residual(), 1e-9)
            self.assertEqual(fp.pr1.domain.dim, fp.algebra.dim)

    def test_dimension_bound(self):
        """测试网格维数超过上限时报错"""
        with self.assertRaises(DimensionBoundError):
            discretize_algebra(IntervalTensor(3, M1), 2)

    def test_empty_grid_warns(self):
        """测试空网格退化为零代数并给出警告"""
        clear_cache()
        with self.assertLogs('src.core.discretize', level='WARNING'):
            a = discretize_algebra(OpenCubeTensor(1, M2), 1)
        self.assertEqual(a.dim, 0)


class TestMorphismDiscretization(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        """可复合的态射语料"""
        I1 = IntervalTensor(1, M2)
        M23 = FiniteDim((2, 3))
        ident = Identity(M2)
        cls.maps = [
            BlockMap(M1, M2, ((2,),)),
            ident,
            Zero(M2, M2),
            BlockMap(M2, M23, ((1,), (1,))),
            Identity(M23),
            ConstantEmbed(I1),
            Evaluation(Fraction(1, 2), I1),
            Evaluation(Fraction(0), I1),
            Evaluation(Fraction(1), I1),
            BoundaryRestrict(1, M2),
            ProjectionFirst(Cylinder(ident)),
            ProjectionSecond(Cylinder(ident)),
            cylinder_section(ident),
            ZeroExtend(OpenCubeTensor(1, M2), I1),
            SuspendedMorphism(ident),
        ]

    def test_functoriality(self):
        """测试 D(g∘f) = D(g)·D(f) 逐项严格相等"""
        pairs = [(g, f) for g in self.maps for f in self.maps if f.codomain == g.domain]
        self.assertGreaterEqual(len(pairs), 20)
        for g, f in pairs:
            for N in (2, 4):
                with self.subTest(g=str(g), f=str(f), N=N):
                    lhs = discretize_morphism(Compose(g, f), N).matrix
                    rhs = discretize_morphism(g, N).matrix @ discretize_morphism(f, N).matrix
                    np.testing.assert_array_equal(lhs, rhs)

    def test_refinement_commutes(self):
        """测试 2N -> N 限制与每个构造交换"""
        X = circle_complex()
        two = two_cell_complex()
        extra = [CircleRotation(X.top.algebra, Fraction(1, 2)), two.top.sigma, two.top.rho, two.top.pi,
                 ConstantEmbed(SphereTensor(1, M2))]
        for m in self.maps + extra:
            with self.subTest(m=str(m)):
                self.assertLess(check_refinement(m, 4, 2), 1e-12)
                self.assertLess(check_refinement(m, 8, 4), 1e-12)

    def test_restriction_is_surjective(self):
        """测试分辨率限制是满射（秩等于粗网格维数）"""
        for a in (IntervalTensor(1, M2), SphereTensor(1, M1), Cylinder(Identity(M2)), circle_complex().top.algebra,
                  MappingCone(BlockMap(M1, M2, ((2,),)))):
            with self.subTest(a=str(a)):
                r = restrict_resolution(a, 4, 2)
                self.assertEqual(r.rank(), discretize_algebra(a, 2).dim)
        with self.assertRaises(ResolutionError):
            restrict_resolution(IntervalTensor(1, M1), 4, 3)

    def test_off_grid_evaluation(self):
        """测试不在网格上的取值点报错"""
        ev = Evaluation(Fraction(1, 3), IntervalTensor(1, M1))
        with self.assertRaises(OffGridError) as ctx:
            discretize_morphism(ev, 4)
        self.assertIn('1/4', ctx.exception.admissible)
        self.assertEqual(discretize_morphism(ev, 3).matrix.shape, (1, 4))

    def test_vanishing_endpoint(self):
        """测试 C_0 端点处的取值为零映射"""
        M = discretize_morphism(Evaluation(Fraction(0), HalfOpenTensor(M2)), 4).matrix
        self.assertEqual(M.shape, (4, 16))
        self.assertFalse(M.any())

    def test_rotation_grid(self):
        """测试旋转量必须落在网格上"""
        X = circle_complex()
        rot = CircleRotation(X.top.algebra, Fraction(1, 8))
        with self.assertRaises(OffGridError):
            discretize_morphism(rot, 4)
        self.assertTrue(check_star_hom(discretize_morphism(rot, 8)).passed)

    def test_cached_results_are_not_shared_state(self):
        """测试缓存的矩阵只读，meta 的改动不会带到下一次调用"""
        m = BlockMap(M1, M2, ((2,),))
        first = discretize_morphism(m, 4)
        self.assertFalse(first.matrix.flags.writeable)
        with self.assertRaises(ValueError):
            first.matrix[0, 0] = 5
        first.meta['tag'] = 'changed'
        second = discretize_morphism(m, 4)
        self.assertNotIn('tag', second.meta)
        np.testing.assert_allclose(second.matrix, first.matrix)

    def test_pullback_meta_is_per_call(self):
        """测试每次取纤维积得到独立的 meta，封闭性残差在构造时写入"""
        a = Cylinder(Identity(M2))
        first = discretize_pullback(a, 2)
        self.assertIn('closure_residual', first.pr1.meta)
        first.pr1.meta['closure_residual'] = 99.0
        second = discretize_pullback(a, 2)
        self.assertLess(second.pr1.meta['closure_residual'], 1e-9)

    def test_winding_is_star_hom(self):
        """测试带绕数的逐点块映射是 *-同态，且在起点为恒等排布"""
        src = SphereTensor(1, FiniteDim((1, 1)))
        w = BlockMap(src, SphereTensor(1, M2), ((1, 1),), True, (Winding(((0, 1), (1, 0)), 1),))
        for N in RESOLUTIONS:
            self.assertTrue(check_star_hom(discretize_morphism(w, N)).passed)
        M = discretize_morphism(w, 4).matrix
        # 第一个网格点 (0,0) 上 τ = 0，exp(0) = 1
        first = M[:4, :2]
        np.testing.assert_allclose(first, np.array([[1, 0], [0, 0], [0, 0], [0, 1]]), atol=1e-12)


if __name__ == '__main__':
    unittest.main(verbosity=2)
