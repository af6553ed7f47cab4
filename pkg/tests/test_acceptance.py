import time
import unittest
from fractions import Fraction
from pathlib import Path
import sys

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.core.check import PASS, check_pullback_universal, pullback_square
from src.core.discretize import discretize_morphism
from src.core.expr import BlockMap, Evaluation, HalfOpenTensor, IntervalTensor, UserNamed
from src.core.nccw import cellular_approximate, validate_complex
from src.core.puppe import chain_certificates, cyl_retraction, puppe_chain
from src.core.settings import load_config
from src.data.corpus import M1, M2, circle_complex, circle_rotation, corpus_scripts, phi_examples, two_cell_complex
from src.utils.dsl_parser import parse_dsl
from src.utils.report_writer import report_json
from src.utils.script_runner import run

RESOLUTIONS = (2, 4, 8)

# 宽松的时间上限（秒），只用来发现数量级上的退化
SLACK = 4


class TestAcceptance(unittest.TestCase):
    def _timed(self, fn):
        start = time.perf_counter()
        value = fn()
        return value, time.perf_counter() - start

    def test_pullback_squares(self):
        """测试映射柱和映射锥方块在 20 个随机锥上的泛性质及耗时"""
        phi = BlockMap(M1, M2, ((2,),))
        legs = [Evaluation(Fraction(1), IntervalTensor(1, M2)), Evaluation(Fraction(1), HalfOpenTensor(M2))]

        def work():
            return [check_pullback_universal(pullback_square(phi, beta, N), trials=20, seed=N)
                    for beta in legs for N in RESOLUTIONS]

        reports, elapsed = self._timed(work)
        self.assertTrue(all(r.status == PASS for r in reports))
        self.assertTrue(all(r.witness['kernel_intersection_rank'] == 0 for r in reports))
        self.assertLess(elapsed, 5 * SLACK)

    def test_row_exactness(self):
        """测试语料复形每级的维数等式及耗时"""
        reports, elapsed = self._timed(
            lambda: [r for X in (circle_complex(), two_cell_complex()) for r in validate_complex(X, RESOLUTIONS)])
        dims = [r for r in reports if r.kind == 'dim']
        self.assertGreater(len(dims), 0)
        self.assertTrue(all(r.status == PASS for r in dims))
        self.assertLess(elapsed, 5 * SLACK)

    def test_cylinder_retraction(self):
        """测试三个 φ 的映射柱收缩及耗时"""
        results, elapsed = self._timed(
            lambda: [cyl_retraction(phi, N) for phi in phi_examples().values() for N in RESOLUTIONS])
        self.assertTrue(all(r.status == PASS for res in results for r in res.reports))
        self.assertLess(elapsed, 2 * SLACK)

    def test_puppe_certificates(self):
        """测试 8 项链在 N = 4 的三类证书及耗时"""
        phi = UserNamed('phi', BlockMap(M1, M2, ((2,),)))
        reports, elapsed = self._timed(lambda: chain_certificates(puppe_chain(phi, 8), 4))
        self.assertTrue(all(r.status == PASS for r in reports))
        self.assertLess(elapsed, 5 * SLACK)

    def test_cellular_approximation(self):
        """测试圆周旋转在 N = 8 的胞腔逼近及耗时"""
        X, rot = circle_rotation(Fraction(1, 2))
        f = discretize_morphism(rot, 8)
        (cm, g, certs), elapsed = self._timed(lambda: cellular_approximate(X, X, f, 8))
        self.assertTrue(all(r.status == PASS for r in certs), [r.id for r in certs if not r.passed])
        self.assertTrue(cm.passed)
        self.assertLess(elapsed, 30 * SLACK)

    def test_corpus_determinism(self):
        """测试整个语料在相同种子下两次运行的 JSON 逐字节相同"""
        config = load_config(resolutions=RESOLUTIONS, seed=20070701)
        for path in corpus_scripts():
            with self.subTest(script=path.name):
                text = path.read_text(encoding='utf-8')
                first = report_json(run(parse_dsl(text), config).reports, config, path.name)
                second = report_json(run(parse_dsl(text), config).reports, config, path.name)
                self.assertEqual(first, second)


if __name__ == '__main__':
    unittest.main(verbosity=2)
