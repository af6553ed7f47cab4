#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
运行所有测试用例的脚本
"""

import unittest
import sys
from pathlib import Path

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.append(str(project_root))


def run_all_tests(pattern='test_*.py', verbosity=2):
    """发现并运行 tests/ 下的测试，返回是否全部通过"""
    loader = unittest.TestLoader()
    start_dir = project_root / 'tests'
    suite = loader.discover(str(start_dir), pattern=pattern, top_level_dir=str(project_root))

    runner = unittest.TextTestRunner(verbosity=verbosity)
    result = runner.run(suite)
    return result.wasSuccessful()


if __name__ == '__main__':
    # 可选参数：只跑某个模块，例如 python run_tests.py test_puppe.py
    pattern = sys.argv[1] if len(sys.argv) > 1 else 'test_*.py'
    success = run_all_tests(pattern)
    sys.exit(0 if success else 1)
