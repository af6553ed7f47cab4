#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
演示启动脚本
先运行测试，如果测试通过则依次执行 corpus/ 下的全部脚本并打印汇总
"""

import os
import sys
import logging

import pandas as pd

# 配置日志
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# 反例脚本：预期有失败
EXPECTED_FAILURES = {'negative.nccw', 'ker_overlap.nccw'}


def main():
    """主函数：运行测试并执行语料脚本"""
    # 设置工作目录为脚本所在目录
    script_dir = os.path.dirname(os.path.abspath(__file__))
    os.chdir(script_dir)

    # 添加项目根目录到Python路径
    sys.path.append(script_dir)

    print("=" * 50)
    print("NCCW 复形工作台启动脚本")
    print("=" * 50)

    # 运行测试
    print("\n[1/2] 运行自动化测试...")
    from run_tests import run_all_tests
    if not run_all_tests(verbosity=1):
        print("\n❌ 测试失败，请修复上述问题后再运行语料。")
        sys.exit(1)

    print("\n✅ 所有测试通过!")
    print("\n[2/2] 执行语料脚本...")
    try:
        table = run_corpus()
    except KeyboardInterrupt:
        print("\n⚠️ 被用户中断")
        return
    except Exception as e:
        logger.error(f"Corpus run failed: {e}")
        print(f"\n❌ 发生未知错误: {e}")
        sys.exit(1)

    print()
    print(table.to_string(index=False))
    unexpected = table[~table['ok']]
    if not unexpected.empty:
        print(f"\n❌ 结果与预期不符: {', '.join(unexpected['script'])}")
        sys.exit(1)
    print("\n✅ 语料结果与预期一致")


def run_corpus():
    """执行每个语料脚本，返回 脚本/通过/失败/跳过/是否符合预期 的表"""
    from src.core.settings import load_config
    from src.data.corpus import corpus_scripts
    from src.utils.dsl_parser import parse_dsl
    from src.utils.script_runner import run

    config = load_config()
    rows = []
    for path in corpus_scripts():
        logger.info(f"Running corpus script {path.name}")
        result = run(parse_dsl(path.read_text(encoding='utf-8')), config)
        counts = result.frame()['status'].value_counts() if result.reports else pd.Series(dtype=int)
        expect_fail = path.name in EXPECTED_FAILURES
        rows.append({
            'script': path.name,
            'pass': int(counts.get('pass', 0)),
            'fail': int(counts.get('fail', 0)),
            'skip': int(counts.get('skip', 0)),
            'ok': bool(result.exit_code) == expect_fail,
        })
    return pd.DataFrame(rows, columns=['script', 'pass', 'fail', 'skip', 'ok'])


if __name__ == "__main__":
    main()
