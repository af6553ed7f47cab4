#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
命令行入口

    python nccw.py run corpus/circle.nccw --resolution 2 --resolution 4 --json out.json --dot out.dot

退出码：0 全部通过，1 有检查失败，2 用法或解析错误
"""

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

# 添加项目根目录到Python路径
sys.path.append(str(Path(__file__).parent))

from src.core.errors import ParseError, NccwError
from src.core.settings import load_config
from src.utils.dsl_parser import parse_dsl
from src.utils.script_runner import emit_outputs, run

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog='nccw', description='NCCW 复形工作台：离散化、性质检查、Puppe 链和胞腔逼近')
    sub = parser.add_subparsers(dest='command', required=True)
    p_run = sub.add_parser('run', help='执行 .nccw 脚本')
    p_run.add_argument('script', help='.nccw 脚本路径')
    p_run.add_argument('--resolution', type=int, action='append', dest='resolutions',
                       help='网格分辨率，可重复给出（默认 2 4 8）')
    p_run.add_argument('--seed', type=int, help='随机检查的全局种子')
    p_run.add_argument('--tol', type=float, help='残差容差')
    p_run.add_argument('--json', dest='json_path', help='报告 JSON 输出路径')
    p_run.add_argument('--dot', dest='dot_path', help='DOT 图输出路径')
    p_run.add_argument('--quiet', action='store_true', help='不打印汇总表')
    return parser


def print_summary(result):
    """控制台汇总：每类检查的 pass/fail/skip 计数，外加失败项"""
    with pd.option_context('display.max_rows', 200, 'display.width', 160):
        print(result.summary().to_string())
        if result.failed:
            print()
            frame = result.frame()
            print(frame[frame['status'] == 'fail'].to_string(index=False))
        for name, table in sorted(result.tables.items()):
            print(f"\n[{name}]")
            print(table.to_string(index=False))


def cmd_run(args):
    path = Path(args.script)
    if not path.is_file():
        logger.error(f"Script not found: {path}")
        print(f"找不到脚本: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(resolutions=args.resolutions, seed=args.seed, tolerance=args.tol)
    except ValueError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        script = parse_dsl(path.read_text(encoding='utf-8'))
    except ParseError as e:
        logger.error(f"Parse error in {path} at {e.line}:{e.col}")
        print(f"{path}: {e}", file=sys.stderr)
        return EXIT_USAGE

    logger.info(f"Running {path} with resolutions {list(config.resolutions)}, seed {config.seed}")
    result = run(script, config)

    try:
        emit_outputs(result, config, path.name, args.json_path, args.dot_path)
    except OSError as e:
        logger.error(f"Failed to write outputs: {e}")
        print(f"写出结果失败: {e}", file=sys.stderr)
        return EXIT_USAGE

    if not args.quiet:
        print_summary(result)
    return result.exit_code


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return cmd_run(args)
    except NccwError as e:
        logger.error(f"Run aborted: {e}")
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
