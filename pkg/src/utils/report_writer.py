"""
报告输出：版本化的 JSON，键顺序固定，同样的输入产生逐字节相同的文件
"""

import json
import logging
from fractions import Fraction

import numpy as np

from src.core.check import FAIL, PASS, SKIP
from src.core.settings import REPORT_SCHEMA

logger = logging.getLogger(__name__)


def _default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (set, frozenset, tuple)):
        return sorted(value) if isinstance(value, (set, frozenset)) else list(value)
    raise TypeError(f"无法序列化 {type(value).__name__}")


def build_report(reports, config=None, script=None):
    """报告列表 -> 顶层 JSON 对象"""
    reports = sorted(reports, key=lambda r: r.id)
    summary = {status: sum(r.status == status for r in reports) for status in (PASS, FAIL, SKIP)}
    return {
        'schema': REPORT_SCHEMA,
        'script': script,
        'config': config.to_dict() if config is not None else None,
        'summary': summary,
        'reports': [r.to_dict() for r in reports],
    }


def report_json(reports, config=None, script=None):
    return json.dumps(build_report(reports, config, script), sort_keys=True, indent=2, ensure_ascii=False,
                      default=_default) + '\n'


def write_json(path, reports, config=None, script=None):
    text = report_json(reports, config, script)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info(f"Wrote {len(reports)} report(s) to {path}")
    return text


def validate_report(data):
    """检查报告对象是否符合 nccw-report/1 的结构，返回问题列表（空列表表示合法）"""
    problems = []
    if data.get('schema') != REPORT_SCHEMA:
        problems.append(f"schema 应为 {REPORT_SCHEMA}")
    for key in ('summary', 'reports'):
        if key not in data:
            problems.append(f"缺少 {key}")
    required = {'id': str, 'kind': str, 'status': str, 'max_residual': (int, float), 'tolerance': (int, float)}
    for i, r in enumerate(data.get('reports', [])):
        for key, typ in required.items():
            if not isinstance(r.get(key), typ):
                problems.append(f"reports[{i}].{key} 类型不对")
        if r.get('status') not in (PASS, FAIL, SKIP):
            problems.append(f"reports[{i}].status 非法: {r.get('status')}")
        if r.get('status') == FAIL and not r.get('witness'):
            problems.append(f"reports[{i}] 失败但没有 witness")
        if 'seed' in r and r['seed'] is not None and not isinstance(r['seed'], int):
            problems.append(f"reports[{i}].seed 必须是整数或 null")
    ids = [r.get('id') for r in data.get('reports', [])]
    if ids != sorted(ids):
        problems.append("reports 没有按 id 排序")
    return problems
