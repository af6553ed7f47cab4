"""
图示输出：Puppe 链和 NCCW 复形的 DOT 文本
"""

import logging

from src.core.expr import SphereTensor, IntervalTensor, render

logger = logging.getLogger(__name__)


def _quote(text):
    return '"' + str(text).replace('\\', '\\\\').replace('"', '\\"') + '"'


def chain_to_dot(chain, graph_name='puppe', names=None):
    """
    Puppe 链 -> DOT

    Args:
        chain (PuppeChain): puppe_chain 的结果
        graph_name (str): 图名
        names (dict): 子表达式 -> 显示名

    Returns:
        str: 每项一个节点，φ_i 为 t{i+1} -> t{i} 的带标签边
    """
    lines = [f"digraph {_quote(graph_name)} {{", '  rankdir=RL;']
    for i, label in enumerate(chain.labels(names)):
        lines.append(f"  t{i} [label={_quote(f'A{i} = {label}')}];")
    for i, label in enumerate(chain.map_labels()):
        lines.append(f"  t{i + 1} -> t{i} [label={_quote(label)}];")
    lines.append('}')
    return '\n'.join(lines) + '\n'


def complex_to_dot(complex_, graph_name='complex'):
    """NCCW 复形的逐级拉回图：A_k -> A_{k-1} (π)，A_k -> I^k F_k (ρ)，σ_k 和 ∂"""
    names = complex_.names()
    lines = [f"digraph {_quote(graph_name)} {{", '  rankdir=LR;']
    for st in complex_.stages:
        lines.append(f"  s{st.k} [label={_quote(f'{st.name} = {render(st.algebra, names)}')}, shape=box];")
    for st in complex_.stages[1:]:
        k = st.k
        if not st.attached:
            lines.append(f"  s{k} -> s{k - 1} [label=\"id\"];")
            continue
        cube = render(IntervalTensor(k, st.cell), names)
        sphere = render(SphereTensor(k - 1, st.cell), names)
        lines.append(f"  c{k} [label={_quote(cube)}];")
        lines.append(f"  b{k} [label={_quote(sphere)}];")
        lines.append(f"  s{k} -> s{k - 1} [label=\"π\"];")
        lines.append(f"  s{k} -> c{k} [label={_quote(f'ρ{k}')}];")
        lines.append(f"  c{k} -> b{k} [label=\"∂\"];")
        lines.append(f"  s{k - 1} -> b{k} [label={_quote(f'σ{k}')}];")
    lines.append('}')
    return '\n'.join(lines) + '\n'


def write_dot(path, diagrams):
    """把若干张图按名字顺序写进同一个 .dot 文件"""
    text = '\n'.join(diagrams[name] for name in sorted(diagrams))
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    logger.info(f"Wrote {len(diagrams)} diagram(s) to {path}")
    return text
