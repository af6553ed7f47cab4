"""
执行解析后的脚本：按顺序构造声明、运行命令、汇总 CheckReport

命令里抛出的库错误记为 fail 报告，不会中断整个脚本。
"""

import logging
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from src.core.check import (FAIL, SKIP, PASS, CheckReport, Homotopy, NDRData, PullbackSquare, check_exact_row,
                            check_ndr_pair, check_pullback_universal, check_pushout_universal, check_star_hom,
                            pullback_square, pushout_square, reports_frame, status_counts)
from src.core.discretize import discretize_algebra, discretize_morphism
from src.core.errors import NccwError, StructureError, UnsupportedNodeError
from src.core.expr import (GRID_KINDS, BlockMap, BoundaryRestrict, CircleRotation, ConstantEmbed, Cylinder, DirectSum,
                           Evaluation, FiniteDim, Identity, IntervalTensor, MappingCone,
                           Pair, ProjectionFirst, ProjectionSecond, Pullback, SuspendedMorphism,
                           UserNamed, Winding, Zero, ZeroAlgebra, ZeroExtend, apply_functor, check_bounds, compose,
                           linear_dim, render)
from src.core.nccw import NCCWComplex, attach_stage, cellular_approximate, stage_table, validate_complex, \
    validate_mapping_constructions
from src.core.puppe import chain_certificates, cone_split_equivalence, cyl_retraction, puppe_chain
from src.core.settings import derive_seed, load_config
from src.utils.report_writer import write_json
from src.utils.visualize import chain_to_dot, complex_to_dot, write_dot

logger = logging.getLogger(__name__)

_FUNCTOR_NAMES = {'I': 'interval', 'I0': 'opencube', 'Sph': 'sphere'}


@dataclass
class RunResult:
    reports: list = field(default_factory=list)
    diagrams: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [r for r in self.reports if r.status == FAIL]

    @property
    def exit_code(self):
        return 1 if self.failed else 0

    def summary(self):
        return status_counts(self.reports)

    def frame(self):
        return reports_frame(self.reports)


def uses_grid(expr):
    """表达式树里是否出现网格代数（决定是否需要逐个分辨率检查）"""
    if isinstance(expr, GRID_KINDS + (Cylinder, MappingCone)):
        return True
    if is_dataclass(expr) and not isinstance(expr, type):
        return any(uses_grid(getattr(expr, f.name)) for f in fields(expr))
    if isinstance(expr, tuple):
        return any(uses_grid(x) for x in expr)
    return False


def _complex_value(x):
    if isinstance(x, tuple):
        return complex(0, x[1])
    return complex(x)


class ScriptRunner:
    """一次运行的环境：名字表、已构造的复形和输出"""

    def __init__(self, config=None):
        self.config = config or load_config()
        self.algebras = {}
        self.morphisms = {}
        self.complexes = {}
        self.maps = {}
        self.result = RunResult()

    # ------------------------------------------------------------ 构造

    def algebra(self, node):
        op, args = node.op, node.args
        if op == 'finite':
            return FiniteDim(args)
        if op == 'zero':
            return ZeroAlgebra()
        if op == 'ref':
            return self.algebras[args[0]]
        if op == 'S':
            n, inner = args
            out = self.algebra(inner)
            for _ in range(n):
                out = apply_functor('suspension', out)
            return out
        if op in _FUNCTOR_NAMES:
            n, inner = args
            return apply_functor(_FUNCTOR_NAMES[op], self.algebra(inner), n, self.config.max_dim)
        if op == 'Cone':
            return apply_functor('cone', self.algebra(args[0]))
        if op == 'MCone':
            return MappingCone(self.morphisms[args[0]])
        if op == 'Cyl':
            return Cylinder(self.morphisms[args[0]])
        if op == 'dsum':
            return DirectSum(self.algebra(args[0]), self.algebra(args[1]))
        if op == 'PB':
            return Pullback(self.morphisms[args[0]], self.morphisms[args[1]])
        raise StructureError(f"未知的代数节点 {op}")

    def morphism(self, node, source, target):
        op, args = node.op, node.args
        if op == 'id':
            return Identity(source)
        if op == 'zero':
            return Zero(source, target)
        if op == 'pr1':
            return ProjectionFirst(source)
        if op == 'pr2':
            return ProjectionSecond(source)
        if op == 'const':
            return ConstantEmbed(target)
        if op == 'restrict':
            if not isinstance(source, IntervalTensor):
                raise StructureError(f"restrict 的定义域必须是 C(I^n)⊗F: {render(source)}")
            return BoundaryRestrict(source.n, source.base)
        if op == 'extend':
            return ZeroExtend(source, target)
        if op == 'ev':
            return Evaluation(args[0], source)
        if op == 'rotate':
            return CircleRotation(source, args[0])
        if op == 'block':
            mult, unital, windings = args
            winds = tuple(None if w is None else Winding(tuple(tuple(_complex_value(x) for x in row)
                                                                for row in w[0]), w[1]) for w in windings)
            mult = tuple(tuple(int(x) for x in row) for row in mult)
            return BlockMap(source, target, mult, unital, winds)
        if op == 'compose':
            return compose(*[self.morphisms[name] for name in args])
        if op == 'pair':
            return Pair(target, self.morphisms[args[0]], self.morphisms[args[1]])
        if op == 'S':
            return SuspendedMorphism(self.morphisms[args[0]])
        if op == 'ref':
            return self.morphisms[args[0]]
        raise StructureError(f"未知的态射节点 {op}")

    def _typed_morphism(self, name, body, source, target):
        m = self.morphism(body, source, target)
        if m.domain != source or m.codomain != target:
            raise StructureError(f"{name} 声明为 {render(source)} -> {render(target)}，"
                                 f"实际为 {render(m.domain)} -> {render(m.codomain)}")
        return UserNamed(name, m)

    # ------------------------------------------------------------ 语句

    def _algebra(self, s):
        a = self.algebra(s.get('body'))
        check_bounds(a, self.config.max_dim)
        self.algebras[s.name] = a

    _cell = _algebra

    def _morphism(self, s):
        source, target = self.algebra(s.get('source')), self.algebra(s.get('target'))
        check_bounds(source, self.config.max_dim)
        check_bounds(target, self.config.max_dim)
        self.morphisms[s.name] = self._typed_morphism(s.name, s.get('body'), source, target)

    def _stage(self, s):
        previous = s.get('previous')
        if previous in self.complexes:
            X = self.complexes[previous]
        else:
            X = NCCWComplex.base(self.algebras[previous], previous)
        cell = s.get('cell')
        if s.get('cell_body') is not None:
            self.algebras[cell] = self.algebra(s.get('cell_body'))
        F = self.algebras[cell]
        sigma = self.morphisms[s.get('via')] if s.get('via') else None
        X = attach_stage(X, F, s.get('dim'), sigma, s.name, cell, self.config.max_dim)
        self.complexes[s.name] = X
        self.algebras[s.name] = X.top.algebra

    def _map(self, s):
        X, Y = self.complexes[s.get('source')], self.complexes[s.get('target')]
        m = self._typed_morphism(s.name, s.get('body'), X.top.algebra, Y.top.algebra)
        self.morphisms[s.name] = m
        self.maps[s.name] = (X, Y, m)

    def _resolutions(self, *exprs):
        resolutions = sorted(set(self.config.resolutions))
        if not any(uses_grid(e) for e in exprs):
            return resolutions[:1]
        return resolutions

    def _seed(self, check_id):
        return derive_seed(self.config.seed, check_id)

    def _discretize(self, s):
        a = self.algebra(s.get('body'))
        label = render(a)
        out = []
        for N in self._resolutions(a):
            cid = f"discretize/{label}/N{N}"
            actual = discretize_algebra(a, N).dim
            try:
                predicted = linear_dim(a, N)
            except UnsupportedNodeError as e:
                out.append(CheckReport(cid, 'dim', SKIP, 0.0, 0.0, None, {'reason': str(e), 'actual': int(actual)}))
                continue
            ok = predicted == actual
            out.append(CheckReport(cid, 'dim', PASS if ok else FAIL, abs(predicted - actual), 0.0, None,
                                   {'predicted': int(predicted), 'actual': int(actual)}))
        return out

    def _check(self, s):
        cfg = self.config
        kind, args = s.name, s.get('args')
        out = []
        if kind == 'complex':
            X = self.complexes[args[0]]
            out.extend(validate_complex(X, cfg.resolutions, cfg.tolerance, cfg.seed, f"complex/{args[0]}"))
            self.result.tables[args[0]] = stage_table(X, cfg.resolutions)
            return out
        if kind == 'ndr':
            B = self.algebras[args[0]]
            u, phi = self.morphisms[s.get('u')], self.morphisms[s.get('phi')]
            for N in self._resolutions(B, u, phi):
                ndr = NDRData(discretize_algebra(B, N), list(s.get('ideal')), discretize_morphism(u, N),
                              Homotopy.from_expr(phi, N))
                out.append(check_ndr_pair(ndr, cfg.tolerance, f"ndr/{args[0]}/{s.get('u')}/N{N}"))
            return out
        if kind == 'pullback' and len(args) == 5:
            X = self.algebras[args[0]]
            maps = [self.morphisms[name] for name in args[1:]]
            for N in self._resolutions(X, *maps):
                cid = f"pullback/{args[0]}/N{N}"
                gamma, delta, alpha, beta = (discretize_morphism(m, N) for m in maps)
                square = PullbackSquare(discretize_algebra(X, N), gamma, delta, alpha, beta)
                out.append(check_pullback_universal(square, cfg.trials, self._seed(cid), cfg.tolerance, cid,
                                                    cfg.rank_rtol))
            return out
        maps = [self.morphisms[name] for name in args]
        label = '/'.join(args)
        if kind == 'inherit':
            return validate_mapping_constructions(maps[0], cfg.resolutions, cfg.tolerance, cfg.seed, cfg.trials,
                                                  f"inherit/{label}")
        for N in self._resolutions(*maps):
            cid = f"{kind}/{label}/N{N}"
            if kind == 'star':
                out.append(check_star_hom(discretize_morphism(maps[0], N), cfg.tolerance, cid, self._seed(cid)))
            elif kind == 'pullback':
                square = pullback_square(maps[0], maps[1], N)
                out.append(check_pullback_universal(square, cfg.trials, self._seed(cid), cfg.tolerance, cid,
                                                    cfg.rank_rtol))
            elif kind == 'pushout':
                square = pushout_square(*maps, N)
                out.append(check_pushout_universal(square, cfg.trials, self._seed(cid), cfg.tolerance, cid,
                                                   cfg.rank_rtol))
            elif kind == 'row':
                out.append(check_exact_row(discretize_morphism(maps[0], N), discretize_morphism(maps[1], N), cid,
                                           cfg.tolerance, cfg.rank_rtol))
            elif kind == 'cylinder':
                out.extend(cyl_retraction(maps[0], N, cfg.tolerance, cid).reports)
            elif kind == 'conesplit':
                out.extend(cone_split_equivalence(maps[0], N, cfg.tolerance, cid, cfg.rank_rtol).reports)
        return out

    def _puppe(self, s):
        phi = self.morphisms[s.name]
        chain = puppe_chain(phi, s.get('terms'))
        self.result.diagrams[f"puppe_{s.name}"] = chain_to_dot(chain, f"puppe_{s.name}")
        out = []
        for N in self.config.resolutions:
            out.extend(chain_certificates(chain, N, self.config.tolerance, f"puppe/{s.name}/N{N}"))
        return out

    def _approx(self, s):
        X, Y, m = self.maps[s.name]
        out = []
        for N in self.config.resolutions:
            cid = f"approx/{s.name}/N{N}"
            f = discretize_morphism(m, N)
            _, _, certificates = cellular_approximate(X, Y, f, N, self.config.tolerance, cid, m)
            out.extend(certificates)
        return out

    def _emit(self, s):
        if s.name in self.complexes:
            self.result.diagrams[f"complex_{s.name}"] = complex_to_dot(self.complexes[s.name], f"complex_{s.name}")
        else:
            chain = puppe_chain(self.morphisms[s.name], 8)
            self.result.diagrams[f"puppe_{s.name}"] = chain_to_dot(chain, f"puppe_{s.name}")

    # ------------------------------------------------------------ 运行

    def execute(self, s):
        handler = getattr(self, f"_{s.keyword}")
        try:
            reports = handler(s)
        except (NccwError, ValueError, KeyError, np.linalg.LinAlgError) as e:
            logger.error(f"Statement at line {s.line} ({s.keyword} {s.name}) failed: {e}")
            rid = f"error/{s.line:04d}/{s.col:03d}/{s.keyword}"
            reports = [CheckReport(rid, 'error', FAIL, 0.0, 0.0, None,
                                   {'error': type(e).__name__, 'message': str(e), 'line': s.line, 'col': s.col})]
        self.result.reports.extend(reports or [])

    def run(self, script):
        for s in script.statements:
            self.execute(s)
        self.result.reports.sort(key=lambda r: r.id)
        counts = {st: sum(r.status == st for r in self.result.reports) for st in (PASS, FAIL, SKIP)}
        logger.info(f"Run finished: {len(self.result.reports)} reports, {counts}")
        return self.result


def run(script, config=None):
    """执行脚本，返回 RunResult（exit_code 为 0 当且仅当没有 fail）"""
    return ScriptRunner(config).run(script)


def emit_outputs(result, config=None, script=None, json_path=None, dot_path=None):
    """写出报告 JSON 和 DOT 图，返回实际写出的路径"""
    written = []
    if json_path:
        write_json(json_path, result.reports, config, script)
        written.append(json_path)
    if dot_path:
        write_dot(dot_path, result.diagrams)
        written.append(dot_path)
    return written
