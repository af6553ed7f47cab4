"""
.nccw 脚本的解析器和打印器

单遍、确定性的文法；每条语句以 ';' 结束，'#' 到行尾是注释。
解析只做词法、语法和名字解析，表达式在运行时才构造。
"""

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction

from src.core.errors import ParseError

logger = logging.getLogger(__name__)

KEYWORDS = ('algebra', 'cell', 'morphism', 'stage', 'map', 'discretize', 'check', 'puppe', 'approx', 'emit')
CHECK_KINDS = ('star', 'pullback', 'pushout', 'row', 'complex', 'inherit', 'cylinder', 'conesplit', 'ndr')
GRID_FUNCTORS = ('I', 'I0', 'Sph', 'S')
MORPHISM_ATOMS = ('id', 'zero', 'pr1', 'pr2', 'const', 'restrict', 'extend')

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+(?:/\d+|\.\d+(?:[eE][-+]?\d+)?)?i?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>->|[;=:()\[\],+^\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"无法识别的字符 {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == 'newline':
            line, start = line + 1, m.end()
        elif kind not in ('ws', 'comment'):
            tokens.append(Token(kind, m.group(), line, m.start() - start + 1))
        pos = m.end()
    tokens.append(Token('eof', '', line, pos - start + 1))
    return tokens


# ---------------------------------------------------------------- 语法树

@dataclass(frozen=True)
class Node:
    """表达式语法树：op 加参数，参数是 Node、名字、数字或元组"""
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class Statement:
    keyword: str
    name: str
    fields: tuple = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def get(self, key, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class Script:
    statements: tuple = ()

    def __len__(self):
        return len(self.statements)

    def declarations(self):
        return [s for s in self.statements if s.keyword in ('algebra', 'cell', 'morphism', 'stage', 'map')]

    def commands(self):
        return [s for s in self.statements if s.keyword not in ('algebra', 'cell', 'morphism', 'stage', 'map')]


# ---------------------------------------------------------------- 解析

class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.pos = 0
        self.fuel = 64 * len(self.tokens) + 256
        # 名字 -> 种类：algebra / morphism / stage / map
        self.names = {}

    # 记号

    def _burn(self):
        self.fuel -= 1
        if self.fuel < 0:
            tok = self.peek()
            raise ParseError("解析步数超出上限", tok.line, tok.col)

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        self._burn()
        tok = self.tokens[self.pos]
        if tok.kind != 'eof':
            self.pos += 1
        return tok

    def at(self, text):
        return self.peek().text == text and self.peek().kind != 'eof'

    def expect(self, *texts):
        tok = self.peek()
        if tok.text in texts and tok.kind != 'eof':
            return self.advance()
        raise ParseError(f"意外的记号 {tok.text or 'EOF'!r}", tok.line, tok.col, texts)

    def expect_kind(self, kind, what):
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"意外的记号 {tok.text or 'EOF'!r}", tok.line, tok.col, (what,))
        return self.advance()

    def ident(self):
        return self.expect_kind('ident', '<name>').text

    def integer(self):
        tok = self.peek()
        negative = False
        if tok.text == '-':
            self.advance()
            negative = True
        tok = self.expect_kind('number', '<integer>')
        if not tok.text.isdigit():
            raise ParseError(f"需要整数，得到 {tok.text}", tok.line, tok.col, ('<integer>',))
        return -int(tok.text) if negative else int(tok.text)

    def number(self):
        negative = False
        if self.at('-'):
            self.advance()
            negative = True
        tok = self.expect_kind('number', '<number>')
        text = tok.text
        imaginary = text.endswith('i')
        text = text[:-1] if imaginary else text
        value = Fraction(text)
        value = -value if negative else value
        return ('i', value) if imaginary else value

    # 名字

    def declare(self, name, kind, tok):
        if name in self.names:
            raise ParseError(f"名字 {name} 重复定义", tok.line, tok.col)
        self.names[name] = kind

    def resolve(self, name, kinds, tok):
        kind = self.names.get(name)
        if kind is None:
            raise ParseError(f"名字 {name} 未定义", tok.line, tok.col)
        if kind not in kinds:
            raise ParseError(f"{name} 是 {kind}，这里需要 {'/'.join(kinds)}", tok.line, tok.col)
        return kind

    # 代数表达式

    def algebra(self):
        first = self.algebra_term()
        if not self.at('+'):
            return first
        terms = [first]
        while self.at('+'):
            self.advance()
            terms.append(self.algebra_term())
        if any(t.op != 'finite' for t in terms):
            tok = self.peek()
            raise ParseError("'+' 只能连接矩阵块 Mn，直和请用 dsum(X, Y)", tok.line, tok.col)
        return Node('finite', tuple(n for t in terms for n in t.args))

    def algebra_term(self):
        self._burn()
        tok = self.peek()
        if tok.kind == 'number' and tok.text == '0':
            self.advance()
            return Node('zero')
        name = self.expect_kind('ident', '<algebra>').text
        if re.fullmatch(r'M[1-9]\d*', name) and name not in self.names:
            return Node('finite', (int(name[1:]),))
        if name in GRID_FUNCTORS and (self.at('^') or self.at('(')):
            n = 1
            if self.at('^'):
                self.advance()
                n = self.integer()
            self.expect('(')
            inner = self.algebra()
            self.expect(')')
            return Node(name, (n, inner))
        if name == 'Cone' and self.at('('):
            self.advance()
            arg_tok = self.peek()
            if arg_tok.kind == 'ident' and self.names.get(arg_tok.text) in ('morphism', 'map'):
                self.advance()
                self.expect(')')
                return Node('MCone', (arg_tok.text,))
            inner = self.algebra()
            self.expect(')')
            return Node('Cone', (inner,))
        if name == 'Cyl' and self.at('('):
            self.advance()
            arg = self.peek()
            mname = self.ident()
            self.resolve(mname, ('morphism', 'map'), arg)
            self.expect(')')
            return Node('Cyl', (mname,))
        if name == 'dsum' and self.at('('):
            self.advance()
            left = self.algebra()
            self.expect(',')
            right = self.algebra()
            self.expect(')')
            return Node('dsum', (left, right))
        if name == 'PB' and self.at('('):
            self.advance()
            a_tok = self.peek()
            alpha = self.ident()
            self.resolve(alpha, ('morphism', 'map'), a_tok)
            self.expect(',')
            b_tok = self.peek()
            beta = self.ident()
            self.resolve(beta, ('morphism', 'map'), b_tok)
            self.expect(')')
            return Node('PB', (alpha, beta))
        self.resolve(name, ('algebra', 'stage'), tok)
        return Node('ref', (name,))

    # 态射表达式

    def matrix(self):
        self.expect('[')
        rows = []
        while True:
            self._burn()
            self.expect('[')
            row = []
            if not self.at(']'):
                row.append(self.number())
                while self.at(','):
                    self.advance()
                    row.append(self.number())
            self.expect(']')
            rows.append(tuple(row))
            if not self.at(','):
                break
            self.advance()
        self.expect(']')
        return tuple(rows)

    def name_list(self):
        self.expect('(')
        names = []
        while True:
            tok = self.peek()
            name = self.ident()
            self.resolve(name, ('morphism', 'map'), tok)
            names.append(name)
            if not self.at(','):
                break
            self.advance()
        self.expect(')')
        return tuple(names)

    def morphism(self):
        self._burn()
        tok = self.peek()
        name = self.expect_kind('ident', '<morphism>').text
        if name in MORPHISM_ATOMS:
            return Node(name)
        if name in ('ev', 'rotate'):
            self.expect('(')
            t = self.number()
            self.expect(')')
            if isinstance(t, tuple):
                raise ParseError("参数必须是实数", tok.line, tok.col)
            return Node(name, (t,))
        if name == 'block':
            mult = self.matrix()
            unital = False
            windings = []
            while self.at('unital') or self.at('wind') or self.at('nowind'):
                self._burn()
                word = self.advance().text
                if word == 'unital':
                    unital = True
                elif word == 'nowind':
                    windings.append(None)
                else:
                    self.expect('(')
                    K = self.matrix()
                    self.expect(',')
                    m = self.integer()
                    self.expect(')')
                    windings.append((K, m))
            return Node('block', (mult, unital, tuple(windings)))
        if name in ('compose', 'pair'):
            args = self.name_list()
            if name == 'pair' and len(args) != 2:
                raise ParseError("pair 需要两个分量", tok.line, tok.col)
            return Node(name, args)
        if name == 'S' and self.at('('):
            args = self.name_list()
            if len(args) != 1:
                raise ParseError("S(...) 只接受一个态射", tok.line, tok.col)
            return Node('S', args)
        self.resolve(name, ('morphism', 'map'), tok)
        return Node('ref', (name,))

    # 语句

    def statement(self):
        tok = self.peek()
        keyword = self.expect(*KEYWORDS).text
        handler = getattr(self, f"_{keyword}")
        stmt = handler(tok)
        self.expect(';')
        return stmt

    def _algebra(self, tok):
        name_tok = self.peek()
        name = self.ident()
        self.expect('=')
        body = self.algebra()
        self.declare(name, 'algebra', name_tok)
        return Statement('algebra', name, (('body', body),), tok.line, tok.col)

    def _cell(self, tok):
        name_tok = self.peek()
        name = self.ident()
        self.expect('=')
        body = self.algebra()
        if body.op not in ('finite', 'zero'):
            raise ParseError("胞腔代数必须是有限维代数 Mn + ... 或 0", name_tok.line, name_tok.col)
        self.declare(name, 'algebra', name_tok)
        return Statement('cell', name, (('body', body),), tok.line, tok.col)

    def _typed(self):
        self.expect(':')
        source = self.algebra()
        self.expect('->')
        target = self.algebra()
        self.expect('=')
        return source, target, self.morphism()

    def _morphism(self, tok):
        name_tok = self.peek()
        name = self.ident()
        source, target, body = self._typed()
        self.declare(name, 'morphism', name_tok)
        return Statement('morphism', name, (('source', source), ('target', target), ('body', body)),
                         tok.line, tok.col)

    def _map(self, tok):
        name_tok = self.peek()
        name = self.ident()
        self.expect(':')
        src_tok = self.peek()
        source = self.ident()
        self.resolve(source, ('stage',), src_tok)
        self.expect('->')
        tgt_tok = self.peek()
        target = self.ident()
        self.resolve(target, ('stage',), tgt_tok)
        self.expect('=')
        body = self.morphism()
        self.declare(name, 'map', name_tok)
        return Statement('map', name, (('source', source), ('target', target), ('body', body)), tok.line, tok.col)

    def _stage(self, tok):
        name_tok = self.peek()
        name = self.ident()
        self.expect('=')
        self.expect('attach')
        self.expect('(')
        prev_tok = self.peek()
        previous = self.ident()
        self.resolve(previous, ('algebra', 'stage'), prev_tok)
        self.expect(',')
        self.expect('cell')
        cell_tok = self.peek()
        cell = self.ident()
        cell_body = None
        if self.at('='):
            self.advance()
            cell_body = self.algebra()
            if cell_body.op not in ('finite', 'zero'):
                raise ParseError("胞腔代数必须是有限维代数 Mn + ... 或 0", cell_tok.line, cell_tok.col)
            self.declare(cell, 'algebra', cell_tok)
        else:
            self.resolve(cell, ('algebra',), cell_tok)
        self.expect(',')
        self.expect('dim')
        self.expect('=')
        dim = self.integer()
        via = None
        if self.at(','):
            self.advance()
            self.expect('via')
            self.expect('=')
            via_tok = self.peek()
            via = self.ident()
            self.resolve(via, ('morphism',), via_tok)
        self.expect(')')
        self.declare(name, 'stage', name_tok)
        return Statement('stage', name, (('previous', previous), ('cell', cell), ('cell_body', cell_body),
                                         ('dim', dim), ('via', via)), tok.line, tok.col)

    def _discretize(self, tok):
        return Statement('discretize', '', (('body', self.algebra()),), tok.line, tok.col)

    def _check(self, tok):
        kind = self.expect(*CHECK_KINDS).text
        self.expect('(')
        if kind == 'complex':
            arg_tok = self.peek()
            name = self.ident()
            self.resolve(name, ('stage',), arg_tok)
            fields = (('args', (name,)),)
        elif kind == 'ndr':
            b_tok = self.peek()
            algebra = self.ident()
            self.resolve(algebra, ('algebra', 'stage'), b_tok)
            options = {}
            while self.at(','):
                self.advance()
                key = self.expect('ideal', 'u', 'phi').text
                self.expect('=')
                if key == 'ideal':
                    self.expect('[')
                    blocks = []
                    if not self.at(']'):
                        blocks.append(self.integer())
                        while self.at(','):
                            self.advance()
                            blocks.append(self.integer())
                    self.expect(']')
                    options[key] = tuple(blocks)
                else:
                    m_tok = self.peek()
                    options[key] = self.ident()
                    self.resolve(options[key], ('morphism',), m_tok)
            missing = [k for k in ('ideal', 'u', 'phi') if k not in options]
            if missing:
                raise ParseError("ndr 缺少参数", tok.line, tok.col, missing)
            fields = (('args', (algebra,)), ('ideal', options['ideal']), ('u', options['u']),
                      ('phi', options['phi']))
        else:
            names = []
            first = True
            while first or self.at(','):
                if not first:
                    self.advance()
                first = False
                arg_tok = self.peek()
                arg = self.ident()
                # pullback(X, γ, δ, α, β) 的第一个参数是候选代数
                if kind == 'pullback' and not names and self.names.get(arg) in ('algebra', 'stage'):
                    kinds = ('algebra', 'stage')
                else:
                    kinds = ('morphism', 'map')
                self.resolve(arg, kinds, arg_tok)
                names.append(arg)
            fields = (('args', tuple(names)),)
        self.expect(')')
        return Statement('check', kind, fields, tok.line, tok.col)

    def _puppe(self, tok):
        m_tok = self.peek()
        phi = self.ident()
        self.resolve(phi, ('morphism', 'map'), m_tok)
        terms = 8
        if self.at('terms'):
            self.advance()
            self.expect('=')
            terms = self.integer()
        return Statement('puppe', phi, (('terms', terms),), tok.line, tok.col)

    def _approx(self, tok):
        m_tok = self.peek()
        name = self.ident()
        self.resolve(name, ('map',), m_tok)
        return Statement('approx', name, (), tok.line, tok.col)

    def _emit(self, tok):
        fmt = self.expect('dot').text
        n_tok = self.peek()
        name = self.ident()
        self.resolve(name, ('stage', 'morphism', 'map'), n_tok)
        return Statement('emit', name, (('format', fmt),), tok.line, tok.col)

    def script(self):
        statements = []
        while self.peek().kind != 'eof':
            statements.append(self.statement())
        return Script(tuple(statements))


def parse_dsl(text):
    """文本 -> Script；所有错误都是带行列号的 ParseError"""
    script = _Parser(text).script()
    logger.debug(f"Parsed {len(script)} statements")
    return script


# ---------------------------------------------------------------- 打印

def _number(x):
    if isinstance(x, tuple):
        return f"{_number(x[1])}i"
    return str(x)


def _matrix(rows):
    return '[' + ', '.join('[' + ', '.join(_number(x) for x in row) + ']' for row in rows) + ']'


def print_algebra(node):
    op, args = node.op, node.args
    if op == 'finite':
        return ' + '.join(f"M{n}" for n in args)
    if op == 'zero':
        return '0'
    if op == 'ref':
        return args[0]
    if op in GRID_FUNCTORS:
        n, inner = args
        return f"{op}^{n}({print_algebra(inner)})"
    if op == 'Cone':
        return f"Cone({print_algebra(args[0])})"
    if op in ('MCone', 'Cyl'):
        return f"{'Cone' if op == 'MCone' else 'Cyl'}({args[0]})"
    if op == 'dsum':
        return f"dsum({print_algebra(args[0])}, {print_algebra(args[1])})"
    if op == 'PB':
        return f"PB({args[0]}, {args[1]})"
    raise ValueError(f"未知的代数节点 {op}")


def print_morphism(node):
    op, args = node.op, node.args
    if op in MORPHISM_ATOMS:
        return op
    if op in ('ev', 'rotate'):
        return f"{op}({args[0]})"
    if op == 'block':
        mult, unital, windings = args
        out = f"block {_matrix(mult)}"
        if unital:
            out += ' unital'
        for w in windings:
            out += ' nowind' if w is None else f" wind({_matrix(w[0])}, {w[1]})"
        return out
    if op in ('compose', 'pair', 'S'):
        return f"{op}({', '.join(args)})"
    if op == 'ref':
        return args[0]
    raise ValueError(f"未知的态射节点 {op}")


def print_statement(s):
    kw = s.keyword
    if kw in ('algebra', 'cell'):
        return f"{kw} {s.name} = {print_algebra(s.get('body'))};"
    if kw == 'morphism':
        return (f"morphism {s.name} : {print_algebra(s.get('source'))} -> {print_algebra(s.get('target'))} = "
                f"{print_morphism(s.get('body'))};")
    if kw == 'map':
        return f"map {s.name} : {s.get('source')} -> {s.get('target')} = {print_morphism(s.get('body'))};"
    if kw == 'stage':
        cell = s.get('cell')
        if s.get('cell_body') is not None:
            cell = f"{cell}={print_algebra(s.get('cell_body'))}"
        via = f", via={s.get('via')}" if s.get('via') else ''
        return f"stage {s.name} = attach({s.get('previous')}, cell {cell}, dim={s.get('dim')}{via});"
    if kw == 'discretize':
        return f"discretize {print_algebra(s.get('body'))};"
    if kw == 'check':
        if s.name == 'ndr':
            ideal = ', '.join(str(j) for j in s.get('ideal'))
            return f"check ndr({s.get('args')[0]}, ideal=[{ideal}], u={s.get('u')}, phi={s.get('phi')});"
        return f"check {s.name}({', '.join(s.get('args'))});"
    if kw == 'puppe':
        return f"puppe {s.name} terms={s.get('terms')};"
    if kw == 'approx':
        return f"approx {s.name};"
    if kw == 'emit':
        return f"emit {s.get('format')} {s.name};"
    raise ValueError(f"未知语句 {kw}")


def print_script(script):
    """Script -> 规范文本，parse_dsl(print_script(s)) == s"""
    return '\n'.join(print_statement(s) for s in script.statements) + ('\n' if script.statements else '')
