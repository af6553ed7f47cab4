"""
工作台统一异常
所有库函数的结构性错误都从 NccwError 派生（它本身是 ValueError）
"""


class NccwError(ValueError):
    """工作台所有错误的基类"""


class StructureError(NccwError):
    """表达式结构错误：定义域/值域不匹配、树形不合法等"""


class DimensionBoundError(NccwError):
    """立方体/球面维数超过配置上限"""

    def __init__(self, n, bound, hint=None):
        message = f"维数 n={n} 超过上限 {bound}"
        if hint:
            message += f"；{hint}"
        super().__init__(message)
        self.n = n
        self.bound = bound


class OffGridError(NccwError):
    """取值点不在当前网格上"""

    def __init__(self, point, admissible):
        admissible = [str(p) for p in admissible]
        super().__init__(f"点 {point} 不在网格上，可用的点: {', '.join(admissible)}")
        self.point = point
        self.admissible = admissible


class UnsupportedNodeError(NccwError):
    """当前操作不支持的表达式节点"""


class NotABlockIdealError(NccwError):
    """给定的包含映射不是块理想的包含"""


class ResolutionError(NccwError):
    """分辨率不合法或粗细网格不兼容"""


class ParseError(NccwError):
    """DSL 解析错误，带行列号和期望的记号集合"""

    def __init__(self, msg, line, col, expected=()):
        self.expected = tuple(sorted(set(expected)))
        text = msg
        if self.expected:
            text += f"，期望: {', '.join(self.expected)}"
        super().__init__(f"{text} (Ln: {line}, Col: {col})")
        self.msg = msg
        self.line = line
        self.col = col
