"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` that the CLI copies
into its reports.
"""


class NakanoError(Exception):
    code = "E_INTERNAL"

    def to_dict(self):
        return {"code": self.code, "type": type(self).__name__, "message": str(self)}


class ParseError(NakanoError, ValueError):
    code = "E_PARSE"

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset

    def to_dict(self):
        d = super().to_dict()
        d["offset"] = self.offset
        return d


class ExprVarError(NakanoError, KeyError):
    code = "E_EXPR_VAR"

    def __init__(self, names):
        self.names = sorted(names)
        super().__init__("unbound or unknown variable(s): " + ", ".join(self.names))

    def __str__(self):
        return self.args[0]


class EvalError(NakanoError, ArithmeticError):
    code = "E_EVAL"

    def __init__(self, message, node=None):
        if node is not None:
            message = f"{message} at node {tuple(int(i) for i in node)}"
        super().__init__(message)
        self.node = node


class GridError(NakanoError, ValueError):
    code = "E_GRID"


class AxisError(NakanoError, IndexError):
    code = "E_AXIS"


class ShapeError(NakanoError, ValueError):
    code = "E_SHAPE"


class _NodeError(NakanoError):
    def __init__(self, message, node=None, value=None):
        if node is not None:
            message = f"{message} at node {tuple(int(i) for i in node)}"
        if value is not None:
            message = f"{message} (value {value:.6g})"
        super().__init__(message)
        self.node = None if node is None else tuple(int(i) for i in node)
        self.value = value

    def to_dict(self):
        d = super().to_dict()
        d["node"] = None if self.node is None else list(self.node)
        d["value"] = self.value
        return d


class SymmetryError(_NodeError, ValueError):
    code = "E_SYMMETRY"


class NotPositiveDefinite(_NodeError, ValueError):
    code = "E_NOT_PD"


class HessianNotPD(_NodeError, ValueError):
    code = "E_HESSIAN_NOT_PD"


class GramNotPD(_NodeError, ValueError):
    code = "E_GRAM_NOT_PD"


class SupportError(_NodeError, ValueError):
    code = "E_SUPPORT"


class ClosednessError(NakanoError, ValueError):
    code = "E_CLOSEDNESS"

    def __init__(self, residual, tolerance):
        super().__init__(f"form is not closed: d1 residual {residual:.6g} > {tolerance:.3g}")
        self.residual = residual
        self.tolerance = tolerance

    def to_dict(self):
        d = super().to_dict()
        d.update(residual=self.residual, tolerance=self.tolerance)
        return d


class PathMismatchError(ClosednessError):
    code = "E_PATH_MISMATCH"

    def __init__(self, residual, tolerance):
        NakanoError.__init__(
            self, f"staircase paths disagree by {residual:.6g} > {tolerance:.3g}"
        )
        self.residual = residual
        self.tolerance = tolerance


class MassSingularError(NakanoError, ArithmeticError):
    code = "E_MASS_SINGULAR"


class DomainError(NakanoError, ValueError):
    code = "E_DOMAIN"


class TruncationError(NakanoError, ValueError):
    code = "E_TRUNCATION"

    def __init__(self, mass, threshold):
        super().__init__(
            f"fiber box too small: boundary-collar mass ratio {mass:.3g} > {threshold:.3g}"
        )
        self.mass = mass
        self.threshold = threshold

    def to_dict(self):
        d = super().to_dict()
        d.update(mass=self.mass, threshold=self.threshold)
        return d


class FieldFileError(NakanoError, ValueError):
    code = "E_FIELD_FILE"


class ConfigError(NakanoError, ValueError):
    code = "E_CONFIG"
