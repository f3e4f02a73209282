"""Nonlinear predictors f(x; beta) parsed from expression text.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := log | exp | sqrt | sin | cos | tan

The parsed expression is held as a :mod:`sympy` tree; values, Jacobians and
per-observation Hessians are compiled from exact symbolic derivatives.
"""

from dataclasses import dataclass, field
import logging
import re
from typing import Callable, List, Sequence, Tuple

import numpy as np
import sympy
from sympy.printing.str import StrPrinter

from models.errors import ConfigError, DomainError, ExpressionSyntaxError, UnknownIdentifierError

logger = logging.getLogger(__name__)

FUNCTIONS = {
    "log": sympy.log,
    "exp": sympy.exp,
    "sqrt": sympy.sqrt,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


@dataclass(frozen=True)
class DomainGuard:
    """A subexpression whose argument must stay inside a function domain

    Attributes:
        kind: "log", "sqrt" or "pow"
        argument: sympy expression that is checked
        source: Source text of the guarded subexpression
        strict: True for > 0, False for >= 0
    """
    kind: str
    argument: sympy.Expr
    source: str
    strict: bool


def tokenize(source: str) -> List[Token]:
    """Split expression text into tokens with 1-based positions"""
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(source, pos)
        if not match or match.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExpressionSyntaxError(f"Unexpected character {source[bad]!r}", bad + 1)
        kind = match.lastgroup
        text = match.group(kind)
        tokens.append(Token(kind=kind, text=text, position=match.start(kind) + 1))
        pos = match.end()
    tokens.append(Token(kind="end", text="", position=len(source) + 1))
    return tokens


def identifiers(source: str) -> List[str]:
    """Names used in an expression, excluding functions, in order of first use"""
    seen = []
    for token in tokenize(source):
        if token.kind == "name" and token.text not in FUNCTIONS and token.text not in seen:
            seen.append(token.text)
    return seen


class _Parser:
    """Recursive-descent parser producing sympy expressions and domain guards"""

    def __init__(self, source: str, symbols: dict, parameters: Sequence[str] = ()):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0
        self.symbols = symbols
        self.parameter_symbols = {symbols[name] for name in parameters}
        self.guards: List[DomainGuard] = []

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def _expect(self, text: str):
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise ExpressionSyntaxError(f"Expected '{text}' but found '{found}'", self.current.position)
        return self._advance()

    def _span(self, start: Token) -> str:
        """Source text from the start token up to the last consumed token"""
        last = self.tokens[self.index - 1]
        return self.source[start.position - 1:last.position - 1 + len(last.text)]

    def parse(self) -> sympy.Expr:
        if self.current.kind == "end":
            raise ExpressionSyntaxError("Empty expression", self.current.position)
        expr = self.expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(f"Unexpected token '{self.current.text}'", self.current.position)
        return expr

    def expr(self) -> sympy.Expr:
        result = self.term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            rhs = self.term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def term(self) -> sympy.Expr:
        result = self.unary()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            rhs = self.unary()
            result = result * rhs if op == "*" else result / rhs
        return result

    def unary(self) -> sympy.Expr:
        if self.current.text == "-":
            self._advance()
            return -self.unary()
        return self.power()

    def power(self) -> sympy.Expr:
        start = self.current
        base = self.atom()
        if self.current.text != "^":
            return base
        self._advance()
        exponent = self.unary()
        # a parameter in the exponent differentiates through log(base)
        if exponent.free_symbols & self.parameter_symbols and not (base.is_number and base.is_positive):
            self.guards.append(DomainGuard("pow", base, self._span(start), strict=True))
        return sympy.Pow(base, exponent)

    def atom(self) -> sympy.Expr:
        token = self.current
        if token.kind == "number":
            self._advance()
            if re.fullmatch(r"\d+", token.text):
                return sympy.Integer(int(token.text))
            return sympy.Float(token.text)
        if token.kind == "name":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                argument = self.expr()
                self._expect(")")
                if token.text in ("log", "sqrt"):
                    self.guards.append(
                        DomainGuard(token.text, argument, self._span(token), strict=token.text == "log")
                    )
                return FUNCTIONS[token.text](argument)
            if token.text not in self.symbols:
                raise UnknownIdentifierError(token.text, token.position)
            return self.symbols[token.text]
        if token.text == "(":
            self._advance()
            inner = self.expr()
            self._expect(")")
            return inner
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"Unexpected token '{found}'", token.position)


class _GrammarPrinter(StrPrinter):
    """Prints sympy expressions back in the predictor grammar"""

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")

    def _print_Exp1(self, expr):
        return "exp(1)"


@dataclass(frozen=True)
class PredictorModel:
    """Parsed predictor f(x; beta) with compiled exact derivatives

    Attributes:
        source: Expression text as given
        covariate_names: Ordered covariate names (columns of X)
        parameter_names: Ordered parameter names (entries of beta)
        expr: The sympy expression tree
        guards: Domain constraints collected while parsing
    """
    source: str
    covariate_names: Tuple[str, ...]
    parameter_names: Tuple[str, ...]
    expr: sympy.Expr
    guards: Tuple[DomainGuard, ...] = ()
    _eta_fn: Callable = field(default=None, repr=False, compare=False)
    _grad_fns: Tuple[Callable, ...] = field(default=(), repr=False, compare=False)
    _hess_fns: Tuple[Tuple[int, int, Callable], ...] = field(default=(), repr=False, compare=False)
    _guard_fns: Tuple[Callable, ...] = field(default=(), repr=False, compare=False)
    linear: bool = False

    @property
    def p(self) -> int:
        return len(self.parameter_names)

    @property
    def m(self) -> int:
        return len(self.covariate_names)

    def is_linear(self) -> bool:
        """True when every second derivative in beta vanishes identically"""
        return self.linear

    def unparse(self) -> str:
        """Expression text that parses back to an equivalent model"""
        return _GrammarPrinter().doprint(self.expr)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "covariates": list(self.covariate_names),
            "parameters": list(self.parameter_names),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictorModel":
        return parse(data["source"], data["covariates"], data["parameters"])

    def _arguments(self, X, beta) -> Tuple[list, int]:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.m == 1 else X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.m:
            raise DomainError(f"Covariate matrix must have {self.m} columns, got shape {X.shape}")
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.shape[0] != self.p:
            raise DomainError(f"Parameter vector must have {self.p} entries, got {beta.shape[0]}")
        if not np.all(np.isfinite(beta)):
            raise DomainError(f"Parameter vector must be finite, got {beta.tolist()}")
        return [X[:, j] for j in range(self.m)] + list(beta), X.shape[0]

    def _check_guards(self, args: list, n: int):
        with np.errstate(all="ignore"):
            for guard, fn in zip(self.guards, self._guard_fns):
                value = np.broadcast_to(np.asarray(fn(*args), dtype=float), (n,))
                ok = value > 0 if guard.strict else value >= 0
                if not np.all(ok):
                    row = int(np.flatnonzero(~ok)[0])
                    bound = "positive" if guard.strict else "nonnegative"
                    raise DomainError(
                        f"Argument of {guard.kind} must be {bound} in '{guard.source}' "
                        f"at row {row + 1} (value {value[row]!r})"
                    )

    def _evaluate(self, fn: Callable, args: list, n: int, what: str) -> np.ndarray:
        with np.errstate(all="ignore"):
            value = np.broadcast_to(np.asarray(fn(*args), dtype=float), (n,)).copy()
        if not np.all(np.isfinite(value)):
            row = int(np.flatnonzero(~np.isfinite(value))[0])
            raise DomainError(f"{what} of '{self.source}' is not finite at row {row + 1}")
        return value

    def eval_eta(self, X, beta) -> np.ndarray:
        """Predictor values eta_i = f(x_i; beta)

        Args:
            X: n x m covariate matrix, columns ordered as covariate_names
            beta: p-vector ordered as parameter_names

        Returns:
            n-vector of predictor values

        Raises:
            DomainError: Naming the row and subexpression that left its domain
        """
        args, n = self._arguments(X, beta)
        self._check_guards(args, n)
        return self._evaluate(self._eta_fn, args, n, "Predictor")

    def jacobian(self, X, beta) -> np.ndarray:
        """n x p matrix of exact derivatives d eta_i / d beta_r"""
        args, n = self._arguments(X, beta)
        self._check_guards(args, n)
        columns = [self._evaluate(fn, args, n, "Derivative") for fn in self._grad_fns]
        return np.column_stack(columns) if columns else np.zeros((n, 0))

    def hessians(self, X, beta) -> np.ndarray:
        """n x p x p array of exact second derivatives, symmetric in the last two axes"""
        args, n = self._arguments(X, beta)
        self._check_guards(args, n)
        out = np.zeros((n, self.p, self.p))
        for r, s, fn in self._hess_fns:
            value = self._evaluate(fn, args, n, "Second derivative")
            out[:, r, s] = value
            out[:, s, r] = value
        return out


def parse(source: str, covariates: Sequence[str], parameters: Sequence[str]) -> PredictorModel:
    """Parse a predictor expression

    Args:
        source: Expression text, e.g. "b0 + b1*x1 + x2^b2"
        covariates: Covariate names, in the column order of X
        parameters: Parameter names, in the order of beta

    Returns:
        PredictorModel with compiled value, Jacobian and Hessian functions

    Raises:
        ExpressionSyntaxError: Malformed text, with 1-based position
        UnknownIdentifierError: Name declared neither as covariate nor parameter
        ConfigError: Empty parameter list or clashing names
    """
    covariates = tuple(str(c).strip() for c in covariates)
    parameters = tuple(str(b).strip() for b in parameters)
    if not parameters:
        raise ConfigError("Predictor needs at least one parameter")
    declared = covariates + parameters
    for name in declared:
        if not _NAME_RE.match(name):
            raise ConfigError(f"Invalid name '{name}'")
        if name in FUNCTIONS:
            raise ConfigError(f"Name '{name}' clashes with a built-in function")
    duplicates = sorted({name for name in declared if declared.count(name) > 1})
    if duplicates:
        raise ConfigError(f"Names declared more than once: {', '.join(duplicates)}")

    symbols = {name: sympy.Symbol(name) for name in declared}
    parser = _Parser(source, symbols, parameters)
    expr = parser.parse()

    arg_symbols = [symbols[name] for name in declared]
    param_symbols = [symbols[name] for name in parameters]

    def compile_expr(e: sympy.Expr) -> Callable:
        return sympy.lambdify(arg_symbols, e, modules="numpy", dummify=True)

    gradient = [sympy.diff(expr, b) for b in param_symbols]
    hess_fns = []
    linear = True
    for r, br in enumerate(param_symbols):
        for s in range(r, len(param_symbols)):
            second = sympy.diff(gradient[r], param_symbols[s])
            if second != 0:
                linear = False
                hess_fns.append((r, s, compile_expr(second)))

    model = PredictorModel(
        source=source,
        covariate_names=covariates,
        parameter_names=parameters,
        expr=expr,
        guards=tuple(parser.guards),
        _eta_fn=compile_expr(expr),
        _grad_fns=tuple(compile_expr(g) for g in gradient),
        _hess_fns=tuple(hess_fns),
        _guard_fns=tuple(compile_expr(g.argument) for g in parser.guards),
        linear=linear,
    )
    logger.debug(f"Parsed predictor '{source}': p={model.p}, m={model.m}, linear={linear}")
    return model
