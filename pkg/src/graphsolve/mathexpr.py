"""LaTeX-subset math expression parsing and equivalence testing.

Answers arrive either as plain arithmetic ("1/2", "2x + 1") or as LaTeX
("\\dfrac{1}{2}", "\\sqrt{x^2}"). Both parse into one small AST; two
expressions are equivalent when they fold to the same exact rational or,
failing that, agree numerically at seeded sample points.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

# Equivalence sampling: points per free symbol, domain, tolerances. The
# generator is reseeded per comparison so verdicts never depend on call order.
SAMPLES_PER_SYMBOL = 5
SAMPLE_DOMAIN = (0.5, 2.5)
SAMPLING_SEED = 8191
REL_TOLERANCE = 1e-6
ABS_TOLERANCE = 1e-9
SINGULAR_DENOMINATOR = 1e-9
MAX_RESAMPLES = 100

FUNCTION_WHITELIST = ("abs", "cos", "exp", "ln", "log", "sin", "tan")


class ExprError(Exception):
    """Unparseable input: unsupported construct or unbalanced grouping."""


class EvalPointError(Exception):
    """A sample point hit a singularity or domain failure; resample."""


@dataclass(frozen=True)
class Number:
    value: Fraction


@dataclass(frozen=True)
class Symbol:
    name: str


@dataclass(frozen=True)
class Constant:
    name: str  # only "pi"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Frac:
    """\\frac-style fraction; evaluates like Div but parses distinctly."""

    numerator: "Expr"
    denominator: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: "Expr"


@dataclass(frozen=True)
class Sqrt:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Number, Symbol, Constant, Neg, Add, Sub, Mul, Div, Frac, Pow, Sqrt, Call]


# --- tokenizer -------------------------------------------------------------

_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?|\.\d+")
_COMMAND_ALIASES = {
    "dfrac": "frac",
    "tfrac": "frac",
}
_SKIPPED_COMMANDS = {"left", "right", ",", ";", "!", " ", "quad"}
_OPERATOR_COMMANDS = {"cdot": "*", "times": "*", "div": "/"}
_UNICODE_OPS = {"−": "-", "×": "*", "÷": "/", "·": "*"}
_WORDS = ("pi", "sqrt") + FUNCTION_WHITELIST


@dataclass
class _Token:
    kind: str  # number | word | op | lparen | rparen | lbrace | rbrace | comma
    text: str


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _UNICODE_OPS:
            tokens.append(_Token("op", _UNICODE_OPS[ch]))
            i += 1
            continue
        if ch in "+-*/^":
            tokens.append(_Token("op", ch))
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("lparen", ch))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token("rparen", ch))
            i += 1
            continue
        if ch == "{":
            tokens.append(_Token("lbrace", ch))
            i += 1
            continue
        if ch == "}":
            tokens.append(_Token("rbrace", ch))
            i += 1
            continue
        if ch == ",":
            tokens.append(_Token("comma", ch))
            i += 1
            continue
        if ch == "\\":
            match = re.match(r"\\([a-zA-Z]+|.)", text[i:])
            if not match:
                raise ExprError("dangling backslash")
            word = match.group(1)
            i += match.end()
            if word in _SKIPPED_COMMANDS:
                continue
            if word in _OPERATOR_COMMANDS:
                tokens.append(_Token("op", _OPERATOR_COMMANDS[word]))
                continue
            word = _COMMAND_ALIASES.get(word, word)
            if word == "frac" or word == "sqrt" or word == "pi" or word in FUNCTION_WHITELIST:
                tokens.append(_Token("word", word))
                continue
            raise ExprError(f"unsupported construct: \\{word}")
        number = _NUMBER_RE.match(text, i)
        if number:
            tokens.append(_Token("number", number.group(0)))
            i = number.end()
            continue
        if ch.isalpha():
            for word in _WORDS:
                if text.startswith(word, i) and len(word) > 1:
                    tokens.append(_Token("word", word))
                    i += len(word)
                    break
            else:
                tokens.append(_Token("word", ch))
                i += 1
            continue
        raise ExprError(f"unsupported character {ch!r}")
    return tokens


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        token = self.peek()
        if token is None:
            raise ExprError("unexpected end of expression")
        self.pos += 1
        return token

    def expect(self, kind: str) -> _Token:
        token = self.peek()
        if token is None or token.kind != kind:
            got = token.text if token else "end of expression"
            raise ExprError(f"expected {kind}, got {got!r} (unbalanced grouping?)")
        return self.next()

    def parse(self) -> Expr:
        expr = self.expr()
        leftover = self.peek()
        if leftover is not None:
            raise ExprError(f"unexpected trailing input at {leftover.text!r}")
        return expr

    def expr(self) -> Expr:
        node = self.term()
        while True:
            token = self.peek()
            if token and token.kind == "op" and token.text in "+-":
                self.next()
                right = self.term()
                node = Add(node, right) if token.text == "+" else Sub(node, right)
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            token = self.peek()
            if token and token.kind == "op" and token.text in "*/":
                self.next()
                right = self.factor()
                node = Mul(node, right) if token.text == "*" else Div(node, right)
            elif token and token.kind in ("number", "word", "lparen", "lbrace"):
                # Juxtaposition is multiplication: 2x, 2\pi, (1+2)(3).
                node = Mul(node, self.factor())
            else:
                return node

    def factor(self) -> Expr:
        token = self.peek()
        if token and token.kind == "op" and token.text in "+-":
            self.next()
            operand = self.factor()
            return Neg(operand) if token.text == "-" else operand
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        token = self.peek()
        if token and token.kind == "op" and token.text == "^":
            self.next()
            exponent = self.exponent_operand()
            return Pow(base, exponent)
        return base

    def exponent_operand(self) -> Expr:
        # Right-associative; a leading sign binds to the exponent (2^-3).
        token = self.peek()
        if token and token.kind == "op" and token.text in "+-":
            self.next()
            operand = self.exponent_operand()
            return Neg(operand) if token.text == "-" else operand
        if token and token.kind == "lbrace":
            self.next()
            inner = self.expr()
            self.expect("rbrace")
            return inner
        return self.power()

    def atom(self) -> Expr:
        token = self.next()
        if token.kind == "number":
            return Number(Fraction(token.text))
        if token.kind == "lparen":
            inner = self.expr()
            self.expect("rparen")
            return inner
        if token.kind == "lbrace":
            inner = self.expr()
            self.expect("rbrace")
            return inner
        if token.kind == "word":
            if token.text == "pi":
                return Constant("pi")
            if token.text == "frac":
                numerator = self.group_argument("\\frac")
                denominator = self.group_argument("\\frac")
                return Frac(numerator, denominator)
            if token.text == "sqrt":
                nxt = self.peek()
                if nxt and nxt.kind == "lparen":
                    self.next()
                    inner = self.expr()
                    self.expect("rparen")
                    return Sqrt(inner)
                return Sqrt(self.group_argument("\\sqrt"))
            if token.text in FUNCTION_WHITELIST:
                return self.call(token.text)
            return Symbol(token.text)
        raise ExprError(f"unexpected token {token.text!r}")

    def group_argument(self, owner: str) -> Expr:
        """A braced group, or the single following digit/letter (LaTeX rule)."""
        token = self.peek()
        if token is None:
            raise ExprError(f"{owner} is missing an argument")
        if token.kind == "lbrace":
            self.next()
            inner = self.expr()
            self.expect("rbrace")
            return inner
        if token.kind == "number":
            # \frac12 means \frac{1}{2}: unbraced arguments take one digit.
            first, rest = token.text[0], token.text[1:]
            if rest:
                self.tokens[self.pos] = _Token("number", rest)
            else:
                self.next()
            return Number(Fraction(first))
        if token.kind == "word" and len(token.text) == 1 and token.text != "pi":
            self.next()
            return Symbol(token.text)
        if token.kind == "word" and token.text == "pi":
            self.next()
            return Constant("pi")
        raise ExprError(f"{owner} argument must be a braced group or single token")

    def call(self, func: str) -> Expr:
        token = self.peek()
        if token and token.kind == "lparen":
            self.next()
            args = [self.expr()]
            while self.peek() and self.peek().kind == "comma":
                self.next()
                args.append(self.expr())
            self.expect("rparen")
            return Call(func, tuple(args))
        if token and token.kind == "lbrace":
            self.next()
            inner = self.expr()
            self.expect("rbrace")
            return Call(func, (inner,))
        raise ExprError(f"function {func!r} requires a parenthesized argument")


def parse_math(text: str) -> Expr:
    """Parse a plain or LaTeX-subset expression into the AST."""
    stripped = text.strip()
    while len(stripped) >= 2 and stripped.startswith("$") and stripped.endswith("$"):
        stripped = stripped[1:-1].strip()
    if not stripped:
        raise ExprError("empty expression")
    return _Parser(_tokenize(stripped)).parse()


# --- evaluation ------------------------------------------------------------


def free_symbols(expr: Expr) -> set[str]:
    if isinstance(expr, Symbol):
        return {expr.name}
    if isinstance(expr, (Number, Constant)):
        return set()
    if isinstance(expr, Neg):
        return free_symbols(expr.operand)
    if isinstance(expr, Sqrt):
        return free_symbols(expr.operand)
    if isinstance(expr, Frac):
        return free_symbols(expr.numerator) | free_symbols(expr.denominator)
    if isinstance(expr, Pow):
        return free_symbols(expr.base) | free_symbols(expr.exponent)
    if isinstance(expr, Call):
        out: set[str] = set()
        for arg in expr.args:
            out |= free_symbols(arg)
        return out
    return free_symbols(expr.left) | free_symbols(expr.right)


def fold_rational(expr: Expr) -> Fraction | None:
    """Exact rational value of the expression, or None when symbolic."""
    if isinstance(expr, Number):
        return expr.value
    if isinstance(expr, (Symbol, Constant, Call)):
        return None
    if isinstance(expr, Neg):
        inner = fold_rational(expr.operand)
        return None if inner is None else -inner
    if isinstance(expr, (Add, Sub, Mul, Div)):
        left = fold_rational(expr.left)
        right = fold_rational(expr.right)
        if left is None or right is None:
            return None
        if isinstance(expr, Add):
            return left + right
        if isinstance(expr, Sub):
            return left - right
        if isinstance(expr, Mul):
            return left * right
        return None if right == 0 else left / right
    if isinstance(expr, Frac):
        num = fold_rational(expr.numerator)
        den = fold_rational(expr.denominator)
        if num is None or den is None or den == 0:
            return None
        return num / den
    if isinstance(expr, Pow):
        base = fold_rational(expr.base)
        exponent = fold_rational(expr.exponent)
        if base is None or exponent is None or exponent.denominator != 1:
            return None
        power = int(exponent)
        if base == 0 and power < 0:
            return None
        return base**power
    if isinstance(expr, Sqrt):
        inner = fold_rational(expr.operand)
        if inner is None or inner < 0:
            return None
        num_root = math.isqrt(inner.numerator)
        den_root = math.isqrt(inner.denominator)
        if num_root * num_root == inner.numerator and den_root * den_root == inner.denominator:
            return Fraction(num_root, den_root)
        return None
    raise TypeError(f"unknown expression node {expr!r}")


def evaluate(expr: Expr, env: dict[str, float]) -> float:
    """Float value at one sample point; EvalPointError marks bad points."""
    if isinstance(expr, Number):
        return float(expr.value)
    if isinstance(expr, Symbol):
        try:
            return env[expr.name]
        except KeyError as exc:
            raise EvalPointError(f"unbound symbol {expr.name!r}") from exc
    if isinstance(expr, Constant):
        return math.pi
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, Add):
        return evaluate(expr.left, env) + evaluate(expr.right, env)
    if isinstance(expr, Sub):
        return evaluate(expr.left, env) - evaluate(expr.right, env)
    if isinstance(expr, Mul):
        return evaluate(expr.left, env) * evaluate(expr.right, env)
    if isinstance(expr, (Div, Frac)):
        if isinstance(expr, Div):
            num, den = expr.left, expr.right
        else:
            num, den = expr.numerator, expr.denominator
        denominator = evaluate(den, env)
        if abs(denominator) < SINGULAR_DENOMINATOR:
            raise EvalPointError("denominator too close to zero")
        return evaluate(num, env) / denominator
    if isinstance(expr, Pow):
        base = evaluate(expr.base, env)
        exponent = evaluate(expr.exponent, env)
        try:
            value = base**exponent
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise EvalPointError(f"power failed: {exc}") from exc
        if isinstance(value, complex):
            raise EvalPointError("power left the real line")
        return value
    if isinstance(expr, Sqrt):
        inner = evaluate(expr.operand, env)
        if inner < 0:
            raise EvalPointError("square root of a negative value")
        return math.sqrt(inner)
    if isinstance(expr, Call):
        args = [evaluate(a, env) for a in expr.args]
        try:
            if expr.func == "abs":
                return abs(args[0])
            if expr.func in ("log", "ln"):
                return math.log(*args)
            return getattr(math, expr.func)(*args)
        except (ValueError, OverflowError, ZeroDivisionError, TypeError) as exc:
            raise EvalPointError(f"{expr.func} failed: {exc}") from exc
    raise TypeError(f"unknown expression node {expr!r}")


def equivalent(a: Expr, b: Expr) -> bool:
    """Mathematical equivalence: exact rational fold, else seeded sampling.

    Sampling draws SAMPLES_PER_SYMBOL points per free symbol from
    SAMPLE_DOMAIN, binding shared symbols identically; singular or
    out-of-domain points are resampled. Non-equivalence is a value, never
    an error.
    """
    if a == b:
        return True
    fold_a = fold_rational(a)
    fold_b = fold_rational(b)
    if fold_a is not None and fold_b is not None:
        return fold_a == fold_b
    symbols = sorted(free_symbols(a) | free_symbols(b))
    trials = max(1, SAMPLES_PER_SYMBOL * len(symbols))
    rng = random.Random(SAMPLING_SEED)
    low, high = SAMPLE_DOMAIN
    for _ in range(trials):
        for _attempt in range(MAX_RESAMPLES):
            env = {name: rng.uniform(low, high) for name in symbols}
            try:
                value_a = evaluate(a, env)
                value_b = evaluate(b, env)
            except EvalPointError:
                continue
            break
        else:
            return False  # no usable sample point in budget
        if not math.isclose(value_a, value_b, rel_tol=REL_TOLERANCE, abs_tol=ABS_TOLERANCE):
            return False
    return True


# --- rendering -------------------------------------------------------------


def to_text(expr: Expr) -> str:
    """Render to a string that parses back to a structurally equal tree.

    Supports integer-valued Number nodes only (decimal literals would not
    survive the round trip exactly); everything else renders naturally.
    """
    if isinstance(expr, Number):
        if expr.value.denominator != 1:
            raise ValueError("only integer Number nodes render round-trippably")
        return str(expr.value.numerator)
    if isinstance(expr, Symbol):
        return expr.name
    if isinstance(expr, Constant):
        return "pi"
    if isinstance(expr, Neg):
        return f"-{_wrap(expr.operand, tight=True)}"
    if isinstance(expr, Add):
        return f"{to_text(expr.left)} + {_wrap_addend(expr.right)}"
    if isinstance(expr, Sub):
        return f"{to_text(expr.left)} - {_wrap_addend(expr.right)}"
    if isinstance(expr, Mul):
        return f"{_wrap(expr.left)} * {_wrap(expr.right, tight=True)}"
    if isinstance(expr, Div):
        return f"{_wrap(expr.left)} / {_wrap(expr.right, tight=True)}"
    if isinstance(expr, Frac):
        return f"\\frac{{{to_text(expr.numerator)}}}{{{to_text(expr.denominator)}}}"
    if isinstance(expr, Pow):
        base = to_text(expr.base)
        if not isinstance(expr.base, (Number, Symbol, Constant)):
            base = f"({base})"
        return f"{base}^({to_text(expr.exponent)})"
    if isinstance(expr, Sqrt):
        return f"\\sqrt{{{to_text(expr.operand)}}}"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(to_text(a) for a in expr.args)})"
    raise TypeError(f"unknown expression node {expr!r}")


def _wrap(expr: Expr, tight: bool = False) -> str:
    needs = isinstance(expr, (Add, Sub)) or (tight and isinstance(expr, (Neg, Mul, Div)))
    text = to_text(expr)
    return f"({text})" if needs else text


def _wrap_addend(expr: Expr) -> str:
    text = to_text(expr)
    return f"({text})" if isinstance(expr, (Add, Sub, Neg)) else text
