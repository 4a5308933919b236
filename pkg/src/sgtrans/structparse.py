"""Lightweight structure extraction for Java and Python snippets.

Turns raw source text into the model's input granularity (lower-cased
sub-tokens) together with three kinds of structure:

* which original token every sub-token came from,
* which statement every sub-token belongs to,
* a data-flow graph over variable occurrences.

No grammar is involved. The lexer is hand written, statements follow simple
separator/row rules, and data flow comes from a def-use scan over the token
stream that understands ``if``/``else`` joins and ``for``/``while`` loops.
"""

from __future__ import annotations

import enum
import keyword
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable


class Language(str, enum.Enum):
    JAVA = "java"
    PYTHON = "python"

    @classmethod
    def parse(cls, value: "str | Language") -> "Language":
        if isinstance(value, Language):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unsupported language {value!r} (expected 'java' or 'python')") from None


class TokenKind(str, enum.Enum):
    IDENTIFIER = "Identifier"
    KEYWORD = "Keyword"
    LITERAL = "Literal"
    OPERATOR = "Operator"
    SEPARATOR = "Separator"
    COMMENT = "Comment"


class EdgeKind(str, enum.Enum):
    LAST_WRITE = "LastWrite"
    COMPUTE_FROM = "ComputeFrom"
    LOOP_BACK = "LoopBack"


class UnterminatedLiteral(ValueError):
    """A string or character literal is not closed before end of line/input."""

    def __init__(self, line: int, snippet_id: str | None = None):
        self.line = line
        self.snippet_id = snippet_id
        where = f" in {snippet_id}" if snippet_id else ""
        super().__init__(f"unterminated literal starting at line {line}{where}")


@dataclass(frozen=True)
class RawSnippet:
    language: Language
    text: str
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "language", Language.parse(self.language))
        if not self.text or not self.text.strip():
            raise ValueError("snippet text is empty")


@dataclass(frozen=True)
class LexToken:
    """One lexeme. ``span`` holds [start, end) character offsets into the text."""

    surface: str
    kind: TokenKind
    span: tuple[int, int]
    line: int
    col: int = 0

    @property
    def end_line(self) -> int:
        return self.line + self.surface.count("\n")


@dataclass(frozen=True)
class DfgNode:
    """A variable occurrence covering the half-open index range [lo, hi)."""

    lo: int
    hi: int
    name: str
    ordinal: int


@dataclass(frozen=True)
class DfgEdge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass(frozen=True)
class DataFlowGraph:
    nodes: tuple[DfgNode, ...] = ()
    edges: tuple[DfgEdge, ...] = ()

    def expand(self, spans: list[tuple[int, int]]) -> "DataFlowGraph":
        """Re-express node ranges through ``spans`` (token index -> sub-token range)."""
        nodes = tuple(
            DfgNode(spans[n.lo][0], spans[n.hi - 1][1], n.name, n.ordinal) for n in self.nodes
        )
        return DataFlowGraph(nodes, self.edges)


@dataclass(frozen=True)
class StructuredCode:
    sub_tokens: tuple[str, ...]
    token_of: tuple[int, ...]
    statement_of: tuple[int, ...]
    dfg: DataFlowGraph
    language: Language
    id: str = ""

    def __post_init__(self):
        n = len(self.sub_tokens)
        if n < 1:
            raise ValueError("StructuredCode needs at least one sub-token")
        if len(self.token_of) != n or len(self.statement_of) != n:
            raise ValueError("token_of/statement_of must cover every sub-token")
        for node in self.dfg.nodes:
            if not 0 <= node.lo < node.hi <= n:
                raise ValueError(f"DFG node range {node.lo}:{node.hi} outside [0, {n})")
        for edge in self.dfg.edges:
            if edge.src == edge.dst:
                raise ValueError("DFG self-loop")
            if not (0 <= edge.src < len(self.dfg.nodes) and 0 <= edge.dst < len(self.dfg.nodes)):
                raise ValueError("DFG edge references a missing node")

    def __len__(self) -> int:
        return len(self.sub_tokens)

    def truncate(self, max_len: int) -> "StructuredCode":
        """Keep the first ``max_len`` sub-tokens; DFG nodes beyond the cut are dropped."""
        if len(self) <= max_len:
            return self
        keep: dict[int, int] = {}
        nodes = []
        for i, node in enumerate(self.dfg.nodes):
            if node.lo < max_len:
                keep[i] = len(nodes)
                nodes.append(DfgNode(node.lo, min(node.hi, max_len), node.name, node.ordinal))
        edges = tuple(
            DfgEdge(keep[e.src], keep[e.dst], e.kind)
            for e in self.dfg.edges
            if e.src in keep and e.dst in keep
        )
        return StructuredCode(
            self.sub_tokens[:max_len],
            self.token_of[:max_len],
            self.statement_of[:max_len],
            DataFlowGraph(tuple(nodes), edges),
            self.language,
            self.id,
        )

    def to_json(self) -> dict:
        nodes = self.dfg.nodes
        return {
            "id": self.id,
            "language": self.language.value,
            "sub_tokens": list(self.sub_tokens),
            "token_of": list(self.token_of),
            "statement_of": list(self.statement_of),
            "dfg_edges": [
                [nodes[e.src].lo, nodes[e.src].hi, nodes[e.dst].lo, nodes[e.dst].hi, e.kind.value]
                for e in self.dfg.edges
            ],
        }


# ---------------------------------------------------------------------------
# lexing

JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue default do
    double else enum extends final finally float for goto if implements import instanceof int
    interface long native new package private protected public return short static strictfp
    super switch synchronized this throw throws transient try void volatile while var record
    yield""".split()
)
JAVA_LITERAL_WORDS = frozenset({"true", "false", "null"})
# py2 corpora use print/exec as statements; they stay identifiers here
PYTHON_KEYWORDS = frozenset(keyword.kwlist)

_JAVA_OPERATORS = sorted(
    """>>>= <<= >>= >>> ... -> :: ++ -- && || == != <= >= += -= *= /= %= &= |= ^= << >>
    + - * / % = < > ! ~ ? : & | ^ @ .""".split(),
    key=len,
    reverse=True,
)
_PYTHON_OPERATORS = sorted(
    """**= //= >>= <<= -> := ** // == != <= >= << >> += -= *= /= %= &= |= ^= @= <>
    + - * / % = < > ! ~ & | ^ @ .""".split(),
    key=len,
    reverse=True,
)
_JAVA_SEPARATORS = frozenset("(){}[];,")
_PYTHON_SEPARATORS = frozenset("(){}[];,:")


def _case_variants(word: str) -> set[str]:
    out = {""}
    for ch in word:
        out = {o + c for o in out for c in (ch.lower(), ch.upper())}
    return out


_PY_STRING_PREFIXES = frozenset(
    v for base in ("r", "b", "u", "f", "br", "rb", "fr", "rf") for v in _case_variants(base)
)


def _is_ident_start(ch: str, lang: Language) -> bool:
    return ch.isalpha() or ch == "_" or (lang is Language.JAVA and ch == "$")


def _is_ident_char(ch: str, lang: Language) -> bool:
    return ch.isalnum() or ch == "_" or (lang is Language.JAVA and ch == "$")


class _Lexer:
    def __init__(self, text: str, lang: Language, snippet_id: str = ""):
        self.text = text
        self.lang = lang
        self.sid = snippet_id
        self.pos = 0
        self.line = 1
        self.line_start = 0
        self.out: list[LexToken] = []
        if lang is Language.JAVA:
            self.operators, self.separators = _JAVA_OPERATORS, _JAVA_SEPARATORS
        else:
            self.operators, self.separators = _PYTHON_OPERATORS, _PYTHON_SEPARATORS

    def emit(self, start: int, kind: TokenKind, line: int, col: int) -> None:
        self.out.append(LexToken(self.text[start : self.pos], kind, (start, self.pos), line, col))

    def advance_to(self, end: int) -> None:
        chunk = self.text[self.pos : end]
        newlines = chunk.count("\n")
        if newlines:
            self.line += newlines
            self.line_start = self.pos + chunk.rfind("\n") + 1
        self.pos = end

    def run(self) -> list[LexToken]:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            start, line, col = self.pos, self.line, self.pos - self.line_start
            if ch.isspace() or (ch == "\\" and self.lang is Language.PYTHON):
                self.advance_to(self.pos + 1)
                continue
            if self._comment_start():
                self._comment()
                self.emit(start, TokenKind.COMMENT, line, col)
                continue
            if ch in "\"'":
                self._string(self.pos)
                self.emit(start, TokenKind.LITERAL, line, col)
                continue
            if ch.isdigit() or (ch == "." and self.pos + 1 < n and text[self.pos + 1].isdigit()):
                self._number()
                self.emit(start, TokenKind.LITERAL, line, col)
                continue
            if _is_ident_start(ch, self.lang):
                end = self.pos + 1
                while end < n and _is_ident_char(text[end], self.lang):
                    end += 1
                word = text[self.pos : end]
                if (
                    self.lang is Language.PYTHON
                    and word in _PY_STRING_PREFIXES
                    and end < n
                    and text[end] in "\"'"
                ):
                    self._string(end)
                    self.emit(start, TokenKind.LITERAL, line, col)
                    continue
                self.advance_to(end)
                self.emit(start, self._word_kind(word), line, col)
                continue
            op = next((o for o in self.operators if len(o) > 1 and text.startswith(o, self.pos)), None)
            if op is None and ch in self.separators:
                self.advance_to(self.pos + 1)
                self.emit(start, TokenKind.SEPARATOR, line, col)
                continue
            for op in self.operators:
                if text.startswith(op, self.pos):
                    self.advance_to(self.pos + len(op))
                    break
            else:
                # unknown character: keep it so the token stream covers the text
                self.advance_to(self.pos + 1)
            self.emit(start, TokenKind.OPERATOR, line, col)
        return self.out

    def _word_kind(self, word: str) -> TokenKind:
        if self.lang is Language.JAVA:
            if word in JAVA_LITERAL_WORDS:
                return TokenKind.LITERAL
            if word in JAVA_KEYWORDS:
                return TokenKind.KEYWORD
        elif word in PYTHON_KEYWORDS:
            return TokenKind.KEYWORD
        return TokenKind.IDENTIFIER

    def _comment_start(self) -> bool:
        if self.lang is Language.PYTHON:
            return self.text[self.pos] == "#"
        return self.text.startswith("//", self.pos) or self.text.startswith("/*", self.pos)

    def _comment(self) -> None:
        text = self.text
        if self.lang is Language.JAVA and text.startswith("/*", self.pos):
            end = text.find("*/", self.pos + 2)
            self.advance_to(len(text) if end < 0 else end + 2)
            return
        end = text.find("\n", self.pos)
        self.advance_to(len(text) if end < 0 else end)

    def _string(self, quote_pos: int) -> None:
        text, n = self.text, len(self.text)
        quote = text[quote_pos]
        triple = text.startswith(quote * 3, quote_pos) and (
            self.lang is Language.PYTHON or quote == '"'
        )
        delim = quote * 3 if triple else quote
        i = quote_pos + len(delim)
        while i < n:
            c = text[i]
            if c == "\\":
                i += 2
                continue
            if text.startswith(delim, i):
                self.advance_to(i + len(delim))
                return
            if c == "\n" and not triple:
                break
            i += 1
        raise UnterminatedLiteral(self.line, self.sid or None)

    def _number(self) -> None:
        text, n = self.text, len(self.text)
        i = self.pos
        if text.startswith(("0x", "0X", "0b", "0B", "0o", "0O"), i):
            i += 2
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            self.advance_to(i)
            return
        while i < n and (text[i].isdigit() or text[i] in "_."):
            # `1.toString` style member access ends the number at the dot
            if text[i] == "." and i + 1 < n and text[i + 1].isalpha() and text[i + 1] not in "eEjJfFdD":
                break
            i += 1
        if i < n and text[i] in "eE":
            j = i + 1
            if j < n and text[j] in "+-":
                j += 1
            if j < n and text[j].isdigit():
                i = j
                while i < n and (text[i].isdigit() or text[i] == "_"):
                    i += 1
        while i < n and text[i] in "lLfFdDjJ":
            i += 1
        self.advance_to(i)


def lex(snippet: RawSnippet) -> list[LexToken]:
    """Split source text into tokens; comments are kept and tagged ``Comment``."""
    return _Lexer(snippet.text, snippet.language, snippet.id).run()


def strip_comments(tokens: Iterable[LexToken]) -> list[LexToken]:
    return [t for t in tokens if t.kind is not TokenKind.COMMENT]


# ---------------------------------------------------------------------------
# sub-tokens and statements

def _char_class(ch: str) -> str:
    if ch.isdigit():
        return "digit"
    if ch.isupper():
        return "upper"
    if ch.isalpha() or unicodedata.category(ch).startswith("L"):
        return "lower"
    return "other"


def split_identifier(name: str) -> list[str]:
    """CamelCase / snake_case / digit-boundary split, lower-cased.

    >>> split_identifier("parseHTTPResponse2xx")
    ['parse', 'http', 'response', '2', 'xx']
    """
    parts: list[str] = []
    for chunk in name.replace("$", "_").split("_"):
        if not chunk:
            continue
        current = chunk[0]
        for prev, ch, nxt in zip(chunk, chunk[1:], chunk[2:] + " "):
            a, b = _char_class(prev), _char_class(ch)
            boundary = (
                (a == "lower" and b == "upper")
                or (a == "digit") != (b == "digit")
                # acronym followed by a word: HTTPResponse -> HTTP | Response
                or (a == "upper" and b == "upper" and _char_class(nxt) == "lower")
            )
            if boundary:
                parts.append(current)
                current = ch
            else:
                current += ch
        parts.append(current)
    if not parts:
        return [name]
    return [p.lower() for p in parts]


def split_subtokens(tokens: list[LexToken]) -> tuple[list[str], list[int]]:
    """Expand identifiers into sub-tokens; every other token passes through as is."""
    sub_tokens: list[str] = []
    token_of: list[int] = []
    for idx, tok in enumerate(tokens):
        pieces = split_identifier(tok.surface) if tok.kind is TokenKind.IDENTIFIER else [tok.surface]
        sub_tokens.extend(pieces)
        token_of.extend([idx] * len(pieces))
    return sub_tokens, token_of


def segment_statements(tokens: list[LexToken], language: "Language | str") -> list[int]:
    """Statement index of every token.

    Java: runs between ``{``, ``}`` and ``;``, the separator closing the run
    it follows. Python: one statement per physical row.
    """
    language = Language.parse(language)
    statement_of: list[int] = []
    if language is Language.JAVA:
        current = 0
        for tok in tokens:
            statement_of.append(current)
            if tok.kind is TokenKind.SEPARATOR and tok.surface in "{};":
                current += 1
        return statement_of
    rows: dict[int, int] = {}
    for tok in tokens:
        statement_of.append(rows.setdefault(tok.line, len(rows)))
    return statement_of


# ---------------------------------------------------------------------------
# data flow

_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = frozenset(_OPEN.values())
_ASSIGN = frozenset("= += -= *= /= %= &= |= ^= <<= >>= >>>= **= //= @=".split())
_JAVA_PRIMITIVES = frozenset("int long short byte char boolean float double var".split())


@dataclass
class _Simple:
    lo: int
    hi: int


@dataclass
class _If:
    cond: _Simple | None
    branches: list[list]
    exhaustive: bool


@dataclass
class _Loop:
    body: list
    cond: _Simple | None = None
    init: list = field(default_factory=list)
    update: _Simple | None = None
    iterable: _Simple | None = None
    target: _Simple | None = None  # written at the start of every iteration
    cond_after: bool = False  # do { } while (...)


@dataclass
class _Try:
    body: list
    handlers: list[tuple[_Simple | None, list]]
    orelse: list
    final: list


@dataclass
class _PyDef:
    params: _Simple | None
    body: list


@dataclass
class _PyWith:
    items: _Simple
    body: list


State = dict


def _merge(states: list[dict]) -> dict:
    out: dict[str, frozenset[int]] = {}
    for st in states:
        for name, defs in st.items():
            out[name] = out.get(name, frozenset()) | defs
    return out


class _DfgBuilder:
    def __init__(self, tokens: list[LexToken], language: Language):
        self.toks = tokens
        self.lang = language
        self.node_of: dict[int, int] = {}
        self.edges: dict[tuple[int, int], EdgeKind] = {}
        self.replay = 0

    # -- graph primitives -------------------------------------------------
    def _node(self, ti: int) -> int:
        return self.node_of.setdefault(ti, len(self.node_of))

    def _link(self, src: int, dst: int, kind: EdgeKind) -> None:
        if src == dst or (src, dst) in self.edges:
            return
        if self.replay and kind is EdgeKind.LAST_WRITE:
            kind = EdgeKind.LOOP_BACK
        self.edges[(src, dst)] = kind

    def read(self, ti: int, state: State) -> int:
        node = self._node(ti)
        for w in sorted(state.get(self.toks[ti].surface, ())):
            self._link(w, node, EdgeKind.LAST_WRITE)
        return node

    def write(self, ti: int, state: State, sources: Iterable[int] = ()) -> int:
        node = self._node(ti)
        for s in sources:
            self._link(s, node, EdgeKind.COMPUTE_FROM)
        state[self.toks[ti].surface] = frozenset({node})
        return node

    # -- token helpers ----------------------------------------------------
    def s(self, i: int) -> str:
        return self.toks[i].surface if 0 <= i < len(self.toks) else ""

    def match(self, i: int, hi: int) -> int:
        """Index of the bracket closing the one at ``i`` (or ``hi`` if unbalanced)."""
        depth = 0
        for j in range(i, hi):
            tok = self.toks[j]
            if tok.kind is TokenKind.SEPARATOR:
                if tok.surface in _OPEN:
                    depth += 1
                elif tok.surface in _CLOSE:
                    depth -= 1
                    if depth == 0:
                        return j
        return hi

    def top_level(self, lo: int, hi: int, surfaces: frozenset[str] | set[str]) -> list[int]:
        out, depth = [], 0
        for j in range(lo, hi):
            tok = self.toks[j]
            if tok.kind is TokenKind.SEPARATOR and tok.surface in _OPEN:
                depth += 1
            elif tok.kind is TokenKind.SEPARATOR and tok.surface in _CLOSE:
                depth -= 1
            elif depth == 0 and tok.surface in surfaces and tok.kind is not TokenKind.LITERAL:
                out.append(j)
        return out

    def is_ident(self, i: int) -> bool:
        return 0 <= i < len(self.toks) and self.toks[i].kind is TokenKind.IDENTIFIER

    # -- driver -----------------------------------------------------------
    def build(self) -> DataFlowGraph:
        if self.lang is Language.JAVA:
            stmts = self.java_block(0, len(self.toks))
        else:
            stmts = self.py_suite(self.py_lines(), 0)[0]
        self.run(stmts, {})
        order = sorted(self.node_of, key=lambda ti: ti)
        renum = {self.node_of[ti]: k for k, ti in enumerate(order)}
        counts: dict[str, int] = {}
        nodes = []
        for ti in order:
            name = self.toks[ti].surface
            counts[name] = counts.get(name, 0) + 1
            nodes.append(DfgNode(ti, ti + 1, name, counts[name]))
        edges = sorted(
            (DfgEdge(renum[a], renum[b], kind) for (a, b), kind in self.edges.items()),
            key=lambda e: (e.src, e.dst),
        )
        return DataFlowGraph(tuple(nodes), tuple(edges))

    def run(self, stmts: list, state: State) -> State:
        for st in stmts:
            state = self.exec(st, state)
        return state

    def exec(self, st, state: State) -> State:
        if isinstance(st, _Simple):
            state = dict(state)
            self.simple(st, state)
            return state
        if isinstance(st, list):
            return self.run(st, state)
        if isinstance(st, _If):
            if st.cond is not None:
                state = self.exec(st.cond, state)
            outs = [self.run(branch, dict(state)) for branch in st.branches]
            if not st.exhaustive:
                outs.append(state)
            return _merge(outs)
        if isinstance(st, _Loop):
            state = self.run(st.init, state)
            if st.iterable is not None:
                state = self.exec(st.iterable, state)
            entry = state
            first = self.iteration(st, entry)
            self.replay += 1
            second = self.iteration(st, _merge([entry, first]))
            self.replay -= 1
            return _merge([entry, first, second])
        if isinstance(st, _Try):
            after_body = self.run(st.body, state)
            start = _merge([state, after_body])
            outs = []
            for param, body in st.handlers:
                hstate = dict(start)
                if param is not None:
                    self.handler_param(param, hstate)
                outs.append(self.run(body, hstate))
            outs.append(self.run(st.orelse, after_body))
            return self.run(st.final, _merge(outs))
        if isinstance(st, _PyDef):
            state = dict(state)
            if st.params is not None:
                self.py_params(st.params, state)
            return self.run(st.body, state)
        if isinstance(st, _PyWith):
            state = dict(state)
            self.py_with_items(st.items, state)
            return self.run(st.body, state)
        raise TypeError(f"unknown statement node {st!r}")

    def iteration(self, loop: _Loop, state: State) -> State:
        if loop.cond is not None and not loop.cond_after:
            state = self.exec(loop.cond, state)
        if loop.target is not None:
            state = dict(state)
            self.target(loop.target, state)
        state = self.run(loop.body, state)
        if loop.update is not None:
            state = self.exec(loop.update, state)
        if loop.cond is not None and loop.cond_after:
            state = self.exec(loop.cond, state)
        return state

    def simple(self, st: _Simple, state: State) -> None:
        if self.lang is Language.JAVA:
            self.java_expr(st.lo, st.hi, state)
        else:
            self.py_simple(st.lo, st.hi, state)

    def handler_param(self, st: _Simple, state: State) -> None:
        if self.lang is Language.JAVA:
            self.java_expr(st.lo, st.hi, state)
        else:
            self.py_with_items(st, state)

    def target(self, st: _Simple, state: State) -> None:
        if self.lang is Language.JAVA:
            # `Type name` of an enhanced for
            for i in range(st.hi - 1, st.lo - 1, -1):
                if self.is_ident(i):
                    self.write(i, state)
                    return
        else:
            self.py_targets(st.lo, st.hi, state, [], augmented=False)

    # -- Java -------------------------------------------------------------
    def java_block(self, lo: int, hi: int) -> list:
        stmts, i = [], lo
        while i < hi:
            st, i = self.java_stmt(i, hi)
            if st is not None:
                stmts.append(st)
        return stmts

    def java_paren(self, i: int, hi: int) -> tuple[_Simple, int]:
        """Contents of the parenthesised group opening at ``i`` and the index after it."""
        if self.s(i) != "(":
            return _Simple(i, i), i
        close = self.match(i, hi)
        return _Simple(i + 1, close), close + 1

    def java_stmt(self, i: int, hi: int):
        tok = self.toks[i]
        word = tok.surface if tok.kind in (TokenKind.KEYWORD, TokenKind.SEPARATOR) else None
        if word == "{":
            close = self.match(i, hi)
            return self.java_block(i + 1, close), close + 1
        if word in (";", "}", ")", "]"):
            return None, i + 1
        if word == "if":
            cond, k = self.java_paren(i + 1, hi)
            then, k = self.java_stmt(k, hi) if k < hi else (None, k)
            branches = [[then] if then is not None else []]
            exhaustive = False
            if self.s(k) == "else" and k + 1 < hi:
                other, k = self.java_stmt(k + 1, hi)
                branches.append([other] if other is not None else [])
                exhaustive = True
            return _If(cond, branches, exhaustive), k
        if word == "for":
            header, k = self.java_paren(i + 1, hi)
            body, k = self.java_stmt(k, hi) if k < hi else (None, k)
            body = [body] if body is not None else []
            semis = self.top_level(header.lo, header.hi, {";"})
            if len(semis) >= 2:
                return _Loop(
                    body=body,
                    init=[_Simple(header.lo, semis[0])],
                    cond=_Simple(semis[0] + 1, semis[1]),
                    update=_Simple(semis[1] + 1, header.hi),
                ), k
            colon = self.top_level(header.lo, header.hi, {":"})
            if colon:
                return _Loop(
                    body=body,
                    target=_Simple(header.lo, colon[0]),
                    iterable=_Simple(colon[0] + 1, header.hi),
                ), k
            return _Loop(body=body, cond=header), k
        if word == "while":
            cond, k = self.java_paren(i + 1, hi)
            body, k = self.java_stmt(k, hi) if k < hi else (None, k)
            return _Loop(body=[body] if body is not None else [], cond=cond), k
        if word == "do":
            body, k = self.java_stmt(i + 1, hi)
            cond = None
            if self.s(k) == "while":
                cond, k = self.java_paren(k + 1, hi)
            return _Loop(body=[body] if body is not None else [], cond=cond, cond_after=True), k
        if word == "try":
            k = i + 1
            pre = []
            if self.s(k) == "(":
                res, k = self.java_paren(k, hi)
                pre.append(res)
            body, k = self.java_stmt(k, hi) if k < hi else (None, k)
            handlers, final = [], []
            while self.s(k) == "catch":
                param, k = self.java_paren(k + 1, hi)
                hbody, k = self.java_stmt(k, hi) if k < hi else (None, k)
                handlers.append((_Simple(param.lo, param.hi), [hbody] if hbody is not None else []))
            if self.s(k) == "finally":
                fbody, k = self.java_stmt(k + 1, hi)
                final = [fbody] if fbody is not None else []
            return pre + [_Try([body] if body is not None else [], handlers, [], final)], k
        if word in ("switch", "synchronized"):
            expr, k = self.java_paren(i + 1, hi)
            body, k = self.java_stmt(k, hi) if k < hi else (None, k)
            body = [body] if body is not None else []
            if word == "switch":
                return _If(expr, [body], exhaustive=False), k
            return [expr] + body, k
        if word in ("else", "catch", "finally"):
            return None, i + 1
        return self.java_simple(i, hi)

    def java_simple(self, i: int, hi: int):
        depth, j = 0, i
        while j < hi:
            tok = self.toks[j]
            if tok.kind is TokenKind.SEPARATOR:
                c = tok.surface
                if c == "{" and depth == 0:
                    prev = self.s(j - 1)
                    if prev in ("=", "]", ",", "(", "return"):
                        # array initializer stays inside the expression
                        j = self.match(j, hi) + 1
                        continue
                    close = self.match(j, hi)
                    header = _Simple(i, j)
                    return [header, self.java_block(j + 1, close)], close + 1
                if c in "([{":
                    depth += 1
                elif c in ")]}":
                    if depth == 0:
                        return _Simple(i, j), j
                    depth -= 1
                elif c == ";" and depth == 0:
                    return _Simple(i, j), j + 1
            j += 1
        return _Simple(i, hi), hi

    def java_is_type_name(self, i: int) -> bool:
        word = self.toks[i].surface
        return word[:1].isupper() and not word.isupper()

    def java_is_var(self, i: int) -> bool:
        if not self.is_ident(i):
            return False
        prev, nxt = self.s(i - 1), self.s(i + 1)
        if prev in (".", "::", "@") or nxt == "(":
            return False
        if self.is_ident(i + 1) or self.s(i - 1) == "new":
            return False
        if self.java_is_type_name(i) and len(self.toks[i].surface) > 1:
            return False
        return True

    def java_declared(self, i: int) -> bool:
        """True if the identifier at ``i`` is introduced by a preceding type."""
        prev = i - 1
        if prev < 0:
            return False
        tok = self.toks[prev]
        if tok.kind is TokenKind.IDENTIFIER:
            return True
        if tok.kind is TokenKind.KEYWORD and tok.surface in _JAVA_PRIMITIVES:
            return True
        if tok.surface == "]" and self.s(prev - 1) == "[":
            return True
        if tok.surface in (">", ">>", ">>>"):
            depth = 0
            for j in range(prev, -1, -1):
                s = self.toks[j].surface
                if s in (">", ">>", ">>>"):
                    depth += len(s)
                elif s == "<":
                    depth -= 1
                    if depth <= 0:
                        return self.is_ident(j - 1) and self.java_is_type_name(j - 1)
                elif s in (";", "{", "}", "(", ")", "="):
                    return False
        return False

    def expr_end(self, lo: int, hi: int) -> int:
        depth = 0
        for j in range(lo, hi):
            tok = self.toks[j]
            if tok.kind is TokenKind.SEPARATOR:
                if tok.surface in _OPEN:
                    depth += 1
                elif tok.surface in _CLOSE:
                    depth -= 1
                    if depth < 0:
                        return j
                elif tok.surface in ",;" and depth == 0:
                    return j
        return hi

    def java_expr(self, lo: int, hi: int, state: State) -> list[int]:
        """Scan an expression/statement range; returns the nodes its value depends on."""
        sources: list[int] = []
        i = lo
        while i < hi:
            tok = self.toks[i]
            if tok.kind is TokenKind.SEPARATOR and tok.surface in _OPEN:
                close = min(self.match(i, hi), hi)
                sources += self.java_expr(i + 1, close, state)
                i = close + 1
                continue
            if not self.java_is_var(i):
                i += 1
                continue
            nxt = self.s(i + 1)
            if nxt in _ASSIGN:
                end = self.expr_end(i + 2, hi)
                rhs = self.java_expr(i + 2, end, state)
                if nxt != "=":
                    self.read(i, state)
                sources.append(self.write(i, state, rhs))
                i = end
            elif nxt in ("++", "--") or self.s(i - 1) in ("++", "--"):
                self.read(i, state)
                sources.append(self.write(i, state))
                i += 1
            elif self.java_declared(i):
                self.write(i, state)
                i += 1
            else:
                sources.append(self.read(i, state))
                i += 1
        return sources

    # -- Python -----------------------------------------------------------
    def py_lines(self) -> list[tuple[int, int]]:
        """Logical lines as token ranges (bracketed continuations merged)."""
        lines: list[tuple[int, int]] = []
        start, depth, last_end = 0, 0, None
        for i, tok in enumerate(self.toks):
            if last_end is not None and depth == 0 and tok.line > last_end:
                lines.append((start, i))
                start = i
            if tok.kind is TokenKind.SEPARATOR:
                if tok.surface in _OPEN:
                    depth += 1
                elif tok.surface in _CLOSE:
                    depth = max(0, depth - 1)
            last_end = tok.end_line
        if self.toks:
            lines.append((start, len(self.toks)))
        # split `a = 1; b = 2`
        out = []
        for lo, hi in lines:
            cuts = self.top_level(lo, hi, {";"})
            prev = lo
            for c in cuts:
                if c > prev:
                    out.append((prev, c))
                prev = c + 1
            if prev < hi:
                out.append((prev, hi))
        return out

    _PY_COMPOUND = frozenset({"if", "elif", "else", "for", "while", "try", "except", "finally", "with", "def", "class"})

    def py_suite(self, lines: list[tuple[int, int]], k: int, indent: int | None = None):
        """Parse consecutive lines sharing an indentation level starting at ``k``."""
        stmts: list = []
        if k >= len(lines):
            return stmts, k
        if indent is None:
            indent = self.toks[lines[k][0]].col
        while k < len(lines) and self.toks[lines[k][0]].col >= indent:
            lo, hi = lines[k]
            if self.toks[lo].col > indent:
                # stray deeper indentation: treat as a nested suite
                inner, k = self.py_suite(lines, k)
                stmts.extend(inner)
                continue
            st, k = self.py_statement(lines, k, indent)
            if st is not None:
                stmts.append(st)
        return stmts, k

    def py_header(self, lines, k: int, indent: int):
        """Split a compound header at its colon; returns (header range, body, next line)."""
        lo, hi = lines[k]
        colon = self.top_level(lo, hi, {":"})
        # skip lambda colons: the header colon is the last top-level one
        cut = colon[-1] if colon else hi
        header = _Simple(lo + 1, cut)
        if cut + 1 < hi:
            body = [_Simple(cut + 1, hi)]
            return header, body, k + 1
        if k + 1 < len(lines) and self.toks[lines[k + 1][0]].col > indent:
            body, nk = self.py_suite(lines, k + 1)
            return header, body, nk
        return header, [], k + 1

    def py_keyword(self, lines, k: int) -> str:
        if k >= len(lines):
            return ""
        lo, _ = lines[k]
        if self.s(lo) == "async":
            return self.s(lo + 1)
        tok = self.toks[lo]
        return tok.surface if tok.kind is TokenKind.KEYWORD else ""

    def py_statement(self, lines, k: int, indent: int):
        lo, hi = lines[k]
        if self.s(lo) == "async" and self.s(lo + 1) in ("def", "for", "with"):
            lines = list(lines)
            lines[k] = (lo + 1, hi)
            lo += 1
        word = self.py_keyword(lines, k)
        if word not in self._PY_COMPOUND:
            return _Simple(lo, hi), k + 1
        header, body, nk = self.py_header(lines, k, indent)
        same = lambda j: j < len(lines) and self.toks[lines[j][0]].col == indent  # noqa: E731
        if word == "if":
            branches, conds = [body], [header]
            exhaustive = False
            while same(nk) and self.py_keyword(lines, nk) in ("elif", "else"):
                kw = self.py_keyword(lines, nk)
                h, b, nk = self.py_header(lines, nk, indent)
                if kw == "else":
                    branches.append(b)
                    exhaustive = True
                    break
                conds.append(h)
                branches.append(b)
            # fold elif chains into nested ifs
            node = None
            tail = branches[len(conds) :] if exhaustive else []
            for cond, branch in reversed(list(zip(conds, branches))):
                if node is None:
                    node = _If(cond, [branch] + tail, exhaustive)
                else:
                    node = _If(cond, [branch, [node]], True)
            return node, nk
        if word in ("for", "while"):
            if word == "for":
                in_pos = self.top_level(header.lo, header.hi, {"in"})
                cut = in_pos[0] if in_pos else header.hi
                loop = _Loop(
                    body=body,
                    target=_Simple(header.lo, cut),
                    iterable=_Simple(cut + 1, header.hi) if in_pos else None,
                )
            else:
                loop = _Loop(body=body, cond=header)
            if same(nk) and self.py_keyword(lines, nk) == "else":
                _, orelse, nk = self.py_header(lines, nk, indent)
                return [loop, orelse], nk
            return loop, nk
        if word == "try":
            handlers, orelse, final = [], [], []
            while same(nk) and self.py_keyword(lines, nk) in ("except", "else", "finally"):
                kw = self.py_keyword(lines, nk)
                h, b, nk = self.py_header(lines, nk, indent)
                if kw == "except":
                    handlers.append((h, b))
                elif kw == "else":
                    orelse = b
                else:
                    final = b
            return _Try(body, handlers, orelse, final), nk
        if word == "with":
            return _PyWith(header, body), nk
        if word == "def":
            open_paren = next((j for j in range(header.lo, header.hi) if self.s(j) == "("), None)
            params = None
            if open_paren is not None:
                close = self.match(open_paren, header.hi)
                params = _Simple(open_paren + 1, close)
            return _PyDef(params, body), nk
        if word == "class":
            return body, nk
        # dangling elif/else/except/finally
        return body, nk

    def py_plain_name(self, i: int) -> bool:
        return (
            self.is_ident(i)
            and self.s(i - 1) != "."
            and self.s(i + 1) not in (".", "[", "(")
        )

    def py_expr(self, lo: int, hi: int, state: State) -> list[int]:
        sources: list[int] = []
        i = lo
        while i < hi:
            tok = self.toks[i]
            if tok.kind is TokenKind.SEPARATOR and tok.surface in _OPEN:
                close = min(self.match(i, hi), hi)
                sources += self.py_expr(i + 1, close, state)
                i = close + 1
                continue
            if not self.is_ident(i) or self.s(i - 1) == "." or self.s(i + 1) == "(":
                i += 1
                continue
            nxt = self.s(i + 1)
            if nxt == "=":
                i += 1  # keyword argument name
            elif nxt == ":=":
                end = self.expr_end(i + 2, hi)
                rhs = self.py_expr(i + 2, end, state)
                sources.append(self.write(i, state, rhs))
                i = end
            else:
                sources.append(self.read(i, state))
                i += 1
        return sources

    def py_target_names(self, lo: int, hi: int) -> list[int]:
        """Names bound by a target list; names under a subscript or call are excluded."""
        out, stack = [], []
        for i in range(lo, hi):
            tok = self.toks[i]
            if tok.kind is TokenKind.SEPARATOR and tok.surface in _OPEN:
                prev = self.toks[i - 1] if i > lo else None
                indexing = prev is not None and (
                    prev.kind is TokenKind.IDENTIFIER or prev.surface in (")", "]")
                )
                stack.append(indexing)
            elif tok.kind is TokenKind.SEPARATOR and tok.surface in _CLOSE:
                if stack:
                    stack.pop()
            elif not any(stack) and self.py_plain_name(i):
                out.append(i)
        return out

    def py_targets(self, lo: int, hi: int, state: State, sources: list[int], augmented: bool) -> None:
        annot = self.top_level(lo, hi, {":"})
        if annot:
            hi = annot[0]
        plain = self.py_target_names(lo, hi)
        # subscripts/attributes on the target side are reads
        for i in range(lo, hi):
            if self.is_ident(i) and i not in plain and self.s(i - 1) != "." and self.s(i + 1) != "(":
                self.read(i, state)
        for i in plain:
            if augmented:
                self.read(i, state)
            self.write(i, state, sources)

    def py_simple(self, lo: int, hi: int, state: State) -> None:
        first = self.s(lo)
        if first in ("import", "from", "global", "nonlocal", "pass", "break", "continue"):
            return
        if self.toks[lo].kind is TokenKind.KEYWORD and first in ("return", "yield", "assert", "raise", "del", "await"):
            self.py_expr(lo + 1, hi, state)
            return
        ops = self.top_level(lo, hi, _ASSIGN)
        if not ops:
            self.py_expr(lo, hi, state)
            return
        last = ops[-1]
        sources = self.py_expr(last + 1, hi, state)
        bounds = [lo - 1] + ops
        for a, b in zip(bounds, bounds[1:]):
            self.py_targets(a + 1, b, state, sources, augmented=self.s(b) != "=")

    def py_params(self, st: _Simple, state: State) -> None:
        commas = self.top_level(st.lo, st.hi, {","})
        bounds = [st.lo - 1] + commas + [st.hi]
        for a, b in zip(bounds, bounds[1:]):
            j = a + 1
            while j < b and self.s(j) in ("*", "**", "/"):
                j += 1
            if j >= b or not self.is_ident(j):
                continue
            eq = self.top_level(j, b, {"="})
            if eq:
                self.py_expr(eq[0] + 1, b, state)
            self.write(j, state)

    def py_with_items(self, st: _Simple, state: State) -> None:
        commas = self.top_level(st.lo, st.hi, {","})
        bounds = [st.lo - 1] + commas + [st.hi]
        for a, b in zip(bounds, bounds[1:]):
            as_pos = self.top_level(a + 1, b, {"as"})
            if as_pos:
                sources = self.py_expr(a + 1, as_pos[0], state)
                self.py_targets(as_pos[0] + 1, b, state, sources, augmented=False)
            else:
                self.py_expr(a + 1, b, state)


def extract_dfg(tokens: list[LexToken], language: "Language | str") -> DataFlowGraph:
    """Def-use data-flow graph over variable occurrences (token-index ranges).

    ``LastWrite`` links the reaching writes of a name to each read,
    ``ComputeFrom`` links the reads on an assignment's right-hand side to
    its target, and ``LoopBack`` marks loop-carried ``LastWrite`` edges found
    by a second pass over each loop. Branch joins keep the union of the
    writes reaching them.
    """
    tokens = strip_comments(tokens)
    if not tokens:
        return DataFlowGraph()
    return _DfgBuilder(tokens, Language.parse(language)).build()


def parse(snippet: RawSnippet) -> StructuredCode:
    tokens = strip_comments(lex(snippet))
    if not tokens:
        raise ValueError(f"snippet {snippet.id or '<anonymous>'} has no code tokens")
    sub_tokens, token_of = split_subtokens(tokens)
    stmt_of_token = segment_statements(tokens, snippet.language)
    spans: list[tuple[int, int]] = []
    for i, t in enumerate(token_of):
        if t == len(spans):
            spans.append((i, i + 1))
        else:
            spans[t] = (spans[t][0], i + 1)
    dfg = extract_dfg(tokens, snippet.language).expand(spans)
    return StructuredCode(
        tuple(sub_tokens),
        tuple(token_of),
        tuple(stmt_of_token[t] for t in token_of),
        dfg,
        snippet.language,
        snippet.id,
    )
