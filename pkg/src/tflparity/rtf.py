"""Extract table cells from legacy RTF and normalize cell text for comparison."""

from __future__ import annotations

import codecs
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum

from tflparity.errors import NotRtf, UnbalancedGroup


@dataclass(frozen=True)
class RawTable:
    rows: tuple[tuple[str, ...], ...]
    source_path: str | None = None
    warnings: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return max((len(r) for r in self.rows), default=0)

    def to_lists(self) -> list[list[str]]:
        return [list(r) for r in self.rows]


# Groups whose content is never table text.
_SKIP_DESTINATIONS = frozenset({
    "fonttbl", "colortbl", "stylesheet", "info", "pict", "object", "header", "headerl", "headerr",
    "headerf", "footer", "footerl", "footerr", "footerf", "fldinst", "listtable", "listoverridetable",
    "rsidtbl", "generator", "xmlnstbl", "themedata", "colorschememapping", "latentstyles", "datastore",
    "filetbl", "revtbl", "pgdsctbl", "footnote", "annotation", "atnid", "atnauthor", "bkmkstart",
    "bkmkend", "shp", "shpinst", "nonshppict", "title", "author", "operator", "keywords", "comment",
    "doccomm", "company", "subject", "template",
})

_SYMBOL_WORDS = {
    "emdash": "\u2014", "endash": "\u2013", "bullet": "\u2022", "lquote": "\u2018", "rquote": "\u2019",
    "ldblquote": "\u201c", "rdblquote": "\u201d", "emspace": " ", "enspace": " ", "qmspace": " ",
    "tab": "\t", "line": "\n",
}

_WS = b" \t\r\n"


@dataclass
class _GroupState:
    uc: int = 1
    skip: bool = False


@dataclass
class _Parser:
    data: bytes
    codec: str = "cp1252"
    tables: list[RawTable] = field(default_factory=list)
    rows: list[tuple[str, ...]] = field(default_factory=list)
    cells: list[str] = field(default_factory=list)
    text: list[str] = field(default_factory=list)
    in_row: bool = False
    gap_text: bool = False
    warnings: list[str] = field(default_factory=list)
    table_warnings: list[str] = field(default_factory=list)
    fallback: int = 0
    high_surrogate: int | None = None

    # -- table bookkeeping ----------------------------------------------------
    def start_row(self) -> None:
        if self.in_row:
            return
        if self.gap_text and self.rows:
            self.flush_table()
        self.gap_text = False
        self.in_row = True
        self.cells = []
        self.text = []

    def end_cell(self) -> None:
        if self.in_row:
            self.cells.append("".join(self.text))
            self.text = []

    def end_row(self) -> None:
        if not self.in_row:
            return
        tail = "".join(self.text)
        if tail.strip():
            self.cells.append(tail)
        self.rows.append(tuple(self.cells))
        self.in_row = False
        self.cells, self.text = [], []

    def flush_table(self) -> None:
        if self.rows:
            self.tables.append(RawTable(tuple(self.rows), warnings=tuple(self.table_warnings)))
        self.rows = []
        self.table_warnings = []

    def emit(self, s: str, state: _GroupState) -> None:
        if state.skip:
            return
        if self.in_row:
            self.text.append(s)
        elif s.strip():
            self.gap_text = True

    def emit_char(self, s: str, state: _GroupState) -> None:
        """Emit ordinary text, honouring any pending unicode fallback count."""
        if self.fallback > 0:
            self.fallback -= 1
            return
        self.high_surrogate = None
        self.emit(s, state)

    def emit_unicode(self, n: int, state: _GroupState) -> None:
        if n < 0:
            n += 65536
        if 0xD800 <= n <= 0xDBFF:
            self.high_surrogate = n
        elif 0xDC00 <= n <= 0xDFFF and self.high_surrogate is not None:
            code = 0x10000 + ((self.high_surrogate - 0xD800) << 10) + (n - 0xDC00)
            self.high_surrogate = None
            self.emit(chr(code), state)
        elif 0xD800 <= n <= 0xDFFF:
            self.emit("\ufffd", state)
        else:
            self.high_surrogate = None
            self.emit(chr(n), state)
        self.fallback = state.uc

    def decode_byte(self, b: int) -> str:
        return bytes([b]).decode(self.codec, errors="replace")

    # -- main loop ------------------------------------------------------------
    def run(self) -> list[RawTable]:
        data = self.data
        n = len(data)
        stack: list[_GroupState] = []
        state = _GroupState()
        i = 0
        while i < n:
            b = data[i]
            if b == 0x7B:  # {
                stack.append(state)
                state = _GroupState(state.uc, state.skip)
                self.fallback = 0
                i += 1
                continue
            if b == 0x7D:  # }
                if not stack:
                    raise UnbalancedGroup(i, "unexpected '}'")
                state = stack.pop()
                self.fallback = 0
                i += 1
                if not stack:
                    break
                continue
            if not stack:
                i += 1
                continue
            if b == 0x5C:  # backslash
                i = self.control(i, state, stack)
                continue
            if b in (0x0D, 0x0A):
                i += 1
                continue
            if b < 0x80:
                self.emit_char(chr(b), state)
            else:
                self.emit_char(self.decode_byte(b), state)
            i += 1
        if stack:
            raise UnbalancedGroup(n, f"{len(stack)} unclosed group(s)")
        self.end_row()
        self.flush_table()
        return self.tables

    def control(self, i: int, state: _GroupState, stack: list[_GroupState]) -> int:
        data = self.data
        n = len(data)
        j = i + 1
        if j >= n:
            return n
        c = data[j]
        if not (0x41 <= c <= 0x5A or 0x61 <= c <= 0x7A):
            # control symbol
            sym = chr(c)
            if sym == "'":
                hexpart = data[j + 1:j + 3]
                try:
                    byte = int(hexpart.decode("ascii"), 16)
                except (ValueError, UnicodeDecodeError):
                    return j + 1
                self.emit_char(self.decode_byte(byte), state)
                return j + 3
            if sym in "\\{}":
                self.emit_char(sym, state)
            elif sym == "~":
                self.emit_char("\u00a0", state)
            elif sym == "_":
                self.emit_char("-", state)
            elif sym == "*":
                state.skip = True
            elif sym in "\r\n":
                self.emit("\n", state)
            return j + 1

        k = j
        while k < n and (0x41 <= data[k] <= 0x5A or 0x61 <= data[k] <= 0x7A):
            k += 1
        word = data[j:k].decode("ascii")
        param = None
        m = k
        if m < n and data[m] == 0x2D and m + 1 < n and 0x30 <= data[m + 1] <= 0x39:
            m += 1
        while m < n and 0x30 <= data[m] <= 0x39 and m - k < 12:
            m += 1
        if m > k and data[k:m] != b"-":
            param = int(data[k:m].decode("ascii"))
        if m < n and data[m] == 0x20:
            m += 1
        return self.word(word, param, state, m)

    def word(self, word: str, param: int | None, state: _GroupState, nxt: int) -> int:
        if word in _SKIP_DESTINATIONS:
            state.skip = True
            return nxt
        if word == "bin":
            return nxt + max(param or 0, 0)
        if word == "ansicpg" and param:
            try:
                codecs.lookup(f"cp{param}")
                self.codec = f"cp{param}"
            except LookupError:
                pass
            return nxt
        if word == "uc":
            state.uc = max(param or 0, 0)
            return nxt
        if word == "u" and param is not None:
            self.emit_unicode(param, state)
            return nxt
        if state.skip:
            return nxt
        if word in ("trowd", "intbl"):
            self.start_row()
        elif word in ("cell", "nestcell"):
            if word == "nestcell":
                self.text.append(" ")
            else:
                self.end_cell()
        elif word == "row":
            self.end_row()
        elif word == "itap" and param is not None and param > 1:
            msg = f"nested table (itap {param}) flattened into enclosing cell"
            if msg not in self.table_warnings:
                self.table_warnings.append(msg)
                self.warnings.append(msg)
        elif word in ("par", "sect", "page"):
            if self.in_row:
                self.text.append("\n")
        elif word in _SYMBOL_WORDS:
            self.emit_char(_SYMBOL_WORDS[word], state)
        return nxt


def parse_rtf(data: bytes, source_path: str | None = None) -> list[RawTable]:
    """Split RTF into tables of raw cell text.

    Consecutive ``\\trowd ... \\row`` sequences form one table; visible text between
    rows starts a new one.
    """
    if isinstance(data, str):
        data = data.encode("latin-1", errors="replace")
    body = data.lstrip(_WS)
    if not body.startswith(b"{\\rtf"):
        raise NotRtf()
    offset = len(data) - len(body)
    parser = _Parser(body)
    try:
        tables = parser.run()
    except UnbalancedGroup as exc:
        raise UnbalancedGroup(exc.offset + offset, str(exc).split(": ", 1)[-1]) from None
    if source_path is not None:
        tables = [RawTable(t.rows, source_path, t.warnings) for t in tables]
    return tables


# -- text normalization -------------------------------------------------------

@dataclass(frozen=True)
class NormalizeOptions:
    casefold: bool = False
    unicode_fallback: bool = False


def _normalize_once(text: str, opts: NormalizeOptions) -> str:
    text = unicodedata.normalize("NFC", text)
    if opts.casefold:
        text = unicodedata.normalize("NFC", text.casefold())
    text = " ".join(text.split())
    if opts.unicode_fallback:
        text = "".join(ch if ord(ch) < 128 else "?" for ch in text)
    return text


def normalize_text(raw: str, opts: NormalizeOptions | None = None) -> str:
    """Collapse whitespace, trim, and optionally case-fold and map non-ASCII to the RTF fallback '?'."""
    opts = opts or NormalizeOptions()
    cur = raw
    for _ in range(8):
        nxt = _normalize_once(cur, opts)
        if nxt == cur:
            break
        cur = nxt
    return cur


# -- numeric classification ---------------------------------------------------

class NumericKind(str, Enum):
    NONE = "NONE"
    SINGLE = "SINGLE"
    PAIRED = "PAIRED"


@dataclass(frozen=True)
class NumericExtraction:
    kind: NumericKind
    primary: float | None = None
    secondary: float | None = None


_NUM = r"[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[+-]?\.\d+"
_SINGLE_RE = re.compile(rf"^({_NUM})$", re.ASCII)
_PAIRED_RE = re.compile(rf"^({_NUM}) ?\( ?({_NUM}) ?%? ?\)$", re.ASCII)
_NONE = NumericExtraction(NumericKind.NONE)


def _to_float(token: str) -> float:
    return float(token.replace(",", ""))


def classify_cell_text(raw: str) -> NumericExtraction:
    m = _SINGLE_RE.match(raw)
    if m:
        return NumericExtraction(NumericKind.SINGLE, _to_float(m.group(1)))
    m = _PAIRED_RE.match(raw)
    if m:
        return NumericExtraction(NumericKind.PAIRED, _to_float(m.group(1)), _to_float(m.group(2)))
    return _NONE
