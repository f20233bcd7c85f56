"""Lexical preprocessing of SAS source: comment stripping and literal masking.

Both transforms keep every newline and column so that offsets and line numbers
computed on the output still point at the original text.
"""

from __future__ import annotations

import re


def _blank(text: str) -> str:
    return "".join(ch if ch == "\n" else " " for ch in text)


def strip_comments(src: str) -> str:
    """Replace ``/* */``, ``*...;`` and ``%*...;`` comments with spaces.

    Quoted literals are respected: comment markers inside quotes stay, quotes
    inside comments are ignored. A ``*`` only opens a comment at the start of
    a statement (after ``;`` or at the beginning of the text).
    """
    out: list[str] = []
    i, n = 0, len(src)
    stmt_start = True
    while i < n:
        ch = src[i]
        if ch == "/" and src.startswith("/*", i):
            j = src.find("*/", i + 2)
            j = n if j < 0 else j + 2
            out.append(_blank(src[i:j]))
            i = j
            continue
        if ch in "'\"":
            j = i + 1
            while j < n:
                if src[j] == ch:
                    if j + 1 < n and src[j + 1] == ch:  # doubled quote escape
                        j += 2
                        continue
                    break
                j += 1
            j = min(j + 1, n)
            out.append(src[i:j])
            i = j
            stmt_start = False
            continue
        if stmt_start and (ch == "*" or (ch == "%" and src.startswith("%*", i))):
            j = src.find(";", i)
            j = n if j < 0 else j + 1
            out.append(_blank(src[i:j]))
            i = j
            stmt_start = True
            continue
        out.append(ch)
        if ch == ";":
            stmt_start = True
        elif not ch.isspace():
            stmt_start = False
        i += 1
    return "".join(out)


def mask_literals(src: str, keep_double: bool = False) -> str:
    """Blank the contents of quoted literals, leaving the quotes in place.

    With ``keep_double`` the body of double-quoted strings is kept, since SAS
    resolves macro references there.
    """
    out: list[str] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch not in "'\"":
            out.append(ch)
            i += 1
            continue
        j = i + 1
        while j < n:
            if src[j] == ch:
                if j + 1 < n and src[j + 1] == ch:
                    j += 2
                    continue
                break
            j += 1
        body = src[i + 1:j]
        out.append(ch)
        out.append(body if (keep_double and ch == '"') else _blank(body))
        if j < n:
            out.append(ch)
        i = j + 1
    return "".join(out)


def line_of(text: str, offset: int) -> int:
    """1-based line number of ``offset``."""
    return text.count("\n", 0, offset) + 1


_NRSTR = re.compile(r"%nrstr\s*\(", re.IGNORECASE)


def mask_nrstr(src: str) -> str:
    """Blank the argument of ``%nrstr(...)`` so quoted macro text is not scanned as code."""
    out = list(src)
    for m in _NRSTR.finditer(src):
        depth, j = 1, m.end()
        while j < len(src) and depth:
            if src[j] == "(":
                depth += 1
            elif src[j] == ")":
                depth -= 1
                if not depth:
                    break
            if src[j] != "\n":
                out[j] = " "
            j += 1
    return "".join(out)


def code_view(src: str) -> str:
    """Source with comments, literals and ``%nrstr`` arguments blanked."""
    return mask_nrstr(mask_literals(strip_comments(src)))
