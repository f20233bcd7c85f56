"""Lexical smoke check for generated SAS programs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from tflparity.analyzer.lexer import line_of, mask_literals, mask_nrstr, strip_comments

AUTOMATIC_VARS = frozenset(v.lower() for v in """
SYSDATE SYSDATE9 SYSDAY SYSTIME SYSUSERID SYSERR SYSERRORTEXT SYSWARNINGTEXT SYSCC SYSRC SYSMACRONAME SYSDSN
SYSLAST SYSJOBID SYSSCP SYSSCPL SYSVER SYSVLONG SYSINFO SYSPARM SYSPROCESSID SYSPROCESSNAME SYSFILRC SYSLIBRC
SYSLCKRC SYSMSG SYSNOBS SYSENCODING SYSHOSTNAME SYSINDEX SYSSITE SYSTCPIPHOSTNAME SQLOBS SQLRC SQLOOPS SQLXRC
SQLEXITCODE SYSODSPATH SYSPBUFF SYSMENV SYSENV SYSBUFFR SYSCMD SYSDEVIC SYSDMG SYSFILRC SYSSTARTID SYSSTARTNAME
""".split())


@dataclass(frozen=True)
class Finding:
    line: int
    kind: str  # PAREN | MACRO_PAIRING | UNRESOLVED
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.kind}: {self.message}"


_LET = re.compile(r"%let\s+([A-Za-z_]\w*)\s*=", re.IGNORECASE)
_DO = re.compile(r"%do\s+([A-Za-z_]\w*)\s*=", re.IGNORECASE)
_SCOPE = re.compile(r"%(?:global|local)\b([^;]*);", re.IGNORECASE)
_MACRO = re.compile(r"%macro\s+([A-Za-z_]\w*)\s*(\(([^)]*)\))?", re.IGNORECASE)
_MEND = re.compile(r"%mend\b", re.IGNORECASE)
_REF = re.compile(r"(?<!&)&([A-Za-z_]\w*)")


def declared_symbols(code: str) -> set[str]:
    names = {m.group(1).lower() for m in _LET.finditer(code)}
    names |= {m.group(1).lower() for m in _DO.finditer(code)}
    for m in _SCOPE.finditer(code):
        names |= {v.lower() for v in m.group(1).split()}
    for m in _MACRO.finditer(code):
        for part in (m.group(3) or "").split(","):
            name = part.split("=", 1)[0].strip()
            if name:
                names.add(name.lower())
    return names


def syntax_check(program: str, known_symbols: Iterable[str] = ()) -> list[Finding]:
    """Balanced parentheses, ``%macro``/``%mend`` pairing and resolvable ``&name`` references."""
    no_comments = strip_comments(program)
    code = mask_nrstr(mask_literals(no_comments))
    findings: list[Finding] = []

    opens: list[int] = []
    for i, ch in enumerate(code):
        if ch == "(":
            opens.append(i)
        elif ch == ")":
            if opens:
                opens.pop()
            else:
                findings.append(Finding(line_of(code, i), "PAREN", "unmatched ')'"))
    findings += [Finding(line_of(code, i), "PAREN", "unmatched '('") for i in opens]

    depth: list[int] = []
    events = sorted([(m.start(), "open") for m in _MACRO.finditer(code)]
                    + [(m.start(), "close") for m in _MEND.finditer(code)])
    for off, kind in events:
        if kind == "open":
            depth.append(off)
        elif depth:
            depth.pop()
        else:
            findings.append(Finding(line_of(code, off), "MACRO_PAIRING", "%mend without %macro"))
    findings += [Finding(line_of(code, off), "MACRO_PAIRING", "%macro without %mend") for off in depth]

    known = {s.lower() for s in known_symbols} | declared_symbols(code) | AUTOMATIC_VARS
    # references resolve inside double quotes too, so scan with those kept
    refs_view = mask_nrstr(mask_literals(no_comments, keep_double=True))
    seen: set[tuple[int, str]] = set()
    for m in _REF.finditer(refs_view):
        name = m.group(1)
        ln = line_of(refs_view, m.start())
        if name.lower() not in known and (ln, name.lower()) not in seen:
            seen.add((ln, name.lower()))
            findings.append(Finding(ln, "UNRESOLVED", f"&{name} does not resolve"))
    return sorted(findings, key=lambda f: (f.line, f.kind, f.message))
