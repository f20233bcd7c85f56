"""Slow, obviously-correct reference implementations used to check the library."""

from __future__ import annotations

import random

from tflparity.ir.model import Alignment, Cell, CellGrid, CellType, Dimension, ElementType, StructureEntry


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return 1.0 if longest == 0 else 1.0 - levenshtein(a, b) / longest


def brute_force_cycles(nodes, edges) -> set[tuple]:
    """Every elementary cycle via DFS from each start node over higher-ranked nodes only."""
    order = {n: i for i, n in enumerate(sorted(nodes))}
    succ = {n: sorted({v for u, v in edges if u == n}) for n in nodes}
    found = set()

    def walk(start, node, path, seen):
        for nxt in succ[node]:
            if nxt == start:
                found.add(tuple(path))
            elif nxt not in seen and order[nxt] > order[start]:
                walk(start, nxt, path + [nxt], seen | {nxt})

    for s in sorted(nodes):
        walk(s, s, [s], {s})
    return found


def random_grid(rng: random.Random, report_id: str = "RPT", execution_id: str = "EX1") -> CellGrid:
    """A small valid grid: header row, stub column, mixed numeric and text body."""
    n_rows, n_cols = rng.randint(2, 9), rng.randint(2, 7)
    structure = [StructureEntry(report_id, execution_id, Dimension.ROW, 1, "hdr", 1, 0, Alignment.CENTER, 1,
                                ElementType.COLUMN_HEADER)]
    for r in range(2, n_rows + 1):
        et = rng.choice([ElementType.DATA_ROW, ElementType.DATA_ROW, ElementType.TOTAL_ROW])
        structure.append(StructureEntry(report_id, execution_id, Dimension.ROW, r, f"row {r}", r,
                                        rng.randint(0, 2), Alignment.LEFT, 1, et))
    for c in range(1, n_cols + 1):
        structure.append(StructureEntry(report_id, execution_id, Dimension.COL, c, f"col {c}", c, 0,
                                        Alignment.LEFT if c == 1 else Alignment.CENTER, 1,
                                        ElementType.ROW_HEADER if c == 1 else ElementType.DATA_ROW))
    cells = []
    for r in range(1, n_rows + 1):
        for c in range(1, n_cols + 1):
            if rng.random() < 0.15:
                continue  # sparse grids are valid
            if r == 1:
                cells.append(Cell(report_id, execution_id, r, c, None, f"Arm {c}", CellType.HEADER))
            elif c == 1:
                cells.append(Cell(report_id, execution_id, r, c, None, f"Label {r}", CellType.LABEL))
            else:
                v = rng.randint(0, 300)
                cells.append(Cell(report_id, execution_id, r, c, float(v), str(v), CellType.INTEGER))
    return CellGrid(tuple(cells), tuple(structure))
