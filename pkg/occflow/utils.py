"""
occflow/utils.py  –  Small formatting helpers shared by the library and the CLI.
"""

from __future__ import annotations

from typing import Any, Dict


# ── Text helpers ─────────────────────────────────────────────────────────────────
def trunc(text: Any, length: int = 1024) -> str:
    s = str(text) if text else ""
    return s if len(s) <= length else s[: length - 3] + "..."


def fmt_bytes(num: int) -> str:
    if num < 0:
        return "n/a"
    if num >= 1024 ** 2:
        return f"{num / 1024 ** 2:.1f} MB"
    if num >= 1024:
        return f"{num / 1024:.1f} KB"
    return f"{num} B"


def fmt_count(num: int) -> str:
    if num >= 1_000_000:
        return f"{num / 1_000_000:.2f}M"
    if num >= 1_000:
        return f"{num / 1_000:.1f}K"
    return str(num)


def fmt_table(rows: Dict[str, Any], width: int = 28) -> str:
    return "\n".join(f"  {trunc(k, width):<{width}} {v}" for k, v in rows.items())
