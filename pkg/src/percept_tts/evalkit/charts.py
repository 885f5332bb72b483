"""Stacked horizontal bar chart of intelligibility histograms, emitted as SVG.

Hand-rolled SVG keeps the output byte-deterministic and lets tests measure
segment geometry textually.
"""

from pathlib import Path

from percept_tts.errors import DataError
from percept_tts.evalkit.intelligibility import ScoreHistogram

# score 1 (worst) .. score 5 (best)
SCORE_COLORS = ("#d73027", "#fc8d59", "#fee08b", "#91cf60", "#1a9850")

LABEL_WIDTH = 150
BAR_WIDTH = 440
BAR_HEIGHT = 24
ROW_GAP = 12
LEGEND_HEIGHT = 40
MARGIN = 10


def stacked_bar_chart(tables: list[tuple[str, ScoreHistogram]], out_path) -> Path:
    """Render one bar per system, five segments ordered score 1 to 5.

    Segment widths are proportional to counts. Returns the output path.
    """
    if not tables:
        raise DataError("stacked_bar_chart needs at least one system")
    for label, hist in tables:
        if hist.n_total == 0:
            raise DataError(f"system {label!r} has an empty histogram")

    width = LABEL_WIDTH + BAR_WIDTH + 2 * MARGIN
    height = LEGEND_HEIGHT + len(tables) * (BAR_HEIGHT + ROW_GAP) + MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
    ]

    # legend
    for i, color in enumerate(SCORE_COLORS):
        x = MARGIN + i * 80
        parts.append(
            f'<rect class="legend" x="{x}" y="{MARGIN}" width="14" height="14" fill="{color}"/>'
        )
        parts.append(f'<text x="{x + 18}" y="{MARGIN + 12}">score {i + 1}</text>')

    for row, (label, hist) in enumerate(tables):
        y = LEGEND_HEIGHT + row * (BAR_HEIGHT + ROW_GAP)
        parts.append(
            f'<text x="{MARGIN}" y="{y + BAR_HEIGHT - 7}">{_escape(label)}</text>'
        )
        counts = (hist.n1, hist.n2, hist.n3, hist.n4, hist.n5)
        x = float(LABEL_WIDTH + MARGIN)
        for score_idx, count in enumerate(counts):
            seg = BAR_WIDTH * count / hist.n_total
            if count > 0:
                parts.append(
                    f'<rect class="segment" data-system="{_escape(label)}" '
                    f'data-score="{score_idx + 1}" data-count="{count}" '
                    f'x="{x:.3f}" y="{y}" width="{seg:.3f}" height="{BAR_HEIGHT}" '
                    f'fill="{SCORE_COLORS[score_idx]}"/>'
                )
            x += seg

    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )
