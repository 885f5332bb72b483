"""Plain-text metric report, one section per system."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from percept_tts.evalkit.intelligibility import ScoreHistogram, fcr, tmsr
from percept_tts.evalkit.per import PerResult
from percept_tts.evalkit.stats import MosSummary


@dataclass
class SystemReport:
    system_id: str
    mos_naturalness: Optional[MosSummary] = None
    per: Optional[PerResult] = None
    intelligibility: Optional[ScoreHistogram] = None
    extra: dict = field(default_factory=dict)


def _pct(value: Optional[float], decimals: int = 1) -> str:
    if value is None:
        return "n/a"
    return f"{100.0 * value:.{decimals}f}%"


def render_metric_report(reports: list[SystemReport]) -> str:
    lines = []
    for report in reports:
        lines.append(f"[system {report.system_id}]")
        if report.mos_naturalness is not None:
            summary = report.mos_naturalness
            lines.append(f"mos.mean = {summary.mean:.3f}")
            ci = "n/a" if summary.ci95_halfwidth is None else f"{summary.ci95_halfwidth:.3f}"
            lines.append(f"mos.ci95 = {ci}")
            lines.append(f"mos.n = {summary.n}")
        if report.per is not None:
            for name, value in (
                ("long", report.per.long_per),
                ("short", report.per.short_per),
                ("overall", report.per.overall_per),
            ):
                text = "n/a" if value is None else f"{value:.2f}%"
                lines.append(f"per.{name} = {text}")
        if report.intelligibility is not None:
            hist = report.intelligibility
            lines.append(
                "intelligibility.counts = "
                + " ".join(str(c) for c in (hist.n1, hist.n2, hist.n3, hist.n4, hist.n5))
            )
            lines.append(f"fcr = {_pct(fcr(hist))}")
            lines.append(f"tmsr = {_pct(tmsr(hist))}")
        for key, value in sorted(report.extra.items()):
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def write_metric_report(reports: list[SystemReport], out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(render_metric_report(reports), encoding="utf-8")
    return out_path
