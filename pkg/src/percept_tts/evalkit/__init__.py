"""Evaluation methodology: PER, MOS aggregation, significance tests, FCR/TMSR."""

from percept_tts.evalkit.charts import stacked_bar_chart
from percept_tts.evalkit.intelligibility import ScoreHistogram, fcr, tmsr
from percept_tts.evalkit.per import PerResult, levenshtein, per, per_breakdown
from percept_tts.evalkit.stats import MosSummary, mos_aggregate, paired_t_test

__all__ = [
    "MosSummary",
    "PerResult",
    "ScoreHistogram",
    "fcr",
    "levenshtein",
    "mos_aggregate",
    "paired_t_test",
    "per",
    "per_breakdown",
    "stacked_bar_chart",
    "tmsr",
]
