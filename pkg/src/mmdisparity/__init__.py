"""Cross-lingual performance disparity of text-only and multimodal classifiers."""

from .data import LANGUAGES, Language, TaskSpec, get_task
from .metrics import compute_metrics, rmsd_en, trend_slope

__all__ = ["LANGUAGES", "Language", "TaskSpec", "get_task", "compute_metrics", "rmsd_en", "trend_slope"]
__version__ = "0.1.0"
