"""Source printer attribution from camera-acquired text documents.

Pipeline: page image -> per-letter two-channel patches (native letter +
printer noise residual) -> compact CNN -> letter votes -> page decision,
evaluated under a deterministic 5x2 cross-validation protocol. A
synthetic print-and-capture simulator makes the whole pipeline testable
without any physical dataset.
"""

__version__ = "0.1.0"

from .cache import PatchSet, read_cache, write_cache
from .evaluate import ConfusionMatrix, LetterPrediction, predict_letters, score, vote_page
from .folds import FoldPlan, make_fold_plan, split_validation
from .glyphs import ExtractOptions, GlyphImage, TemplateClassifier, extract_glyphs, otsu_threshold
from .images import DocumentImage, load_image, save_image, to_grayscale
from .model import Model
from .preprocess import (
    ResidualParams,
    TwoChannelPatch,
    assemble_patch,
    glyph_to_patch,
    ideal_image,
    noise_residual,
    normalize_patch,
    segment_regions,
)
from .synth import CameraProfile, PageSpec, PrinterProfile, apply_camera, apply_printer, generate_corpus, render_page
from .train import RunRecord, TrainConfig, aggregate_stats, train_fold

__all__ = [
    "CameraProfile",
    "ConfusionMatrix",
    "DocumentImage",
    "ExtractOptions",
    "FoldPlan",
    "GlyphImage",
    "LetterPrediction",
    "Model",
    "PageSpec",
    "PatchSet",
    "PrinterProfile",
    "ResidualParams",
    "RunRecord",
    "TemplateClassifier",
    "TrainConfig",
    "TwoChannelPatch",
    "aggregate_stats",
    "apply_camera",
    "apply_printer",
    "assemble_patch",
    "extract_glyphs",
    "generate_corpus",
    "glyph_to_patch",
    "ideal_image",
    "load_image",
    "make_fold_plan",
    "noise_residual",
    "normalize_patch",
    "otsu_threshold",
    "predict_letters",
    "read_cache",
    "render_page",
    "save_image",
    "score",
    "segment_regions",
    "split_validation",
    "to_grayscale",
    "train_fold",
    "vote_page",
    "write_cache",
]
