"""Python access to the clens core: CPL files, labels, metrics, manifests."""

from ._clens import (
    ClensError,
    confusion_scores,
    cpl_file_size,
    decode_cpl,
    encode_cpl,
    entropy,
    format_labels,
    format_metrics,
    merge_manifests,
    normalize_manifest,
    parse_labels,
    parse_metrics,
    read_cpl,
    run_cli,
    write_cpl,
)

__version__ = "0.1.0"

__all__ = [
    "ClensError",
    "confusion_scores",
    "cpl_file_size",
    "decode_cpl",
    "encode_cpl",
    "entropy",
    "format_labels",
    "format_metrics",
    "merge_manifests",
    "normalize_manifest",
    "parse_labels",
    "parse_metrics",
    "read_cpl",
    "run_cli",
    "write_cpl",
]
