"""Data ingestion: IDX/NPY sources, binary indicator tasks, synthetic corpora."""

from .idx import (
    read_idx_images,
    read_idx_labels,
    write_idx_images,
    write_idx_labels,
)
from .sources import SOURCES, ImageCollection, load_source
from .synthetic import (
    DIGIT_CLASSES,
    FAMILY_CLASSES,
    FASHION_CLASSES,
    QUICKDRAW_CLASSES,
    blob_collection,
    generate_family,
    render_sample,
    write_corpus,
)
from .tasks import (
    DEFAULT_FRACTIONS,
    SPLIT_NAMES,
    DataSplit,
    TaskSpec,
    make_binary_task,
    materialize,
)

__all__ = [
    "DEFAULT_FRACTIONS",
    "DIGIT_CLASSES",
    "FAMILY_CLASSES",
    "FASHION_CLASSES",
    "QUICKDRAW_CLASSES",
    "SOURCES",
    "SPLIT_NAMES",
    "DataSplit",
    "ImageCollection",
    "TaskSpec",
    "blob_collection",
    "generate_family",
    "load_source",
    "make_binary_task",
    "materialize",
    "read_idx_images",
    "read_idx_labels",
    "render_sample",
    "write_corpus",
    "write_idx_images",
    "write_idx_labels",
]
