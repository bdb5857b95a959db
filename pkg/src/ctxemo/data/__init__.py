from .annotations import RAW_LABELS, AnnotationRecord, aggregate_annotations, annotation_scores
from .manifest import load_dataset, save_dataset
from .schema import (
    EMOTIC_CLASSES, FACE_DIM, GROUPWALK_CLASSES, IMAGE_CHANNELS, IMAGE_SIZE, N_JOINTS, BoundingBox, Dataset,
    DatasetError, DuplicateIdError, InvalidLabelsError, LabelVocabulary, MissingFileError, NonFiniteInputError,
    Sample, ShapeMismatchError, UnknownLabelError,
)
from .split import SplitError, split
from .synth import SignalPlan, synthesize_dataset
