from .augment import augment, augment_input, pair_rng
from .dataset import Dataset, Lesion, PatientRecord, dataset_digest, load_dataset, pair_keys_from_headers, save_dataset
from .preprocess import foreground_bbox, preprocess_dataset, preprocess_mask, preprocess_slice
from .split import split_patients
from .synth import SynthParams, change_mask_volume, generate_synthetic

__all__ = [
    "Dataset",
    "Lesion",
    "PatientRecord",
    "SynthParams",
    "augment",
    "augment_input",
    "change_mask_volume",
    "dataset_digest",
    "foreground_bbox",
    "generate_synthetic",
    "load_dataset",
    "pair_keys_from_headers",
    "pair_rng",
    "preprocess_dataset",
    "preprocess_mask",
    "preprocess_slice",
    "save_dataset",
    "split_patients",
]
