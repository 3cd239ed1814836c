"""Classifiers for telling AI-generated 32×32 images from real ones: an
HOG + RBF-SVM baseline, a small CNN and desk-scale residual, VGG-style and
dense networks, all on a numpy reverse-mode tensor engine."""
from .dataset import DatasetSplit, ImageRecord, Label, ingest_cifake, stratified_subset
from .evaluation import ConfusionMatrix, classification_report, confusion, pr_auc, roc_auc
from .models import ModelSpec, build_custom_cnn, build_model, replace_head
from .optim import StepLrSchedule, TrainConfig, step_lr, train
from .svm import SvmConfig, smo_train

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix", "DatasetSplit", "ImageRecord", "Label", "ModelSpec", "StepLrSchedule", "SvmConfig",
    "TrainConfig", "build_custom_cnn", "build_model", "classification_report", "confusion", "ingest_cifake",
    "pr_auc", "replace_head", "roc_auc", "smo_train", "step_lr", "stratified_subset", "train",
]
