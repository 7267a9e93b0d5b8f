"""From-scratch classifiers: Gini decision tree, random forest, RBF SVM (SMO)
and a batch-normalized MLP, each behind train_*/predict."""

from .models import (
    Dataset,
    TrainedModel,
    decision_scores,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
    train_dt,
    train_mlp,
    train_rf,
    train_svm_rbf,
)
from .standardize import Standardizer, standardize_apply, standardize_fit
from .tree import gini

__all__ = [
    "Dataset", "TrainedModel", "Standardizer", "decision_scores", "gini", "load_model",
    "predict", "predict_proba", "save_model", "standardize_apply", "standardize_fit",
    "train", "train_dt", "train_mlp", "train_rf", "train_svm_rbf",
]
