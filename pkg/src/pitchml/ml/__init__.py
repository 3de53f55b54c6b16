"""Small numpy learners: clustering, linear models, nearest neighbours and an MLP."""
from .cluster import GmmModel, KMeansModel, fit_gmm, fit_kmeans
from .knn import KnnModel, knn_predict, knn_regress
from .linear import LinRegModel, LogRegModel, fit_linreg, fit_logreg
from .mlp import MlpModel, fit_mlp
from .serialize import FORMAT_VERSION, model_from_dict, model_to_dict
from .standardize import Standardizer, standardize_apply, standardize_fit

__all__ = [
    "FORMAT_VERSION", "GmmModel", "KMeansModel", "KnnModel", "LinRegModel", "LogRegModel",
    "MlpModel", "Standardizer", "fit_gmm", "fit_kmeans", "fit_linreg", "fit_logreg", "fit_mlp",
    "knn_predict", "knn_regress", "model_from_dict", "model_to_dict", "standardize_apply",
    "standardize_fit",
]
