"""Built-in process and loss functions."""

from .cf import (
    CollaborativeFiltering,
    cf_predict_loss,
    envelope_gradient,
    make_cf_test,
    ridge_user,
    user_objective,
)
from .lda import LDA, corpus_elements, lda_predictive_loglik, topic_probabilities
from .logreg import MulticlassLogistic, lr_gradient, lr_loss
from .sgd import (
    Ball,
    DenseSGD,
    Quadratic,
    SparseRegSGD,
    TheoryParams,
    WeightView,
    sgd_process_dense,
    sgd_process_sparse_reg,
    weighted_average,
)
from .stepsize import AdaGrad, Constant, InvSqrt, InvT, stepsize_sum

__all__ = [
    "AdaGrad",
    "Ball",
    "CollaborativeFiltering",
    "Constant",
    "DenseSGD",
    "InvSqrt",
    "InvT",
    "LDA",
    "MulticlassLogistic",
    "Quadratic",
    "SparseRegSGD",
    "TheoryParams",
    "WeightView",
    "cf_predict_loss",
    "corpus_elements",
    "envelope_gradient",
    "lda_predictive_loglik",
    "lr_gradient",
    "lr_loss",
    "make_cf_test",
    "ridge_user",
    "sgd_process_dense",
    "sgd_process_sparse_reg",
    "stepsize_sum",
    "topic_probabilities",
    "user_objective",
    "weighted_average",
]
