"""Error and prediction metrics."""
import numpy as np

from ..errors import DimensionError, UndefinedMetricError
from ..model import l1_norm, l2_norm


def estimation_errors(beta_hat, beta_star):
    """(||beta_hat - beta*||_1, ||beta_hat - beta*||_2)."""
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    beta_star = np.asarray(getattr(beta_star, "beta_star", beta_star), dtype=np.float64)
    if beta_hat.shape != beta_star.shape:
        raise DimensionError(f"shapes {beta_hat.shape} and {beta_star.shape}")
    diff = beta_hat - beta_star
    return l1_norm(diff), l2_norm(diff)


def _paired(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise DimensionError(f"shapes {pred.shape} and {true.shape}")
    if pred.size == 0:
        raise DimensionError("metrics need at least one observation")
    return pred, true


def normalized_mse(pred_y, true_y):
    """sum (yhat - y)^2 / sum (y - mean y)^2."""
    pred, true = _paired(pred_y, true_y)
    denom = float(np.sum((true - true.mean()) ** 2))
    if denom == 0.0:
        raise UndefinedMetricError("normalized MSE is undefined for constant targets")
    return float(np.sum((pred - true) ** 2)) / denom


def classification_error(pred_labels, true_labels):
    """Fraction of sign disagreements; a zero prediction counts as +1."""
    pred, true = _paired(pred_labels, true_labels)
    return float(np.mean(np.where(pred >= 0, 1.0, -1.0) != np.where(true >= 0, 1.0, -1.0)))


def test_metric(task, beta, shard):
    """Normalized MSE for regression, classification error otherwise."""
    scores = shard.xs @ beta
    if task == "regression":
        return normalized_mse(scores, shard.ys)
    return classification_error(scores, shard.ys)
