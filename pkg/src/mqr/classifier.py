"""Linear softmax readout trained with minibatch Adagrad.

One fully connected layer (weights (F, C), bias (C,)) on standardized
feature vectors, cross-entropy loss, Glorot-uniform initialization.
Reported accuracy is the smoothing rule: mean test accuracy over the last
`smoothing_window` epochs, averaged over `runs` independent restarts that
differ only in initialization and shuffling.
"""

from dataclasses import dataclass

import numpy as np

from .util import derive_seed

PROB_FLOOR = 1e-15


@dataclass(frozen=True)
class Standardizer:
    """Per-feature shift/scale fitted on training features. Zero-variance
    features get sigma 1 and are flagged in `degenerate`."""

    mu: np.ndarray
    sigma: np.ndarray
    degenerate: np.ndarray

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mu) / self.sigma


def fit_standardizer(features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty (N, F) matrix, got shape {x.shape}")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)  # population (1/N) normalization
    degenerate = sigma == 0.0
    sigma = np.where(degenerate, 1.0, sigma)
    return Standardizer(mu, sigma, degenerate)


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # (F, C)
    bias: np.ndarray     # (C,)


def glorot_limit(n_features, n_classes):
    """Half-width of the uniform init range for an (F, C) weight matrix."""
    return np.sqrt(6.0 / (n_features + n_classes))


def forward(model, features):
    """Class probabilities for one feature vector (F,) or a batch (B, F)."""
    logits = np.asarray(features, dtype=np.float64) @ model.weights + model.bias
    logits -= logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def predict(model, features):
    """Argmax class labels; ties resolve to the lowest class index."""
    logits = np.asarray(features, dtype=np.float64) @ model.weights + model.bias
    return np.argmax(logits, axis=-1)


def loss_and_gradient(model, features, onehot):
    """Mean cross-entropy over the batch and its exact gradient.

    Probabilities are clamped at 1e-15 before the log; the gradient uses the
    unclamped softmax identity (yhat - y).
    """
    features = np.asarray(features, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if features.ndim != 2 or onehot.shape != (features.shape[0], model.bias.size):
        raise ValueError(
            f"shape mismatch: features {features.shape}, onehot {onehot.shape}")
    batch = features.shape[0]
    probs = forward(model, features)
    loss = float(-np.mean(np.sum(onehot * np.log(np.maximum(probs, PROB_FLOOR)), axis=1)))
    diff = probs - onehot
    grad_w = features.T @ diff / batch
    grad_b = diff.mean(axis=0)
    return loss, grad_w, grad_b


def adagrad_step(model, accumulators, grads, learning_rate, epsilon):
    """One in-place Adagrad update: accumulate squared gradients, scale the
    step by 1 / (sqrt(accumulator) + epsilon)."""
    acc_w, acc_b = accumulators
    grad_w, grad_b = grads
    acc_w += grad_w * grad_w
    acc_b += grad_b * grad_b
    model.weights -= learning_rate * grad_w / (np.sqrt(acc_w) + epsilon)
    model.bias -= learning_rate * grad_b / (np.sqrt(acc_b) + epsilon)


@dataclass
class TrainConfig:
    learning_rate: float = None  # resolved by feature count when None
    epochs: int = 100
    batch_size: int = 100
    runs: int = 3
    smoothing_window: int = 20
    seed: int = 0
    adagrad_epsilon: float = 1e-7
    adagrad_init_accumulator: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.runs < 1:
            raise ValueError("epochs, batch_size and runs must be >= 1")
        if not 1 <= self.smoothing_window <= self.epochs:
            raise ValueError(
                f"smoothing_window must be in 1..{self.epochs}, got {self.smoothing_window}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class RunResult:
    per_run_epoch_accuracies: np.ndarray  # (runs, epochs)
    per_run_epoch_losses: np.ndarray      # (runs, epochs)
    eta: float
    final_losses: np.ndarray              # (runs,)
    config_descriptor: str


def smoothed_accuracy(accuracies, window):
    """Mean of the last `window` per-epoch accuracies of each run, averaged
    over runs."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected (runs, epochs), got shape {a.shape}")
    epochs = a.shape[1]
    if not 1 <= window <= epochs:
        raise ValueError(f"window must be in 1..{epochs}, got {window}")
    return float(np.mean(a[:, epochs - window:].mean(axis=1)))


def _check_labels(labels, n_classes, what):
    if labels.ndim != 1:
        raise ValueError(f"{what} labels must be a vector, got shape {labels.shape}")
    if labels.size and not (0 <= labels.min() and labels.max() < n_classes):
        raise ValueError(f"{what} labels outside 0..{n_classes - 1}")


def train(train_features, train_labels, test_features, test_labels, config,
          n_classes=None, descriptor=""):
    """Full training protocol: `runs` restarts of `epochs` epochs of
    shuffled minibatch Adagrad, test accuracy recorded after every epoch.

    Run u uses the RNG stream derive_seed(config.seed, "run", u) for both
    initialization and shuffling, so results are independent of how runs
    are scheduled.
    """
    train_features = np.asarray(train_features, dtype=np.float64)
    test_features = np.asarray(test_features, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    if config.learning_rate is None:
        raise ValueError("learning_rate is unset")
    if train_features.ndim != 2 or test_features.ndim != 2:
        raise ValueError("features must be (N, F) matrices")
    n_train, n_features = train_features.shape
    if test_features.shape[1] != n_features:
        raise ValueError(
            f"train has {n_features} features, test has {test_features.shape[1]}")
    if n_classes is None:
        n_classes = int(max(train_labels.max(), test_labels.max())) + 1
    _check_labels(train_labels, n_classes, "train")
    _check_labels(test_labels, n_classes, "test")

    eye = np.eye(n_classes, dtype=np.float64)
    accuracies = np.zeros((config.runs, config.epochs))
    losses = np.zeros((config.runs, config.epochs))
    for u in range(config.runs):
        rng = np.random.default_rng(derive_seed(config.seed, "run", u))
        limit = glorot_limit(n_features, n_classes)
        model = SoftmaxModel(
            weights=rng.uniform(-limit, limit, size=(n_features, n_classes)),
            bias=np.zeros(n_classes),
        )
        acc_w = np.full((n_features, n_classes), config.adagrad_init_accumulator)
        acc_b = np.full(n_classes, config.adagrad_init_accumulator)
        for e in range(config.epochs):
            perm = rng.permutation(n_train)
            total = 0.0
            for start in range(0, n_train, config.batch_size):
                idx = perm[start:start + config.batch_size]
                loss, grad_w, grad_b = loss_and_gradient(
                    model, train_features[idx], eye[train_labels[idx]])
                adagrad_step(model, (acc_w, acc_b), (grad_w, grad_b),
                             config.learning_rate, config.adagrad_epsilon)
                total += loss * idx.size
            losses[u, e] = total / n_train
            accuracies[u, e] = float(np.mean(predict(model, test_features) == test_labels))
    eta = smoothed_accuracy(accuracies, config.smoothing_window)
    return RunResult(
        per_run_epoch_accuracies=accuracies,
        per_run_epoch_losses=losses,
        eta=eta,
        final_losses=losses[:, -1].copy(),
        config_descriptor=descriptor,
    )
