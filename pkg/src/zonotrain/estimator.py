"""Scikit-learn style front door for robust training.

RobustClassifier wraps architecture construction, combined-loss training,
and sound verification behind the familiar fit/predict/score surface, so
the engine composes with sklearn tooling (grid search, pipelines) without
touching graphs or domains directly.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .architectures import build_architecture
from .errors import ConfigError
from .model_io import Dataset
from .training import DOMAINS, TrainConfig, evaluate, train


class RobustClassifier(BaseEstimator, ClassifierMixin):
    """Classifier trained on the combined clean + worst-case-vertex loss.

    Parameters mirror TrainConfig; ``architecture`` picks the model family
    and ``input_shape`` overrides the per-example feature shape when X
    arrives flattened (required for the conv families).
    """

    def __init__(self, architecture="ffnn", input_shape=None, epochs=20,
                 batch_size=50, learning_rate=1e-3, lam=0.1, l2=0.01,
                 epsilon=0.1, property_kind="ball_demoted", domain="box",
                 adversary_kind="farthest_vertex", pgd_steps=20, seed=0,
                 data_range=(0.0, 1.0)):
        self.architecture = architecture
        self.input_shape = input_shape
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lam = lam
        self.l2 = l2
        self.epsilon = epsilon
        self.property_kind = property_kind
        self.domain = domain
        self.adversary_kind = adversary_kind
        self.pgd_steps = pgd_steps
        self.seed = seed
        self.data_range = data_range

    def _config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, lam=self.lam, l2=self.l2,
            epsilon=self.epsilon, property_kind=self.property_kind,
            domain=self.domain, adversary_kind=self.adversary_kind,
            seed=self.seed, pgd_steps=self.pgd_steps,
        ).validate()

    def _shape_X(self, X):
        shape = self.input_shape_
        if X.shape[1:] == shape:
            return X
        if int(np.prod(X.shape[1:])) != int(np.prod(shape)):
            raise ConfigError(
                f"X features {X.shape[1:]} incompatible with input shape {shape}")
        return X.reshape((-1,) + shape)

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        cfg = self._config()
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigError("need at least 2 classes in y")
        self.input_shape_ = (tuple(self.input_shape) if self.input_shape is not None
                             else tuple(X.shape[1:]))
        X = self._shape_X(X)
        self.model_ = build_architecture(
            self.architecture, self.input_shape_, len(self.classes_), seed=self.seed)
        n_eval = min(len(y_idx), 256)
        data = Dataset(X, y_idx, X[:n_eval], y_idx[:n_eval],
                       classes=len(self.classes_), data_range=self.data_range,
                       name="fit")
        metrics, history = train(self.model_, data, cfg)
        self.train_metrics_ = metrics
        self.history_ = history
        self.n_features_in_ = int(np.prod(self.input_shape_))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        return self.model_.predict_logits(self._shape_X(X))

    def _label_index(self, y):
        y_idx = np.searchsorted(self.classes_, y)
        y_idx = np.clip(y_idx, 0, len(self.classes_) - 1)
        if not np.array_equal(self.classes_[y_idx], y):
            raise ConfigError("y contains labels unseen during fit")
        return y_idx

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[self.decision_function(X).argmax(axis=1)]

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def verify(self, X, y):
        """Per-example soundly-verified flags for the configured property.

        True means no point in the property's input region can change the
        network's answer away from y (per-class output bounds separate).
        """
        check_is_fitted(self, "model_")
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        from .training import _verify_flags
        y_idx = self._label_index(y)
        susceptible, _ = _verify_flags(self.model_, self._shape_X(X), y_idx,
                                       self._config())
        return ~susceptible

    def evaluate(self, X, y):
        """Test / PGD / Verify error percentages on (X, y)."""
        check_is_fitted(self, "model_")
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        y_idx = self._label_index(y)
        X = self._shape_X(X)
        data = Dataset(X[:0], y_idx[:0], X, y_idx, classes=len(self.classes_),
                       data_range=self.data_range, name="eval")
        return evaluate(self.model_, data, self._config())
