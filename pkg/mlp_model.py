#!/usr/bin/env python3
"""
Training of the 20-10 MLP classifier used in the experiments
"""

import logging
import warnings
from typing import Any, Dict, Optional

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier

from classifiers import MlpModel
from config import Config
from data_processor import Dataset

logger = logging.getLogger(__name__)


class MlpTrainer:
    """Plain mini-batch SGD training of a ReLU MLP with a single logistic output."""

    def __init__(self, seed: int = 0, epochs: int = Config.EPOCHS, batch_size: int = Config.BATCH_SIZE):
        self.seed = seed
        self.model: Optional[MlpModel] = None
        self.model_metrics: Dict[str, Any] = {}

        # No momentum, no weight decay, no early stopping: fixed-rate SGD for
        # exactly `epochs` passes over the data.
        self.mlp_params = {
            'hidden_layer_sizes': Config.HIDDEN_LAYERS,
            'activation': 'relu',
            'solver': 'sgd',
            'learning_rate': 'constant',
            'learning_rate_init': Config.LEARNING_RATE,
            'momentum': 0.0,
            'nesterovs_momentum': False,
            'alpha': 0.0,
            'batch_size': batch_size,
            'max_iter': epochs,
            'shuffle': True,
            'tol': 0.0,
            'n_iter_no_change': epochs + 1,
            'random_state': seed,
        }

    def train_model(self, train: Dataset, test: Optional[Dataset] = None) -> Dict[str, Any]:
        """Fit the network on ``train`` and report accuracies."""
        X, y = train.features, train.labels
        classes, counts = np.unique(y, return_counts=True)
        if classes.size < 2:
            raise ValueError(f"Training data contains a single class ({classes.tolist()}); need both labels")

        logger.info(f"Training MLP {list(Config.HIDDEN_LAYERS)} on {len(X)} rows, seed {self.seed}")
        if np.all(np.ptp(X, axis=0) == 0):
            logger.warning("All features are constant; falling back to the majority class")
            self.model = self._majority_model(X.shape[1], int(classes[np.argmax(counts)]))
            final_loss = None
        else:
            mlp = MLPClassifier(**self.mlp_params)
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', category=ConvergenceWarning)
                mlp.fit(X, y)
            self.model = MlpModel(mlp.coefs_, mlp.intercepts_, label_names=train.label_names)
            final_loss = float(mlp.loss_)

        self.model_metrics = {
            'train_accuracy': self.accuracy(train),
            'training_samples': len(X),
            'epochs': self.mlp_params['max_iter'],
            'batch_size': self.mlp_params['batch_size'],
            'seed': self.seed,
            'final_loss': final_loss,
        }
        if test is not None and len(test):
            self.model_metrics['test_accuracy'] = self.accuracy(test)

        logger.info(f"Train accuracy: {self.model_metrics['train_accuracy']:.4f}")
        if 'test_accuracy' in self.model_metrics:
            logger.info(f"Test accuracy: {self.model_metrics['test_accuracy']:.4f}")
        return self.model_metrics

    def accuracy(self, dataset: Dataset) -> float:
        if self.model is None:
            raise ValueError("Model must be trained before computing accuracy")
        return float(np.mean(self.model.predict(dataset.features) == dataset.labels))

    @staticmethod
    def _majority_model(n_features: int, label: int) -> MlpModel:
        hidden = Config.HIDDEN_LAYERS
        sizes = [n_features, *hidden, 1]
        weights = [np.zeros((sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)]
        biases = [np.zeros(s) for s in sizes[1:]]
        biases[-1][0] = 1.0 if label == 1 else -1.0
        return MlpModel(weights, biases)


def train_mlp(dataset: Dataset, seed: int = 0, epochs: int = Config.EPOCHS,
              batch_size: int = Config.BATCH_SIZE, test: Optional[Dataset] = None) -> MlpModel:
    """Train a 20-10 MLP; deterministic for a fixed seed."""
    trainer = MlpTrainer(seed=seed, epochs=epochs, batch_size=batch_size)
    metrics = trainer.train_model(dataset, test)
    trainer.model.training_metrics = metrics
    return trainer.model
