#!/usr/bin/env python3
"""
JSON storage for MLP weights and the scaling parameters they were trained with
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from classifiers import MlpModel
from config import Config

logger = logging.getLogger(__name__)


class ModelStorage:
    """Reads and writes model weights files.

    Layout::

        {"schema_version": 1,
         "layers": [{"rows": k, "cols": 20, "weights": [...row-major...], "bias": [...]}, ...],
         "activations": ["relu", "relu", "logistic"],
         "label_names": ["0", "1"],
         "feature_names": [...], "scaler": {"min": [...], "max": [...]}, "metrics": {...}}
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def save_model(self, model: MlpModel, feature_names: Optional[Sequence[str]] = None,
                   scaler_min: Optional[np.ndarray] = None, scaler_max: Optional[np.ndarray] = None,
                   metrics: Optional[Dict[str, Any]] = None) -> Path:
        """Write the weights file; floats keep their exact binary value."""
        layers = []
        for w, b in zip(model.weights, model.biases):
            layers.append({
                'rows': int(w.shape[0]),
                'cols': int(w.shape[1]),
                'weights': [float(v) for v in w.reshape(-1)],
                'bias': [float(v) for v in b],
            })
        output = 'logistic' if model.weights[-1].shape[1] == 1 else 'argmax'
        payload: Dict[str, Any] = {
            'schema_version': Config.SCHEMA_VERSION,
            'layers': layers,
            'activations': [model.hidden_activation] * (len(layers) - 1) + [output],
            'label_names': list(model.label_names),
            'feature_names': list(feature_names) if feature_names is not None else None,
            'scaler': None,
            'metrics': metrics if metrics is not None else model.training_metrics,
        }
        if scaler_min is not None and scaler_max is not None:
            payload['scaler'] = {
                'min': [float(v) for v in scaler_min],
                'max': [float(v) for v in scaler_max],
            }

        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2)
        logger.info(f"Model saved to {self.path}")
        return self.path

    def load_model(self) -> Tuple[MlpModel, Dict[str, Any]]:
        """Read the weights file; returns the model and the remaining metadata."""
        if not os.path.exists(self.path):
            raise FileNotFoundError(f"Model file not found: {self.path}")
        with open(self.path, 'r', encoding='utf-8') as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"Model file is not valid JSON: {self.path}: {e}") from e

        try:
            weights, biases = [], []
            for i, layer in enumerate(payload['layers']):
                w = np.asarray(layer['weights'], dtype=float)
                if w.size != layer['rows'] * layer['cols']:
                    raise ValueError(f"Layer {i}: {w.size} weights for shape {layer['rows']}x{layer['cols']}")
                weights.append(w.reshape(layer['rows'], layer['cols']))
                biases.append(np.asarray(layer['bias'], dtype=float))
            activations = payload.get('activations') or ['relu']
            model = MlpModel(weights, biases, hidden_activation=activations[0],
                             label_names=payload.get('label_names', ['0', '1']))
        except KeyError as e:
            raise ValueError(f"Model file {self.path} is missing field {e}") from e

        model.training_metrics = payload.get('metrics') or {}
        logger.info(f"Model loaded from {self.path}: architecture {model.architecture}")
        return model, {
            'feature_names': payload.get('feature_names'),
            'scaler': payload.get('scaler'),
            'schema_version': payload.get('schema_version'),
        }

    def get_model_info(self) -> Dict[str, Any]:
        model, meta = self.load_model()
        return {
            'architecture': model.architecture,
            'feature_count': model.n_features,
            'metrics': model.training_metrics,
            **meta,
        }
