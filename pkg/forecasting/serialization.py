"""
Model files, format version 1.

A model is one JSON object:

    {"format": "paynet-ensemble", "version": 1, "kind": "forest" | "boosted",
     "params": {...}, "seed": int, "schema_hash": str, "n_features": int,
     "base": float, "learning_rate": float, "train_loss": [float, ...],
     "trees": [node, ...]}

A node is {"value": v} for a leaf, or {"value": v, "feature": f,
"threshold": t, "left": node, "right": node} for a numeric split, with
"categories": [c, ...] in place of "threshold" for a categorical split.
Floats are written in shortest round-trip form, so a loaded model predicts
bit for bit like the saved one.
"""
import json
from typing import Any, Dict

from forecasting.trees import EnsembleModel, RegressionTree, TreeNode
from utils.errors import ModelError

FORMAT_NAME = 'paynet-ensemble'
FORMAT_VERSION = 1


def _node_to_dict(node: TreeNode) -> Dict[str, Any]:
    data: Dict[str, Any] = {'value': node.value}
    if node.is_leaf:
        return data
    data['feature'] = node.feature
    if node.categories is not None:
        data['categories'] = list(node.categories)
    else:
        data['threshold'] = node.threshold
    data['left'] = _node_to_dict(node.left)
    data['right'] = _node_to_dict(node.right)
    return data


def _node_from_dict(data: Dict[str, Any]) -> TreeNode:
    if 'feature' not in data:
        return TreeNode(value=float(data['value']))
    categories = data.get('categories')
    return TreeNode(
        value=float(data['value']),
        feature=int(data['feature']),
        threshold=float(data['threshold']) if categories is None else float('nan'),
        categories=tuple(float(c) for c in categories) if categories is not None else None,
        left=_node_from_dict(data['left']),
        right=_node_from_dict(data['right']),
    )


def model_to_dict(model: EnsembleModel) -> Dict[str, Any]:
    return {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'kind': model.kind,
        'params': model.params,
        'seed': model.seed,
        'schema_hash': model.schema_hash,
        'n_features': model.n_features,
        'base': model.base,
        'learning_rate': model.learning_rate,
        'train_loss': list(model.train_loss),
        'trees': [_node_to_dict(tree.root) for tree in model.trees],
    }


def model_from_dict(data: Dict[str, Any]) -> EnsembleModel:
    if data.get('format') != FORMAT_NAME:
        raise ModelError(f"not a model file: format {data.get('format')!r}")
    if data.get('version') != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {data.get('version')!r}")
    return EnsembleModel(
        kind=data['kind'],
        trees=[RegressionTree(_node_from_dict(t)) for t in data['trees']],
        base=float(data['base']),
        learning_rate=float(data['learning_rate']),
        params=dict(data['params']),
        seed=int(data['seed']),
        schema_hash=data['schema_hash'],
        n_features=int(data['n_features']),
        train_loss=[float(v) for v in data.get('train_loss', [])],
    )


def dumps(model: EnsembleModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(',', ':'))


def loads(text: str) -> EnsembleModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"model file is not valid JSON: {e}")
    return model_from_dict(data)
