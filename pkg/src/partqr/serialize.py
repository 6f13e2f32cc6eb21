"""Versioned JSON model files; loading reproduces bit-identical predictions.

Floats survive a JSON round-trip exactly (repr-based encoding), tree/centroid
structures are stored verbatim, and the nn_qr neighborhood index is rebuilt
deterministically from the stored training matrix.
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import BoostedModel, ForestModel
from .composite import CompositeQuantileModel, ConstantModel
from .data import CategoricalEncoding, EncodedColumn, EncodedMatrix, FeatureSchema
from .linear import LinearQuantileModel, RidgeModel
from .models import BaselineFit, CompositeFit
from .partition import (
    ClusterPartition,
    RegressionTree,
    TreeNode,
    build_neighborhood_index,
)

FORMAT_VERSION = 1


def _tree_to_doc(tree: RegressionTree, with_rows: bool) -> dict:
    nodes = []
    for nd in tree.nodes:
        doc = {
            "feature": nd.feature,
            "threshold": nd.threshold,
            "left": nd.left,
            "right": nd.right,
            "leaf_id": nd.leaf_id,
            "value": nd.value,
        }
        if with_rows and nd.is_leaf:
            doc["rows"] = [int(i) for i in nd.rows]
        nodes.append(doc)
    return {
        "nodes": nodes,
        "n_features": tree.n_features,
        "max_depth": tree.max_depth,
        "min_samples_split": tree.min_samples_split,
        "min_samples_leaf": tree.min_samples_leaf,
    }


def _tree_from_doc(doc: dict) -> RegressionTree:
    nodes = []
    for nd in doc["nodes"]:
        rows = nd.get("rows")
        nodes.append(
            TreeNode(
                feature=nd["feature"],
                threshold=nd["threshold"],
                left=nd["left"],
                right=nd["right"],
                leaf_id=nd["leaf_id"],
                rows=None if rows is None else np.array(rows, dtype=int),
                value=nd["value"],
            )
        )
    return RegressionTree(
        nodes,
        doc["n_features"],
        doc["max_depth"],
        doc["min_samples_split"],
        doc["min_samples_leaf"],
    )


def _estimator_to_doc(est) -> dict:
    if isinstance(est, ConstantModel):
        return {"type": "constant", "value": est.value}
    if isinstance(est, RidgeModel):
        return {
            "type": "ridge",
            "coef": est.coef.tolist(),
            "intercept": est.intercept,
            "lam": est.lam,
            "scaled_coef": est.scaled_coef.tolist(),
            "feature_center": est.feature_center.tolist(),
            "feature_scale": est.feature_scale.tolist(),
        }
    return {
        "type": "quantile",
        "alpha": est.alpha,
        "coef": est.coef.tolist(),
        "intercept": est.intercept,
        "lam": est.lam,
        "objective": est.objective,
        "scaled_coef": est.scaled_coef.tolist(),
        "feature_scale": est.feature_scale.tolist(),
    }


def _estimator_from_doc(doc: dict):
    if doc["type"] == "constant":
        return ConstantModel(value=doc["value"])
    if doc["type"] == "ridge":
        return RidgeModel(
            coef=np.array(doc["coef"], dtype=float),
            intercept=doc["intercept"],
            lam=doc["lam"],
            scaled_coef=np.array(doc["scaled_coef"], dtype=float),
            feature_center=np.array(doc["feature_center"], dtype=float),
            feature_scale=np.array(doc["feature_scale"], dtype=float),
        )
    return LinearQuantileModel(
        alpha=doc["alpha"],
        coef=np.array(doc["coef"], dtype=float),
        intercept=doc["intercept"],
        lam=doc["lam"],
        objective=doc["objective"],
        scaled_coef=np.array(doc["scaled_coef"], dtype=float),
        feature_scale=np.array(doc["feature_scale"], dtype=float),
    )


def _composite_to_doc(model: CompositeQuantileModel) -> dict:
    doc = {
        "kind": model.kind,
        "levels": list(model.levels),
        "hyperparams": model.hyperparams,
        "partition_rows": {str(pid): [int(i) for i in rows] for pid, rows in model.partition_rows.items()},
    }
    if model.kind == "piecewise_rr":
        doc["estimators"] = {str(pid): _estimator_to_doc(est) for pid, est in model.estimators.items()}
    elif model.kind != "nn_qr":
        doc["estimators"] = {
            str(pid): {repr(a): _estimator_to_doc(est) for a, est in table.items()}
            for pid, table in model.estimators.items()
        }
    if model.tree is not None:
        doc["tree"] = _tree_to_doc(model.tree, with_rows=True)
    if model.clusters is not None:
        doc["centroids"] = model.clusters.centroids.tolist()
    if model.kind == "nn_qr":
        doc["train_values"] = model.train_matrix.values.tolist()
        doc["train_y"] = model.train_y.tolist()
    return doc


def _columns_to_doc(columns) -> list:
    return [[c.source, c.level, c.from_categorical] for c in columns]


def _columns_from_doc(doc) -> tuple:
    return tuple(EncodedColumn(src, lv, bool(flag)) for src, lv, flag in doc)


def _composite_from_doc(doc: dict, schema, encoding, columns) -> CompositeQuantileModel:
    model = CompositeQuantileModel(
        kind=doc["kind"],
        schema=schema,
        encoding=encoding,
        columns=columns,
        levels=tuple(doc["levels"]),
        hyperparams=doc["hyperparams"],
    )
    model.partition_rows = {
        int(pid): np.array(rows, dtype=int) for pid, rows in doc["partition_rows"].items()
    }
    if doc["kind"] == "piecewise_rr":
        model.estimators = {int(p): _estimator_from_doc(d) for p, d in doc["estimators"].items()}
    elif doc["kind"] != "nn_qr":
        model.estimators = {
            int(p): {float(a): _estimator_from_doc(d) for a, d in table.items()}
            for p, table in doc["estimators"].items()
        }
    if "tree" in doc:
        model.tree = _tree_from_doc(doc["tree"])
    if "centroids" in doc:
        model.clusters = ClusterPartition(centroids=np.array(doc["centroids"], dtype=float))
    if doc["kind"] == "nn_qr":
        values = np.array(doc["train_values"], dtype=float)
        model.train_matrix = EncodedMatrix(values, columns)
        model.train_y = np.array(doc["train_y"], dtype=float)
        model.index = build_neighborhood_index(model.train_matrix.categorical_submatrix())
    return model


def _baseline_to_doc(fit: BaselineFit) -> dict:
    inner = fit.inner
    if isinstance(inner, RegressionTree):
        return {"tree": _tree_to_doc(inner, with_rows=True)}
    if isinstance(inner, ForestModel):
        return {
            "forest": {
                "trees": [_tree_to_doc(t, with_rows=True) for t in inner.trees],
                "sample_indices": [[int(i) for i in s] for s in inner.sample_indices],
                "feature_subsets": [[int(i) for i in s] for s in inner.feature_subsets],
                "y_train": inner.y_train.tolist(),
                "bootstrap": inner.bootstrap,
                "seed": inner.seed,
                "feature_fraction": inner.feature_fraction,
            }
        }
    return {
        "boosted": {
            "init": inner.init,
            "learning_rate": inner.learning_rate,
            "trees": [_tree_to_doc(t, with_rows=False) for t in inner.trees],
            "sse_history": list(inner.sse_history),
        }
    }


def _baseline_from_doc(doc: dict):
    if "tree" in doc:
        return _tree_from_doc(doc["tree"])
    if "forest" in doc:
        f = doc["forest"]
        return ForestModel(
            trees=[_tree_from_doc(t) for t in f["trees"]],
            sample_indices=[np.array(s, dtype=int) for s in f["sample_indices"]],
            feature_subsets=[np.array(s, dtype=int) for s in f["feature_subsets"]],
            y_train=np.array(f["y_train"], dtype=float),
            bootstrap=f["bootstrap"],
            seed=f["seed"],
            feature_fraction=f["feature_fraction"],
        )
    b = doc["boosted"]
    return BoostedModel(
        init=b["init"],
        trees=[_tree_from_doc(t) for t in b["trees"]],
        learning_rate=b["learning_rate"],
        sse_history=tuple(b["sse_history"]),
    )


def model_to_json(fit) -> str:
    """Serialize a fitted registry model to the versioned JSON envelope."""
    if isinstance(fit, CompositeFit):
        schema = fit.model.schema
        encoding = fit.model.encoding
        columns = fit.model.columns
        payload = {"composite": _composite_to_doc(fit.model)}
    elif isinstance(fit, BaselineFit):
        schema = fit.schema
        encoding = fit.encoding
        columns = None
        payload = _baseline_to_doc(fit)
    else:
        raise TypeError(f"cannot serialize {type(fit).__name__}")
    doc = {
        "format_version": FORMAT_VERSION,
        "model_name": fit.name,
        "params": fit.params,
        "schema": {
            "columns": [[n, k] for n, k in schema.columns],
            "target": schema.target,
            "weight_units": schema.weight_units,
        },
        "encoding": [[col, list(levels)] for col, levels in encoding.levels],
        "columns": None if columns is None else _columns_to_doc(columns),
        "payload": payload,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str):
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    schema = FeatureSchema(
        tuple((n, k) for n, k in doc["schema"]["columns"]),
        target=doc["schema"]["target"],
        weight_units=doc["schema"]["weight_units"],
    )
    encoding = CategoricalEncoding(
        tuple((col, tuple(levels)) for col, levels in doc["encoding"])
    )
    payload = doc["payload"]
    if "composite" in payload:
        columns = _columns_from_doc(doc["columns"])
        model = _composite_from_doc(payload["composite"], schema, encoding, columns)
        return CompositeFit(doc["model_name"], doc["params"], model)
    inner = _baseline_from_doc(payload)
    return BaselineFit(doc["model_name"], doc["params"], schema, encoding, inner)


def save_model(path, fit) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(fit))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
