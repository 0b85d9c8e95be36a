"""JSON file formats.

Matrices: ``{"n": n, "data": [n*n row-major floats]}``. Vectors use the same
shape with ``n`` entries. Supports: ``{"n": n, "pairs": [[i, j], ...]}``
with 1-based indices and both orientations listed. Python's float repr is
the shortest string that round-trips, so no precision is lost.
"""
import json
import os
from pathlib import Path

import numpy as np

from .model import CovarianceEstimate, SupportSet


def _write(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=False, allow_nan=True)
        f.write("\n")


def _read(path):
    with open(path) as f:
        return json.load(f)


def matrix_to_json(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"n": int(a.shape[0]), "data": [float(x) for x in a.reshape(-1)]}


def matrix_from_json(obj) -> np.ndarray:
    n = int(obj["n"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != n * n:
        raise ValueError(f"matrix file declares n={n} but holds {data.size} values")
    return data.reshape(n, n)


def vector_to_json(v) -> dict:
    v = np.asarray(v, dtype=float).reshape(-1)
    return {"n": int(v.size), "data": [float(x) for x in v]}


def vector_from_json(obj) -> np.ndarray:
    data = np.asarray(obj["data"], dtype=float).reshape(-1)
    if data.size != int(obj["n"]):
        raise ValueError("vector length does not match n")
    return data


def support_to_json(s: SupportSet) -> dict:
    return {"n": s.n, "pairs": [[i + 1, j + 1] for i, j in s.sorted_pairs()]}


def support_from_json(obj) -> SupportSet:
    return SupportSet.from_pairs(int(obj["n"]), ((i - 1, j - 1) for i, j in obj["pairs"]))


def covariance_to_json(c: CovarianceEstimate) -> dict:
    d = matrix_to_json(c.matrix)
    d.update(n_samples=int(c.n_samples), weight=float(c.weight))
    return d


def covariance_from_json(obj) -> CovarianceEstimate:
    m = matrix_from_json(obj)
    return CovarianceEstimate((m + m.T) / 2.0, int(obj.get("n_samples", 0)), float(obj.get("weight", 1.0)))


def write_matrix(path, a):
    _write(path, matrix_to_json(a))


def read_matrix(path) -> np.ndarray:
    return matrix_from_json(_read(path))


def write_vector(path, v):
    _write(path, vector_to_json(v))


def read_vector(path) -> np.ndarray:
    obj = _read(path)
    if "data" in obj and len(obj["data"]) == int(obj["n"]) ** 2 and int(obj["n"]) > 1:
        # a full matrix was given; take its diagonal
        return np.diag(matrix_from_json(obj)).copy()
    return vector_from_json(obj)


def write_support(path, s: SupportSet):
    _write(path, support_to_json(s))


def read_support(path) -> SupportSet:
    return support_from_json(_read(path))


def write_covariance(path, c: CovarianceEstimate):
    _write(path, covariance_to_json(c))


def read_covariance(path) -> CovarianceEstimate:
    return covariance_from_json(_read(path))


def write_json(path, obj):
    _write(path, obj)


def read_json(path):
    return _read(path)


def write_family(directory, family, covariances=None):
    """Write a generated family as a directory of JSON files."""
    d = Path(directory)
    os.makedirs(d, exist_ok=True)
    write_matrix(d / "common.json", family.common.matrix)
    write_support(d / "support.json", family.support)
    for k, task in enumerate(family.tasks, start=1):
        write_matrix(d / f"task_{k}.json", task.matrix)
    write_matrix(d / "novel.json", family.novel.matrix)
    if covariances is not None:
        task_covs, novel_cov = covariances
        for k, c in enumerate(task_covs, start=1):
            write_covariance(d / f"cov_task_{k}.json", c)
        if novel_cov is not None:
            write_covariance(d / "cov_novel.json", novel_cov)
