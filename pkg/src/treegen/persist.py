"""Model file format.

Layout: 8-byte magic, uint32 format version, uint64 header length, JSON
header (schema, encoder ranges, process/grid/schedule, label distribution,
per-forest array lengths in a fixed key order), then the forests' node
arrays as raw little-endian bytes in header order. No timestamps or
platform-dependent fields, so identical models serialize to identical
bytes everywhere.
"""

from __future__ import annotations

import json
import struct
import numpy as np

from .encoding import Encoder, NumericRange
from .errors import PersistenceError, PersistenceVersionError
from .forest import TabularDiffusionModel, TrainConfig
from .gbt import Forest, GBTConfig
from .process import NoiseSchedule, ProcessKind, TimeGrid
from .schema import TableSchema, Variable, VariableKind

MAGIC = b"TREEGEN\x00"
FORMAT_VERSION = 1

_ARRAY_FIELDS = (
    ("node_feature", "<i4"),
    ("node_threshold", "<f8"),
    ("node_left", "<i4"),
    ("node_right", "<i4"),
    ("node_default_left", "<u1"),
    ("node_value", "<f8"),
    ("tree_starts", "<i4"),
)


def _schema_to_json(schema: TableSchema) -> dict:
    return {
        "variables": [
            {"name": v.name, "kind": v.kind.value,
             "categories": list(v.categories) if v.categories else None}
            for v in schema.variables
        ],
        "outcome_index": schema.outcome_index,
    }


def _schema_from_json(obj: dict) -> TableSchema:
    variables = tuple(
        Variable(e["name"], VariableKind(e["kind"]),
                 tuple(e["categories"]) if e["categories"] else None)
        for e in obj["variables"]
    )
    return TableSchema(variables, outcome_index=obj["outcome_index"])


def save_model(path, model: TabularDiffusionModel):
    keys = sorted(model.models)
    cfg = model.train_config
    header = {
        "process": model.process.value,
        "n_t": model.grid.n_t,
        "beta_min": model.schedule.beta_min,
        "beta_max": model.schedule.beta_max,
        "schema": _schema_to_json(model.schema),
        "ranges": [None if r is None else [r.lo, r.hi] for r in model.encoder.ranges],
        "label_var": model.label_var,
        "label_probs": None if model.label_probs is None else model.label_probs.tolist(),
        "n_noise_effective": model.n_noise_effective,
        "train_config": {
            "process": cfg.process.value,
            "n_t": cfg.n_t,
            "n_noise": cfg.n_noise,
            "label_conditioning": cfg.label_conditioning,
            "seed": cfg.seed,
            "cell_budget": cfg.cell_budget,
            "gbt": {
                "n_trees": cfg.gbt.n_trees,
                "max_depth": cfg.gbt.max_depth,
                "learning_rate": cfg.gbt.learning_rate,
                "lambda_l2": cfg.gbt.lambda_l2,
                "gamma_min_gain": cfg.gbt.gamma_min_gain,
                "min_child_weight": cfg.gbt.min_child_weight,
                "n_bins": cfg.gbt.n_bins,
                "subsample": cfg.gbt.subsample,
            },
        },
        "forests": [
            {
                "key": list(key),
                "n_features": model.models[key].n_features,
                "base_score": model.models[key].base_score,
                "learning_rate": model.models[key].learning_rate,
                "n_nodes": model.models[key].n_nodes,
                "n_trees": model.models[key].n_trees,
            }
            for key in keys
        ],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for key in keys:
            forest = model.models[key]
            for name, dtype in _ARRAY_FIELDS:
                fh.write(np.ascontiguousarray(getattr(forest, name), dtype=dtype).tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise PersistenceError("model file truncated")
    return data


_NATIVE_DTYPES = {
    "node_feature": np.int32,
    "node_threshold": np.float64,
    "node_left": np.int32,
    "node_right": np.int32,
    "node_default_left": np.uint8,
    "node_value": np.float64,
    "tree_starts": np.int32,
}


def load_model(path) -> TabularDiffusionModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise PersistenceError(f"{path}: not a model file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise PersistenceVersionError(
                f"{path}: format version {version}, expected {FORMAT_VERSION}")
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        try:
            header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise PersistenceError(f"{path}: corrupt header: {exc}") from None

        try:
            schema = _schema_from_json(header["schema"])
            ranges = tuple(None if r is None else NumericRange(r[0], r[1])
                           for r in header["ranges"])
            widths = tuple(1 if v.kind.is_numeric else v.n_categories - 1
                           for v in schema.variables)
            encoder = Encoder(schema, ranges, widths)
            tc = header["train_config"]
            cfg = TrainConfig(
                process=ProcessKind(tc["process"]),
                n_t=tc["n_t"],
                n_noise=tc["n_noise"],
                label_conditioning=tc["label_conditioning"],
                gbt=GBTConfig(**tc["gbt"]),
                seed=tc["seed"],
                schedule=NoiseSchedule(header["beta_min"], header["beta_max"]),
                cell_budget=tc["cell_budget"],
            )
            models = {}
            for entry in header["forests"]:
                n_nodes = entry["n_nodes"]
                n_trees = entry["n_trees"]
                arrays = {}
                for name, dtype in _ARRAY_FIELDS:
                    count = n_trees + 1 if name == "tree_starts" else n_nodes
                    raw = _read_exact(fh, count * np.dtype(dtype).itemsize)
                    arrays[name] = np.frombuffer(raw, dtype=dtype).astype(
                        _NATIVE_DTYPES[name])
                models[tuple(entry["key"])] = Forest(
                    n_features=entry["n_features"],
                    base_score=entry["base_score"],
                    learning_rate=entry["learning_rate"],
                    **arrays,
                )
            label_probs = header["label_probs"]
            model = TabularDiffusionModel(
                process=ProcessKind(header["process"]),
                grid=TimeGrid(header["n_t"]),
                schedule=NoiseSchedule(header["beta_min"], header["beta_max"]),
                encoder=encoder,
                label_var=header["label_var"],
                label_probs=None if label_probs is None else np.asarray(label_probs),
                models=models,
                n_noise_effective=header["n_noise_effective"],
                train_config=cfg,
            )
        except PersistenceError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise PersistenceError(f"{path}: corrupt model file: {exc}") from None
    model.check_complete()
    return model
