"""Checkpoint file: every ParamSlot (value, Adam moments) plus the step counter."""

import numpy as np

from ..errors import DataError, DimensionError
from ..storage import read_blob, write_blob
from .optim import ParamSlot


def save_checkpoint(path, slots, step=0, **meta):
    arrays, names = {}, []
    for s in slots:
        names.append({"name": s.name, "shape": list(s.shape), "trainable": s.trainable})
        arrays[f"{s.name}/value"] = s.value
        arrays[f"{s.name}/adam_m"] = s.adam_m
        arrays[f"{s.name}/adam_v"] = s.adam_v
    write_blob(path, dict(meta, step=int(step), params=names), arrays)


def load_checkpoint(path):
    """Return ``(slots, step, meta)``."""
    meta, arrays = read_blob(path)
    try:
        slots = [ParamSlot(p["name"], arrays[f"{p['name']}/value"], p["trainable"],
                           adam_m=arrays[f"{p['name']}/adam_m"],
                           adam_v=arrays[f"{p['name']}/adam_v"])
                 for p in meta["params"]]
    except KeyError as exc:
        raise DataError(f"{path}: checkpoint is missing {exc}") from exc
    step = meta.pop("step")
    meta.pop("params")
    return slots, step, meta


def restore_into(slots, loaded):
    """Copy loaded slot contents into ``slots``; names and shapes must match exactly."""
    by_name = {s.name: s for s in loaded}
    extra = sorted(set(by_name) - {s.name for s in slots})
    if extra:
        raise DimensionError(f"checkpoint parameters {extra} do not exist in the model")
    for s in slots:
        if s.name not in by_name:
            raise DimensionError(f"checkpoint has no parameter {s.name!r}")
        src = by_name[s.name]
        if src.shape != s.shape:
            raise DimensionError(
                f"checkpoint parameter {s.name!r} has shape {src.shape}, model expects {s.shape}")
        s.value[...] = src.value
        s.adam_m[...] = src.adam_m
        s.adam_v[...] = src.adam_v
