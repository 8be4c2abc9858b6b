"""File formats: model JSON, event/hidden-path/state CSVs, reports."""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import DataError
from .model import EventSequence, ModelParams


def model_to_dict(params: ModelParams, meta: dict = None) -> dict:
    doc = {
        "M": params.M,
        "mu": params.mu.tolist(),
        "alpha": params.alpha.tolist(),
        "beta": params.beta.tolist(),
        "Q": params.Q.tolist(),
        "xi0": params.xi0.tolist(),
        "delta": params.delta,
    }
    if meta:
        doc["meta"] = meta
    return doc


def save_model(params: ModelParams, path, meta: dict = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(params, meta), fh, indent=2)
        fh.write("\n")


def load_model(path):
    """Returns (params, meta)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        params = ModelParams(mu=doc["mu"], alpha=doc["alpha"], beta=doc["beta"],
                             Q=doc["Q"], xi0=doc["xi0"], delta=doc["delta"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"invalid model file {path}: {exc}") from exc
    return params, doc.get("meta", {})


def write_events(events: EventSequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s\n")
        for t in events.times:
            fh.write(f"{float(t)!r}\n")


def read_events(path, horizon: float = None) -> EventSequence:
    times = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "time_s":
            raise DataError(f"expected header 'time_s' in {path}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                times.append(float(line))
            except ValueError:
                raise DataError(f"bad event time at line {lineno} in {path}") from None
    if not times:
        raise DataError(f"no events in {path}")
    try:
        return EventSequence(np.asarray(times), horizon=horizon)
    except ValueError as exc:
        raise DataError(f"invalid event sequence in {path}: {exc}") from exc


def write_hidden_path(times, states, path) -> None:
    """Hidden-path CSV: transition times with 1-based states."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s,state\n")
        for t, s in zip(times, states):
            fh.write(f"{float(t)!r},{int(s) + 1}\n")


def read_hidden_path(path):
    times, states = [], []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            times.append(float(row["time_s"]))
            states.append(int(row["state"]) - 1)
    return np.asarray(times), np.asarray(states, dtype=np.int64)


def write_states(times, states, path) -> None:
    """Decoded-state CSV at event times, 1-based states."""
    write_hidden_path(times, states, path)


def write_ranking(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "M", "delta", "loglik", "n_params", "aic", "bic", "rank"])
        for r in sorted(rows, key=lambda r: r["rank"]):
            writer.writerow([r["model"], r["M"],
                             "" if r["delta"] is None else r["delta"],
                             repr(r["loglik"]), r["n_params"],
                             repr(r["aic"]), repr(r["bic"]), r["rank"]])


def write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")
