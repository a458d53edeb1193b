"""Optimisation step, evaluation, and the epoch loop."""

import json
import logging

import numpy as np

from ..autodiff import Tensor, no_grad
from ..autodiff.optim import AdamW, MultiStepLR
from ..metrics import MetricAccumulator
from .data import iterate_batches
from .frames import depth_loss

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def _inputs(model, batch):
    mod = model.cfg.modality
    voxel = None if mod == "image" else Tensor(batch.voxel)
    image = None if mod == "events" else Tensor(batch.image)
    return voxel, image


def train_step(model, optimizer, batch):
    """One forward/backward/AdamW update; returns the pre-update loss."""
    optimizer.zero_grad()
    try:
        pred = model(*_inputs(model, batch))
        loss = depth_loss(pred, batch.depth, batch.mask, model.cfg.loss_weights)
        loss.backward()
    except FloatingPointError as exc:
        raise TrainingError(f"non-finite value in training step {optimizer.step_count + 1}: {exc}") from exc
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {optimizer.step_count + 1}")
    optimizer.step()
    return value


def predict(model, batch):
    with no_grad():
        return model(*_inputs(model, batch)).data


def evaluate(model, samples, batch_size=8):
    """Mean loss and metrics over ``samples`` (predictions clipped to max depth)."""
    acc = MetricAccumulator()
    loss_sum = 0.0
    n = 0
    for batch in iterate_batches(samples, batch_size, dtype=model.dtype):
        with no_grad():
            pred = model(*_inputs(model, batch))
            loss_sum += float(depth_loss(pred, batch.depth, batch.mask, model.cfg.loss_weights).data) * len(batch)
        n += len(batch)
        d = np.clip(pred.data, 1e-6, model.cfg.max_depth)
        for i in range(len(batch)):
            acc.add(d[i, 0], batch.depth[i, 0], batch.mask[i, 0])
    report = acc.report()
    return loss_sum / max(n, 1), report


def metrics_record(epoch, split, loss, report):
    """The per-epoch JSON line."""
    return {
        "epoch": epoch,
        "split": split,
        "loss": round(float(loss), 6),
        "abs_rel": round(report.abs_rel, 6),
        "rmse_log": round(report.rmse_log, 6),
        "d1": round(report.d1, 6),
        "d2": round(report.d2, 6),
        "d3": round(report.d3, 6),
    }


def fit(
    model,
    train,
    val=None,
    epochs=50,
    batch_size=16,
    lr=2e-4,
    milestones=(10, 20, 30),
    gamma=0.5,
    weight_decay=1e-2,
    seed=0,
    log_path=None,
    on_epoch=None,
):
    """Train ``model`` on a list of samples; returns the list of metric records."""
    optimizer = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    scheduler = MultiStepLR(optimizer, milestones, gamma)
    rng = np.random.default_rng(seed)
    records = []
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, epochs + 1):
            losses = []
            for batch in iterate_batches(train, batch_size, rng, dtype=model.dtype):
                losses.append(train_step(model, optimizer, batch) * len(batch))
            train_loss = sum(losses) / len(train)
            scheduler.step()
            epoch_records = []
            if val:
                loss, report = evaluate(model, val, batch_size)
                epoch_records.append(metrics_record(epoch, "val", loss, report))
            else:
                epoch_records.append({"epoch": epoch, "split": "train", "loss": round(train_loss, 6)})
            for rec in epoch_records:
                log.info("epoch %d %s", epoch, rec)
                records.append(rec)
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                    fh.flush()
            if on_epoch:
                on_epoch(epoch, train_loss, epoch_records)
    finally:
        if fh:
            fh.close()
    return records
