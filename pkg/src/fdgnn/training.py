"""Negative log-likelihood training with a Monte Carlo survival term.

The loss over a stream is::

    L = -sum_events log lambda_k^x(t) + integral_{t0}^{T} Lambda(s) ds

where Lambda sums every admissible intensity. The integral is estimated by
sampling times uniformly over each batch window; at each sampled time the
total intensity is taken over all seen entities plus (possibly subsampled)
candidate edge additions, reweighted to stay unbiased.

Batches are contiguous windows in time order. State is detached at window
boundaries, and per entity after ``bptt_window`` recursion steps.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import torch

from .events import KINDS, Event, StreamHeader, is_edge
from .intensity import event_intensity, intensity, intensity_table
from .model import FDGNN
from .params import DTYPE, ModelConfig, ModelParams

log = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    pass


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_events: int = 50
    epochs: int = 30
    mc_time_samples: int = 5
    mc_entity_samples: int = 64
    seed: int = 0
    local_lr: float = 0.01
    kinds: tuple[int, ...] = KINDS

    def __post_init__(self):
        if self.lr < 0 or self.local_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.batch_events <= 0 or self.mc_time_samples <= 0 or self.mc_entity_samples <= 0:
            raise ValueError("batch_events and sample counts must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class LossBreakdown:
    event_term: torch.Tensor
    survival_term: torch.Tensor
    n_events: int = 0

    @property
    def total(self) -> torch.Tensor:
        return self.event_term + self.survival_term

    def __add__(self, other: LossBreakdown) -> LossBreakdown:
        return LossBreakdown(
            self.event_term + other.event_term,
            self.survival_term + other.survival_term,
            self.n_events + other.n_events,
        )


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=DTYPE)


def batch_loss(
    model: FDGNN,
    events: Sequence[Event],
    t_start: float,
    t_end: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> LossBreakdown:
    """Loss of one window; advances ``model`` through ``events``.

    Survival samples falling in the same inter-event gap share one total
    intensity evaluation (intensities are constant between events).
    """
    n = cfg.mc_time_samples * max(len(events), 1)
    span = t_end - t_start
    if span < 0:
        raise ValueError("t_end before t_start")
    deltas = np.sort(rng.uniform(t_start, t_end, size=n)) if span > 0 else np.empty(0)
    acc = _zero()
    event_term = _zero()
    i = 0

    def gap_total(hi: float) -> None:
        nonlocal i, acc
        j = int(np.searchsorted(deltas, hi, side="left"))
        if j > i:
            lam = intensity_table(model, cfg.kinds, cfg.mc_entity_samples, rng).total()
            acc = acc + (j - i) * lam
            i = j

    for ev in events:
        gap_total(ev.t)
        if ev.kind in cfg.kinds:
            event_term = event_term - torch.log(event_intensity(model, ev).value)
        model.observe(ev)
    gap_total(math.inf)
    survival = acc * (span / n) if len(deltas) else _zero()
    return LossBreakdown(event_term, survival, len(events))


def windows(events: Sequence[Event], size: int) -> list[Sequence[Event]]:
    return [events[i : i + size] for i in range(0, len(events), size)]


def _window_bounds(header: StreamHeader, events, batches, horizon):
    t_start = header.t0
    last = events[-1].t if events else header.t0
    end = max(last, horizon if horizon is not None else last)
    for b_i, batch in enumerate(batches):
        t_end = end if b_i == len(batches) - 1 else batch[-1].t
        yield batch, t_start, t_end
        t_start = t_end


def nll(
    header: StreamHeader,
    events: Sequence[Event],
    params: ModelParams,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    horizon: float | None = None,
) -> LossBreakdown:
    """Negative log-likelihood of the whole stream under fixed ``params``.

    ``horizon`` defaults to the header horizon, else the last event time.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if horizon is None:
        horizon = header.horizon
    model = FDGNN(header, params, model_cfg)
    batches = windows(events, cfg.batch_events) or [[]]
    out = LossBreakdown(_zero(), _zero(), 0)
    for batch, t0, t1 in _window_bounds(header, events, batches, horizon):
        out = out + batch_loss(model, batch, t0, t1, cfg, rng)
        model.detach_state()
    return out


def gradients(loss: torch.Tensor, params: ModelParams) -> dict[str, torch.Tensor]:
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    out = {}
    for name, g in zip(names, grads):
        if g is None:
            g = torch.zeros_like(params[name])
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for tensor {name}")
        out[name] = g.detach()
    return out


def sgd_step(params: ModelParams, grads: dict[str, torch.Tensor], lr: float) -> ModelParams:
    if set(grads) - set(params):
        raise KeyError(f"gradients for unknown tensors: {sorted(set(grads) - set(params))}")
    new = {}
    for name in params:
        p = params[name].detach()
        g = grads.get(name)
        new[name] = p if g is None or lr == 0 else p - lr * g
    return ModelParams(new)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float] = field(default_factory=list)
    best_epoch: int = -1


def train(
    header: StreamHeader,
    events: Sequence[Event],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    params: ModelParams | None = None,
    callback: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Mini-batch SGD on the per-event mean loss of each window.

    ``history`` holds the mean per-event loss of every epoch; the returned
    parameters are those at the end of the epoch with the lowest loss.
    """
    if params is None:
        params = ModelParams.initialize(model_cfg, seed=cfg.seed)
    result = TrainResult(params=params.clone())
    batches = windows(events, cfg.batch_events)
    if not batches:
        return result
    best = math.inf
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        model = FDGNN(header, params, model_cfg)
        total = 0.0
        for batch, t0, t1 in _window_bounds(header, events, batches, header.horizon):
            lb = batch_loss(model, batch, t0, t1, cfg, rng)
            value = float(lb.total.detach())
            if not math.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch} at seq {batch[0].seq}")
            grads = gradients(lb.total / len(batch), params)
            params = sgd_step(params, grads, cfg.lr)
            model.set_params(params)
            total += value
        epoch_loss = total / len(events)
        result.history.append(epoch_loss)
        log.info("epoch %d loss %.6f", epoch, epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            result.params = params.clone()
            result.best_epoch = epoch
    return result


# -- local retraining -------------------------------------------------------


@dataclass
class LocalUpdate:
    params: ModelParams
    touched: frozenset[str]
    loss: float


def local_loss(model: FDGNN, event: Event, kinds=KINDS) -> torch.Tensor:
    """-log lambda of the event plus the survival of the entities it
    touches since their own last event. Stored state is treated as fixed."""
    model.detach_state()
    loss = -torch.log(event_intensity(model, event).value)
    x = event.subject
    affected = [x, *x] if is_edge(x) else [x]
    for a in affected:
        rec = (model.edges if is_edge(a) else model.nodes).get(a)
        t_prev = rec.t_last if rec is not None else model.t
        dt = event.t - t_prev
        for k in kinds:
            if (k in (2, 3, 5)) != is_edge(a):
                continue
            rep = intensity(model, k, a)
            if rep.value.requires_grad:
                loss = loss + rep.value * dt
    return loss


def local_update(event: Event, model: FDGNN, lr: float, kinds=KINDS) -> LocalUpdate:
    """One SGD step on a single event's local loss.

    Only tensors reachable from that loss are changed; ``touched`` lists
    them. The model's state is not advanced.
    """
    params = model.params
    loss = local_loss(model, event, kinds)
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    touched = frozenset(n for n, g in zip(names, grads) if g is not None)
    gmap = {}
    for n, g in zip(names, grads):
        if g is None:
            continue
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for tensor {n}")
        gmap[n] = g
    return LocalUpdate(sgd_step(params, gmap, lr), touched, float(loss.detach()))


# -- evaluation -------------------------------------------------------------


@dataclass
class Metrics:
    events: int
    mean_nll: float
    type_accuracy: float
    mean_survival: float
    mean_event_term: float

    def as_dict(self) -> dict[str, float]:
        return dict(vars(self))


def evaluate(
    header: StreamHeader,
    events: Sequence[Event],
    params: ModelParams,
    model_cfg: ModelConfig,
    start: int = 0,
    kinds=KINDS,
    seed: int = 0,
) -> Metrics:
    """Score events ``events[start:]`` after replaying ``events[:start]``.

    Survival is integrated exactly between consecutive events since all
    intensities are constant there. The predicted next event type is the
    kind of the single most intense admissible (kind, subject) pair, with
    exact ties between kinds broken by a generator seeded with ``seed``.
    Only event kinds in ``kinds`` are scored or predicted.
    """
    scored = len(events) - start
    if scored <= 0:
        raise ValueError("no events to evaluate")
    model = FDGNN(header, params, model_cfg)
    rng = np.random.default_rng(seed)
    nll_sum = surv_sum = ev_sum = 0.0
    correct = n_scored = 0
    prev_t = header.t0
    with torch.no_grad():
        for i, ev in enumerate(events):
            if i >= start:
                table = intensity_table(model, kinds)
                surv = float(table.total()) * (ev.t - prev_t)
                nll_sum += surv
                surv_sum += surv
                if ev.kind in kinds:
                    ev_term = -math.log(float(event_intensity(model, ev).value))
                    nll_sum += ev_term
                    ev_sum += ev_term
                    best = table.argmax(rng)
                    correct += int(best is not None and best[0] == ev.kind)
                    n_scored += 1
            model.observe(ev)
            prev_t = ev.t
    return Metrics(
        events=scored,
        mean_nll=nll_sum / scored,
        type_accuracy=correct / n_scored if n_scored else 0.0,
        mean_survival=surv_sum / scored,
        mean_event_term=ev_sum / scored,
    )


def exact_survival(
    header: StreamHeader,
    events: Sequence[Event],
    params: ModelParams,
    model_cfg: ModelConfig,
    t_end: float | None = None,
    kinds=KINDS,
) -> float:
    """Integral of the exactly enumerated total intensity over [t0, t_end]."""
    model = FDGNN(header, params, model_cfg)
    t_end = t_end if t_end is not None else (events[-1].t if events else header.t0)
    out = 0.0
    prev = header.t0
    with torch.no_grad():
        for ev in events:
            if ev.t > t_end:
                break
            out += float(intensity_table(model, kinds).total()) * (ev.t - prev)
            model.observe(ev)
            prev = ev.t
        out += float(intensity_table(model, kinds).total()) * (t_end - prev)
    return out


def event_log_intensities(
    header: StreamHeader,
    events: Sequence[Event],
    params: ModelParams,
    model_cfg: ModelConfig,
) -> list[float]:
    """log lambda of every observed event, each at its pre-event state."""
    model = FDGNN(header, params, model_cfg)
    out = []
    with torch.no_grad():
        for ev in events:
            out.append(math.log(float(event_intensity(model, ev).value)))
            model.observe(ev)
    return out
