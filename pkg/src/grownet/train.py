"""Training and depth growth: optimizers, epoch loops, line search, growth loops.

Growth strategies
-----------------
* grow_semi: train, scan all interfaces, insert the top-scoring direction when
  its score clears the threshold, line-search the insertion scale, retrain on
  a schedule of epochs_base + epochs_step*(i-1) epochs per phase.
* grow_auto: same skeleton, but the combined width per insertion is chosen
  automatically (score = lambda / width) and every training phase runs until
  the validation loss stops improving for `patience` consecutive epochs.
* grow_baseline: comparison strategies (random-insertion, net2deeper,
  forward-thinking, fixed) sharing the same logging and stop conditions.

Each training phase tracks the best validation loss seen (including the state
entering the phase) and ends with the model restored to that best state; the
next growth step continues from there. The returned model is the best
validation snapshot across all phases, which may differ from the last trained
phase; the summary records both indices.

Determinism: all randomness flows from one seeded generator consumed in a
fixed order, so identical config + seed reproduce run logs byte for byte.
Wall-clock times appear only in the growth-event JSON lines, never in the run
log or summary.
"""

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels, network, rbf, topo
from .linalg import make_rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LINE_SEARCH_CAP = 10_000
EPOCH_CAP = 100_000

STRATEGIES = ("random-insertion", "net2deeper", "forward-thinking", "fixed")
STOP_MAX_ITERS = "max-iterations"
STOP_VALIDATION = "validation-worsened"
STOP_THRESHOLD = "below-threshold"

# Protocol defaults for the scalar chain, applied by the CLI when the user
# does not set these keys. An inserted bump starts near-identity and the
# default step size crawls out of that regime too slowly to matter, and the
# chain's sensitivity signal sees only two residual moments (sum of p and of
# p*x), which understate the value of further depth once the mean residual is
# absorbed; so the chain trains with a larger step and no threshold stop.
CHAIN_DEFAULTS = {"lr": 0.03, "eps_threshold": 0.0}


@dataclass
class TrainConfig:
    """Hyperparameters for one growth run; field names match the CLI flags."""

    n: int = 16
    m: int = 1
    max_iters: int = 7
    init_layers: int = 1
    sparsity: float = 0.0
    epochs_base: int = 2000
    epochs_step: int = 1000
    batch: int = 1000
    lr: float = 0.001
    eps: float = 0.001
    eps_threshold: float = 0.01
    tau1: float = 0.001
    eps_s: float = 0.5
    patience: int = 1
    sigma_n: float = 0.01
    seed: int = 0
    optimizer: str = "adam"
    activation_pair: str = "swish+tanh"
    loss: str = "mse"

    def validate(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        for name in ("max_iters", "init_layers", "epochs_base", "epochs_step",
                     "patience"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be >= 0" % name)
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        for name in ("lr", "tau1", "eps"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be > 0" % name)
        if not 0.0 <= self.eps_s <= 1.0:
            raise ValueError("eps_s must lie in [0, 1]")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.sigma_n < 0.0:
            raise ValueError("sigma_n must be >= 0")
        return self


@dataclass
class GrowthEvent:
    """One insertion: where, how, and the loss immediately around it."""

    method: str
    iteration: int
    inserted_at: int
    eps_final: float
    m: int
    pre_loss: float
    post_loss: float
    lambdas: list
    scores: list
    score: float
    line_search_capped: bool
    wall_time: float

    def to_dict(self):
        return {
            "method": self.method,
            "iteration": self.iteration,
            "inserted_at": self.inserted_at,
            "eps_final": self.eps_final,
            "m": self.m,
            "pre_loss": self.pre_loss,
            "post_loss": self.post_loss,
            "lambdas": self.lambdas,
            "scores": self.scores,
            "score": self.score,
            "line_search_capped": self.line_search_capped,
            "wall_time": self.wall_time,
        }


@dataclass
class RunLog:
    """Per-epoch rows, growth events, and the end-of-run summary."""

    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add_row(self, epoch, phase, train_loss, val_loss, layers, params):
        self.rows.append((int(epoch), int(phase), float(train_loss),
                          float(val_loss), int(layers), int(params)))


# ---------------------------------------------------------------------------
# Optimizers (array-list models; the scalar chain has a fused kernel path)
# ---------------------------------------------------------------------------

class Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - ADAM_BETA1) * (g - m)
            v += (1.0 - ADAM_BETA2) * (g * g - v)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def _make_optimizer(kind, params, lr):
    return Adam(params, lr) if kind == "adam" else Sgd(params, lr)


# ---------------------------------------------------------------------------
# Model operations: one uniform surface over the two model families
# ---------------------------------------------------------------------------

class FnnOps:
    kind = "fnn"

    def build(self, cfg, n0, nT, rng):
        spec = network.NetworkSpec(
            n0=n0, nT=nT, n=cfg.n, hidden_count=cfg.init_layers,
            activation_pair=cfg.activation_pair, input_sparsity=cfg.sparsity,
            loss_kind=cfg.loss,
        )
        return network.init_network(spec, rng, sigma_n=cfg.sigma_n)

    def loss(self, model, ds):
        return model.loss(ds.inputs, ds.labels)

    def scan(self, model, ds, mode, m, eps_s):
        return topo.scan_dataset(model, ds.inputs, ds.labels,
                                 mode=mode, m=m, eps_s=eps_s)

    def insert(self, model, position, phi, eps):
        return network.insert_layer(model, position, phi, eps)

    def interfaces(self, model):
        return model.hidden_count

    def direction_size(self, model):
        return model.spec.n * model.spec.n

    def layer_count(self, model):
        return model.hidden_count

    def param_count(self, model):
        return model.param_count()

    def clone(self, model):
        return model.clone()

    def snapshot(self, model):
        return model.snapshot()

    def restore(self, model, snap):
        model.restore(snap)

    def start_phase(self, model, cfg):
        return _make_optimizer(cfg.optimizer, model.params(), cfg.lr)

    def epoch(self, model, ds, opt, cfg, rng):
        x, y = ds.inputs, ds.labels
        s = x.shape[0]
        flags = model.trainable_flags()
        if s <= cfg.batch:
            slices = [np.arange(s)]
        else:
            perm = rng.permutation(s)
            slices = [perm[lo:lo + cfg.batch] for lo in range(0, s, cfg.batch)]
        losses = []
        params = model.params()
        for idx in slices:
            trace, j = network.forward(model, x[idx], y[idx])
            network.adjoint(model, trace)
            grads = trace.param_grads
            for g, flag in zip(grads, flags):
                if not flag:
                    g[:] = 0.0
            opt.step(params, grads)
            losses.append(j)
        return float(np.mean(losses))


class RbfOps:
    """Scalar-chain counterpart; the scan is always single-block (m = 1)."""

    kind = "rbf"

    def build(self, cfg, n0, nT, rng):
        if n0 != 1 or nT != 1:
            raise ValueError("the scalar chain needs 1-d inputs and labels")
        if cfg.init_layers < 1:
            raise ValueError("the scalar chain needs init_layers >= 1")
        return rbf.RbfChain(
            cfg.sigma_n * rng.standard_normal((cfg.init_layers, 3)))

    def loss(self, model, ds):
        return model.loss(ds.inputs, ds.labels)

    def scan(self, model, ds, mode, m, eps_s):
        return rbf.scan_chain(model, ds.inputs, ds.labels)

    def insert(self, model, position, phi, eps):
        return rbf.insert_chain(model, position, phi, eps)

    def interfaces(self, model):
        return model.layer_count

    def direction_size(self, model):
        return 3

    def layer_count(self, model):
        return model.layer_count

    def param_count(self, model):
        return model.param_count()

    def clone(self, model):
        return model.clone()

    def snapshot(self, model):
        return model.snapshot()

    def restore(self, model, snap):
        model.restore(snap)

    def start_phase(self, model, cfg):
        if cfg.optimizer == "adam":
            return {"m": np.zeros_like(model.thetas),
                    "v": np.zeros_like(model.thetas), "t": 0}
        return Sgd(None, cfg.lr)

    def epoch(self, model, ds, opt, cfg, rng):
        x = np.ascontiguousarray(ds.inputs.ravel())
        y = np.ascontiguousarray(ds.labels.ravel())
        s = x.shape[0]
        if s <= cfg.batch:
            order = np.arange(s, dtype=np.int64)
        else:
            order = rng.permutation(s).astype(np.int64)
        frozen = ~model.trainable_rows
        if isinstance(opt, dict) and not frozen.any():
            j, opt["t"] = kernels.rbf_epoch(
                x, y, order, model.thetas, opt["m"], opt["v"], opt["t"],
                cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, cfg.batch, model.c,
            )
            return float(j)
        # Plain path: SGD, or per-layer freezing that the fused kernel does
        # not model. Frozen rows get zero gradient so their moments never move.
        total = 0.0
        nb = 0
        for lo in range(0, s, cfg.batch):
            sel = order[lo:lo + cfg.batch]
            trace = rbf.chain_trace(model, x[sel], y[sel])
            g = trace.param_grads
            g[frozen] = 0.0
            if isinstance(opt, dict):
                opt["t"] += 1
                c1 = 1.0 - ADAM_BETA1 ** opt["t"]
                c2 = 1.0 - ADAM_BETA2 ** opt["t"]
                opt["m"] += (1.0 - ADAM_BETA1) * (g - opt["m"])
                opt["v"] += (1.0 - ADAM_BETA2) * (g * g - opt["v"])
                model.thetas -= cfg.lr * (opt["m"] / c1) / (
                    np.sqrt(opt["v"] / c2) + ADAM_EPS)
            else:
                model.thetas -= cfg.lr * g
            total += trace.loss
            nb += 1
        return total / nb


FNN_OPS = FnnOps()
RBF_OPS = RbfOps()


def ops_for(kind):
    if kind == "fnn":
        return FNN_OPS
    if kind == "rbf":
        return RBF_OPS
    raise ValueError("unknown model kind %r" % kind)


# ---------------------------------------------------------------------------
# Line search over the insertion scale
# ---------------------------------------------------------------------------

def line_search(ops, model, train_ds, position, phi, eps0, tau1,
                cap=LINE_SEARCH_CAP):
    """Grow eps from eps0 in tau1 steps while the training loss of the
    candidate insertion keeps not increasing.

    Returns (eps_final, loss at eps_final, capped). eps_final >= eps0 always;
    capped is True when the hard step cap stopped the search.
    """
    if eps0 <= 0.0 or tau1 <= 0.0:
        raise ValueError("eps0 and tau1 must be > 0")
    eps = eps0
    j_here = ops.loss(ops.insert(model, position, phi, eps), train_ds)
    capped = False
    for step in range(cap + 1):
        if step == cap:
            capped = True
            warnings.warn("line search hit the %d-step cap" % cap)
            break
        j_next = ops.loss(ops.insert(model, position, phi, eps + tau1), train_ds)
        if j_next <= j_here:
            eps += tau1
            j_here = j_next
        else:
            break
    return eps, j_here, capped


# ---------------------------------------------------------------------------
# Training phases
# ---------------------------------------------------------------------------

class _PhaseState:
    """Best-validation tracking within one phase, seeded with the entry state."""

    def __init__(self, ops, model, val_loss):
        self.ops = ops
        self.best_val = val_loss
        self.best_snap = ops.snapshot(model)
        self.improved_at = 0

    def observe(self, model, val_loss, epoch):
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_snap = self.ops.snapshot(model)
            self.improved_at = epoch
            return True
        return False

    def finish(self, model):
        self.ops.restore(model, self.best_snap)
        return self.best_val


def _train_scheduled(ops, model, train_ds, val_ds, epochs, cfg, rng, log,
                     phase, counter):
    """Run a fixed number of epochs; model ends at its best-validation state."""
    opt = ops.start_phase(model, cfg)
    state = _PhaseState(ops, model, ops.loss(model, val_ds))
    layers = ops.layer_count(model)
    params = ops.param_count(model)
    for _ in range(epochs):
        train_loss = ops.epoch(model, train_ds, opt, cfg, rng)
        val_loss = ops.loss(model, val_ds)
        counter[0] += 1
        log.add_row(counter[0], phase, train_loss, val_loss, layers, params)
        state.observe(model, val_loss, counter[0])
    return state.finish(model)


def _train_patience(ops, model, train_ds, val_ds, cfg, rng, log, phase,
                    counter):
    """Run epochs until validation fails to improve for `patience` in a row.

    Returns (best_val, epochs_run, cap_hit); the model ends at its
    best-validation state. A hard cap of EPOCH_CAP epochs guards against
    configurations that never trigger the patience stop.
    """
    opt = ops.start_phase(model, cfg)
    state = _PhaseState(ops, model, ops.loss(model, val_ds))
    layers = ops.layer_count(model)
    params = ops.param_count(model)
    streak = 1
    epochs = 0
    cap_hit = False
    while True:
        if epochs >= EPOCH_CAP:
            cap_hit = True
            warnings.warn("training phase hit the %d-epoch cap" % EPOCH_CAP)
            break
        train_loss = ops.epoch(model, train_ds, opt, cfg, rng)
        val_loss = ops.loss(model, val_ds)
        counter[0] += 1
        epochs += 1
        log.add_row(counter[0], phase, train_loss, val_loss, layers, params)
        if state.observe(model, val_loss, counter[0]):
            streak = 1
        else:
            streak += 1
        if streak > cfg.patience:
            break
    return state.finish(model), epochs, cap_hit


# ---------------------------------------------------------------------------
# Growth loops
# ---------------------------------------------------------------------------

def _phase_epochs(cfg, phase):
    """Scheduler: phase i (1-based) trains epochs_base + epochs_step*(i-1)."""
    return cfg.epochs_base + cfg.epochs_step * (phase - 1)


class _GrowthRun:
    """Shared bookkeeping for every growth strategy."""

    def __init__(self, ops, cfg, train_ds, val_ds, model, method):
        cfg.validate()
        self.ops = ops
        self.cfg = cfg
        self.train_ds = train_ds
        self.val_ds = val_ds
        self.method = method
        self.rng = make_rng(cfg.seed)
        self.model = model if model is not None else ops.build(
            cfg, train_ds.n0, train_ds.nT, self.rng)
        self.log = RunLog()
        self.counter = [0]
        self.phase_vals = []
        self.best_val = np.inf
        self.best_model = None
        self.best_phase = 0
        self.capped_any = False
        self.epoch_cap_hit = False

    def train_phase(self, scheduled):
        phase = len(self.phase_vals) + 1
        if scheduled:
            val = _train_scheduled(
                self.ops, self.model, self.train_ds, self.val_ds,
                _phase_epochs(self.cfg, phase), self.cfg, self.rng, self.log,
                phase, self.counter,
            )
        else:
            val, _, cap_hit = _train_patience(
                self.ops, self.model, self.train_ds, self.val_ds, self.cfg,
                self.rng, self.log, phase, self.counter,
            )
            self.epoch_cap_hit = self.epoch_cap_hit or cap_hit
        self.phase_vals.append(val)
        if val < self.best_val:
            self.best_val = val
            self.best_model = self.ops.clone(self.model)
            self.best_phase = phase
        return val

    def validation_worsened(self):
        v = self.phase_vals
        return len(v) >= 2 and v[-1] > v[-2]

    def record_event(self, iteration, position, eps_final, m_used, pre_loss,
                     post_loss, lambdas, scores, score, capped, started):
        self.capped_any = self.capped_any or capped
        self.log.events.append(GrowthEvent(
            method=self.method, iteration=iteration, inserted_at=position,
            eps_final=eps_final, m=m_used, pre_loss=pre_loss,
            post_loss=post_loss, lambdas=lambdas, scores=scores, score=score,
            line_search_capped=capped,
            wall_time=time.perf_counter() - started,
        ))

    def finish(self, stop_reason):
        returned = self.best_model if self.best_model is not None else self.model
        self.log.summary = {
            "method": self.method,
            "stop_reason": stop_reason,
            "last_iteration": len(self.phase_vals),
            "returned_iteration": self.best_phase,
            "insertions": len(self.log.events),
            "epochs_total": self.counter[0],
            "best_val_loss": float(self.best_val),
            "final_train_loss": float(self.ops.loss(returned, self.train_ds)),
            "hidden_layers": self.ops.layer_count(returned),
            "param_count": self.ops.param_count(returned),
            "line_search_capped": bool(self.capped_any),
            "epoch_cap_hit": bool(self.epoch_cap_hit),
        }
        return returned, self.log


def _grow_guided(cfg, train_ds, val_ds, kind, model, mode, scheduled, method,
                 on_scan=None):
    """Common engine behind grow_semi and grow_auto."""
    ops = ops_for(kind)
    run = _GrowthRun(ops, cfg, train_ds, val_ds, model, method)
    run.train_phase(scheduled)
    i = 1
    while True:
        if i > cfg.max_iters:
            stop = STOP_MAX_ITERS
            break
        if run.validation_worsened():
            stop = STOP_VALIDATION
            break
        started = time.perf_counter()
        report = ops.scan(run.model, train_ds, mode, cfg.m, cfg.eps_s)
        if on_scan is not None:
            on_scan(i, run.model, report)
        if report.chosen is None or report.max_score < cfg.eps_threshold:
            stop = STOP_THRESHOLD
            break
        best = report.best()
        pre_loss = ops.loss(run.model, train_ds)
        eps_final, post_loss, capped = line_search(
            ops, run.model, train_ds, best.l, best.phi, cfg.eps, cfg.tau1)
        run.model = ops.insert(run.model, best.l, best.phi, eps_final)
        run.record_event(
            i, best.l, eps_final, best.m, pre_loss, post_loss,
            [e.lam for e in report.interfaces],
            [e.score for e in report.interfaces],
            report.max_score, capped, started,
        )
        run.train_phase(scheduled)
        i += 1
    return run.finish(stop)


def grow_semi(cfg, train_ds, val_ds, kind="fnn", model=None, on_scan=None):
    """Scheduler-driven growth: fixed-width insertions (m from the config),
    scheduled epochs per phase, stop on max-iterations, worsened validation,
    or a top score below eps_threshold."""
    return _grow_guided(cfg, train_ds, val_ds, kind, model, "fixed", True,
                        "semi", on_scan=on_scan)


def grow_auto(cfg, train_ds, val_ds, kind="fnn", model=None, on_scan=None):
    """Fully automated growth: insertion width from the eigenvalue-gap rule,
    score = lambda / width, and patience-stopped training phases."""
    return _grow_guided(cfg, train_ds, val_ds, kind, model, "auto", False,
                        "auto", on_scan=on_scan)


def _random_unit(rng, size):
    v = rng.standard_normal(size)
    return v / np.linalg.norm(v)


def grow_baseline(strategy, cfg, train_ds, val_ds, kind="fnn", model=None):
    """Comparison strategies with the same logging and stop conditions.

    random-insertion: uniform random interface, random unit direction at scale
    eps, no line search and no threshold. net2deeper: zero new layer plus
    N(0, sigma_n^2) noise at a random interface (exact identity when sigma_n
    is 0). forward-thinking: append at the last interface with N(0, sigma_n^2)
    weights and freeze everything trained before (output map stays trainable).
    fixed: train the final architecture from scratch in one phase spanning the
    whole epoch schedule.
    """
    if strategy not in STRATEGIES:
        raise ValueError("unknown strategy %r" % strategy)
    ops = ops_for(kind)
    if strategy == "fixed":
        total = sum(_phase_epochs(cfg, p) for p in range(1, cfg.max_iters + 2))
        flat = dataclasses.replace(
            cfg, init_layers=cfg.init_layers + cfg.max_iters,
            epochs_base=total, epochs_step=0, max_iters=0,
        )
        run = _GrowthRun(ops, flat, train_ds, val_ds, model, strategy)
        run.train_phase(True)
        return run.finish(STOP_MAX_ITERS)
    run = _GrowthRun(ops, cfg, train_ds, val_ds, model, strategy)
    run.train_phase(True)
    i = 1
    while True:
        if i > cfg.max_iters:
            stop = STOP_MAX_ITERS
            break
        if run.validation_worsened():
            stop = STOP_VALIDATION
            break
        started = time.perf_counter()
        pre_loss = ops.loss(run.model, train_ds)
        size = ops.direction_size(run.model)
        if strategy == "random-insertion":
            position = int(run.rng.integers(1, ops.interfaces(run.model) + 1))
            phi = _random_unit(run.rng, size)
            run.model = ops.insert(run.model, position, phi, cfg.eps)
            eps_used = cfg.eps
            m_used = 1
        elif strategy == "net2deeper":
            position = int(run.rng.integers(1, ops.interfaces(run.model) + 1))
            run.model = ops.insert(run.model, position, None, 0.0)
            _perturb_new_layer(run.model, kind, position, cfg.sigma_n, run.rng)
            eps_used = 0.0
            m_used = 0
        else:
            position = ops.interfaces(run.model)
            run.model = ops.insert(run.model, position, None, 0.0)
            _perturb_new_layer(run.model, kind, position, cfg.sigma_n, run.rng,
                               bias_too=True)
            _freeze_old_layers(run.model, kind, position)
            eps_used = 0.0
            m_used = 0
        post_loss = ops.loss(run.model, train_ds)
        run.record_event(i, position, eps_used, m_used, pre_loss, post_loss,
                         [], [], None, False, started)
        run.train_phase(True)
        i += 1
    return run.finish(stop)


def _perturb_new_layer(model, kind, position, sigma_n, rng, bias_too=True):
    if sigma_n == 0.0:
        return
    if kind == "fnn":
        model.ws[position] += sigma_n * rng.standard_normal(model.ws[position].shape)
        if bias_too:
            model.bs[position] += sigma_n * rng.standard_normal(model.bs[position].shape)
    else:
        model.thetas[position] += sigma_n * rng.standard_normal(3)


def _freeze_old_layers(model, kind, new_position):
    if kind == "fnn":
        model.input_trainable = False
        for idx in range(len(model.hidden_trainable)):
            model.hidden_trainable[idx] = idx == new_position
    else:
        model.trainable_rows[:] = False
        model.trainable_rows[new_position] = True


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

RUN_LOG_COLUMNS = ("epoch", "growth_iteration", "train_loss", "val_loss",
                   "hidden_layers", "param_count")


def write_run_log(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(RUN_LOG_COLUMNS) + "\n")
        for epoch, phase, tl, vl, layers, params in log.rows:
            fh.write("%d,%d,%s,%s,%d,%d\n"
                     % (epoch, phase, repr(tl), repr(vl), layers, params))


def write_events(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        for event in log.events:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")


def write_summary(summary, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
