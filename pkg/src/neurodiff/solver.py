"""Training engine: fit loop, bundle solving, and the inverse-problem fit.

One network per unknown function; trial solutions are built through the
condition reparameterizations so constraints hold exactly at every epoch,
including epoch 0.  Each training step builds a fresh graph arena that is
discarded after the optimizer update.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as losses_mod
from .generators import make_rng
from .network import MLP, MLPSpec


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, kind, value):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} "
            f"(loss kind {kind!r}, value {value})"
        )
        self.epoch, self.batch, self.kind = epoch, batch, kind


@dataclass
class Problem:
    """Residual definition plus its sampling domain.

    ``residual(u, coords)`` receives the trial-solution nodes (one per
    unknown) and the coordinate variable nodes, and returns a sequence of
    residual nodes.  Bundle problems take a third ``params`` argument with
    the sampled parameter columns.
    """

    residual: object
    n_unknowns: int
    coord_names: tuple
    train_generator: object
    valid_generator: object


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class SGD:
    lr: float = 1e-3
    momentum: float = 0.0


@dataclass
class SolverConfig:
    networks: list = None  # one MLPSpec per unknown; None -> default [32, 32]
    conditions: list = None
    optimizer: object = field(default_factory=Adam)
    loss: losses_mod.LossSpec = field(default_factory=losses_mod.LossSpec)
    epochs: int = 1000
    batches_per_epoch: int = 1
    accumulation_passes: int = 1
    seed: int = 0


@dataclass(frozen=True)
class BundleLayout:
    """Named ranges for initial-condition and equation parameters.

    ``sampling`` is "uniform" or "arcsine"; arcsine draws from a Beta(1/2,
    1/2) over each range, which keeps full coverage while concentrating
    samples near the range endpoints where a trained family is evaluated
    hardest.
    """

    theta_ic: dict = field(default_factory=dict)
    theta_eq: dict = field(default_factory=dict)
    sampling: str = "uniform"

    def __post_init__(self):
        if self.sampling not in ("uniform", "arcsine"):
            raise ValueError(f"unknown sampling {self.sampling!r}")

    def names(self):
        return list(self.theta_ic) + list(self.theta_eq)

    def ranges(self):
        return {**self.theta_ic, **self.theta_eq}


class SolverState:
    def __init__(self, problem, config, layout=None):
        self.problem = problem
        self.config = config
        self.layout = layout
        self.epoch = 0
        self.step = 0
        self.train_history = []
        self.valid_history = []
        self.metrics = []
        self.loss_spec = config.loss
        self.lr = config.optimizer.lr
        self.train_generator = problem.train_generator
        self.valid_generator = problem.valid_generator
        self.stop_requested = False
        self.best_updated = False
        self.best_loss = math.inf
        self.best_epoch = -1
        self.best_params = None

        n_coords = len(problem.coord_names)
        n_theta = len(layout.names()) if layout else 0
        input_dim = n_coords + n_theta
        specs = config.networks
        if specs is None:
            specs = [MLPSpec(input_dim, (32, 32), 1, "tanh", config.seed + i)
                     for i in range(problem.n_unknowns)]
        if len(specs) != problem.n_unknowns:
            raise ValueError("one network spec per unknown is required")
        if len(config.conditions) != problem.n_unknowns:
            raise ValueError("one condition per unknown is required")
        for s in specs:
            # conditions may feed a network a subset of the coordinates
            # (e.g. only the radius of a harmonic expansion), never more
            if s.input_dim > input_dim:
                raise ValueError(
                    f"network input_dim {s.input_dim} exceeds "
                    f"{n_coords} coordinates + {n_theta} bundle parameters"
                )
        self.networks = [MLP.init(s) for s in specs]
        self.conditions = list(config.conditions)
        self._opt_state = None

    def snapshot_best(self):
        self.best_params = [
            ([w.copy() for w in n.weights], [b.copy() for b in n.biases])
            for n in self.networks
        ]


def _assemble(cols, input_dim):
    """Stack N x 1 column nodes into an N x input_dim batch node."""
    if len(cols) != input_dim:
        raise ad.ShapeError(
            f"expected {input_dim} input columns, got {len(cols)}"
        )
    total = None
    for d, col in enumerate(cols):
        onehot = np.zeros((1, input_dim))
        onehot[0, d] = 1.0
        term = ad.matmul(col, ad.constant(onehot))
        total = term if total is None else total + term
    return total


def _make_net_fn(mlp, pnodes, theta_cols):
    def net_fn(*cols):
        return mlp.forward(_assemble(list(cols) + list(theta_cols),
                                     mlp.spec.input_dim), pnodes)
    return net_fn


def _stack_residuals(res_list):
    res_list = list(res_list)
    m = len(res_list)
    if m == 1:
        return res_list[0]
    total = None
    for j, r in enumerate(res_list):
        onehot = np.zeros((1, m))
        onehot[0, j] = 1.0
        term = ad.matmul(r, ad.constant(onehot))
        total = term if total is None else total + term
    return total


def _build_loss(state, batch, param_nodes_per_net):
    """Trial solutions, residuals, and loss node for one coordinate batch."""
    problem = state.problem
    n_coords = len(problem.coord_names)
    coord_nodes = [ad.variable(batch[:, d:d + 1]) for d in range(n_coords)]
    if state.layout:
        names = state.layout.names()
        theta_cols = [ad.variable(batch[:, n_coords + k:n_coords + k + 1])
                      for k in range(len(names))]
        params = dict(zip(names, theta_cols))
    else:
        theta_cols, params = [], None
    u = []
    for net, cond, pnodes in zip(state.networks, state.conditions,
                                 param_nodes_per_net):
        net_fn = _make_net_fn(net, pnodes, theta_cols)
        u.append(cond.reparameterize(coord_nodes, net_fn, params=params))
    if state.layout:
        res = problem.residual(u, coord_nodes, params)
    else:
        res = problem.residual(u, coord_nodes)
    residuals = _stack_residuals(res)
    return losses_mod.loss(state.loss_spec, residuals, coords=coord_nodes)


def _sample_batch(state, rng, generator):
    """Coordinate batch, with bundle-parameter columns appended."""
    pts = generator.sample(rng)
    if state.layout:
        cols = [pts]
        for name, (lo, hi) in state.layout.ranges().items():
            if state.layout.sampling == "arcsine":
                u = rng.beta(0.5, 0.5, size=(pts.shape[0], 1))
            else:
                u = rng.uniform(size=(pts.shape[0], 1))
            cols.append(lo + (hi - lo) * u)
        pts = np.hstack(cols)
    return pts


def _adam_step(state, params, grads):
    opt = state.config.optimizer
    if state._opt_state is None:
        state._opt_state = {
            "m": [np.zeros_like(p) for p in params],
            "v": [np.zeros_like(p) for p in params],
            "t": 0,
        }
    s = state._opt_state
    s["t"] += 1
    t = s["t"]
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        s["m"][i] = opt.beta1 * s["m"][i] + (1 - opt.beta1) * g
        s["v"][i] = opt.beta2 * s["v"][i] + (1 - opt.beta2) * g * g
        mhat = s["m"][i] / (1 - opt.beta1 ** t)
        vhat = s["v"][i] / (1 - opt.beta2 ** t)
        out.append(p - state.lr * mhat / (np.sqrt(vhat) + opt.eps))
    return out


def _sgd_step(state, params, grads):
    opt = state.config.optimizer
    if state._opt_state is None:
        state._opt_state = {"v": [np.zeros_like(p) for p in params]}
    s = state._opt_state
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        s["v"][i] = opt.momentum * s["v"][i] + g
        out.append(p - state.lr * s["v"][i])
    return out


def _optimizer_step(state, params, grads):
    if isinstance(state.config.optimizer, Adam):
        return _adam_step(state, params, grads)
    return _sgd_step(state, params, grads)


def _train_batch(state, batch):
    """One optimizer step over a batch, with gradient accumulation."""
    cfg = state.config
    passes = max(1, cfg.accumulation_passes)
    chunks = np.array_split(batch, passes) if passes > 1 else [batch]
    chunks = [c for c in chunks if c.shape[0] > 0]

    param_arrays = []
    for net in state.networks:
        for w, b in zip(net.weights, net.biases):
            param_arrays.append(w)
            param_arrays.append(b.reshape(1, -1))

    loss_values = []

    def loss_fn(chunk):
        pnodes_per_net = [net.param_nodes() for net in state.networks]
        flat = [p for nodes in pnodes_per_net for p in nodes]
        loss_node = _build_loss(state, chunk, pnodes_per_net)
        loss_values.append((float(loss_node.value), chunk.shape[0]))
        return loss_node, flat

    with ad.Graph():
        grads = ad.accumulate_gradients(loss_fn, chunks)
    total = sum(n for _, n in loss_values)
    train_loss = sum(v * n for v, n in loss_values) / total
    if not math.isfinite(train_loss):
        raise TrainingDiverged(state.epoch, state.step, state.loss_spec.kind,
                               train_loss)
    new = _optimizer_step(state, param_arrays, grads)
    i = 0
    for net in state.networks:
        for k in range(len(net.weights)):
            net.weights[k] = new[i]
            net.biases[k] = new[i + 1].reshape(net.biases[k].shape)
            i += 2
    state.step += 1
    return train_loss


def _validation_loss(state, rng):
    batch = _sample_batch(state, rng, state.valid_generator)
    with ad.Graph():
        pnodes = [net.param_nodes(requires_grad=False)
                  for net in state.networks]
        loss_node = _build_loss(state, batch, pnodes)
    return float(loss_node.value)


def fit(problem, config, callbacks=(), layout=None, state=None):
    """Train the networks; returns the final SolverState.

    Per epoch: ``batches_per_epoch`` optimizer steps, then one validation
    pass (no gradient step), then the callbacks in registration order.
    Deterministic under a fixed config seed.
    """
    if state is None:
        state = SolverState(problem, config, layout)
    for epoch in range(1, config.epochs + 1):
        epoch_losses = []
        for b in range(config.batches_per_epoch):
            rng = make_rng(config.seed, stream=2 * (epoch * config.batches_per_epoch + b))
            batch = _sample_batch(state, rng, state.train_generator)
            epoch_losses.append(_train_batch(state, batch))
        state.epoch = epoch
        train_loss = float(np.mean(epoch_losses))
        valid_loss = _validation_loss(state, make_rng(config.seed, stream=1))
        if not math.isfinite(valid_loss):
            raise TrainingDiverged(epoch, -1, state.loss_spec.kind, valid_loss)
        state.train_history.append(train_loss)
        state.valid_history.append(valid_loss)
        if valid_loss < state.best_loss:
            state.best_loss = valid_loss
            state.best_epoch = epoch
            state.snapshot_best()
            state.best_updated = True
        else:
            state.best_updated = False
        state.metrics.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "valid_loss": valid_loss,
            "loss_kind": state.loss_spec.kind,
            "lr": state.lr,
        })
        for cb in callbacks:
            if cb.condition.evaluate(state):
                for action in cb.actions:
                    action.apply(state)
        if state.stop_requested:
            break
    return state


def fit_bundle(problem, layout, config, callbacks=()):
    """Train over a family of problems; networks take (coords, theta) inputs."""
    return fit(problem, config, callbacks, layout=layout)


class Solution:
    """Frozen, vectorized, side-effect-free view of the trained solution."""

    def __init__(self, networks, conditions, coord_names, layout=None):
        self.networks = [n.copy() for n in networks]
        self.conditions = list(conditions)
        self.coord_names = tuple(coord_names)
        self.layout = layout

    def __call__(self, *arrays, **named):
        """Evaluate at coordinate arrays (bundle parameters may be passed as
        extra positional arrays/scalars or by name)."""
        theta_names = self.layout.names() if self.layout else []
        expected = len(self.coord_names) + len(theta_names)
        args = list(arrays)
        if named:
            for name in theta_names[len(args) - len(self.coord_names):]:
                if name in named:
                    args.append(named.pop(name))
            if named:
                raise ValueError(f"unknown parameters {sorted(named)}")
        if len(args) != expected:
            raise ValueError(
                f"expected {expected} inputs "
                f"({len(self.coord_names)} coordinates + "
                f"{len(theta_names)} parameters), got {len(args)}"
            )
        cols = [np.asarray(a, dtype=float).reshape(-1, 1) for a in args]
        n = max(c.shape[0] for c in cols)
        cols = [np.broadcast_to(c, (n, 1)).copy() if c.shape[0] == 1 else c
                for c in cols]
        n_coords = len(self.coord_names)
        with ad.Graph():
            coord_nodes = [ad.variable(c) for c in cols[:n_coords]]
            theta_cols = [ad.variable(c) for c in cols[n_coords:]]
            params = dict(zip(theta_names, theta_cols)) if theta_names else None
            outs = []
            for net, cond in zip(self.networks, self.conditions):
                pnodes = net.param_nodes(requires_grad=False)
                net_fn = _make_net_fn(net, pnodes, theta_cols)
                u = cond.reparameterize(coord_nodes, net_fn, params=params)
                outs.append(u.value.reshape(-1).copy())
        return outs[0] if len(outs) == 1 else outs


def get_solution(state, strategy="best"):
    if strategy not in ("best", "latest"):
        raise ValueError(f"unknown strategy {strategy!r}")
    networks = [n.copy() for n in state.networks]
    if strategy == "best" and state.best_params is not None:
        for net, (ws, bs) in zip(networks, state.best_params):
            net.weights = [w.copy() for w in ws]
            net.biases = [b.copy() for b in bs]
    return Solution(networks, state.conditions, state.problem.coord_names,
                    state.layout)


def fit_inverse(solution, data, init_theta, steps=500, lr=0.05):
    """Recover bundle parameters from observations by gradient descent.

    ``data`` is a sequence of (coords, value) pairs (coords a tuple for
    multi-coordinate problems).  Network weights stay frozen; only the
    parameter inputs move, and the result is clipped to the layout ranges.
    """
    data = list(data)
    if not data:
        raise ValueError("fit_inverse needs at least one observation")
    if solution.layout is None:
        raise ValueError("solution has no bundle parameters to fit")
    names = solution.layout.names()
    ranges = solution.layout.ranges()
    for name in init_theta:
        if name not in ranges:
            raise ValueError(f"unknown parameter {name!r}")
    theta = {k: float(init_theta[k]) for k in names}

    rows = [([d[0]] if np.isscalar(d[0]) else list(d[0])) for d in data]
    coords = np.array(rows, dtype=float)
    values = np.array([d[1] for d in data], dtype=float).reshape(-1, 1)
    n = coords.shape[0]
    n_coords = len(solution.coord_names)

    for _ in range(steps):
        with ad.Graph():
            coord_nodes = [ad.variable(coords[:, d:d + 1], requires_grad=True)
                           for d in range(n_coords)]
            ones = ad.constant(np.ones((n, 1)))
            theta_vars = {k: ad.variable(np.full((1, 1), theta[k]))
                          for k in names}
            theta_cols = [ad.matmul(ones, theta_vars[k]) for k in names]
            params = dict(zip(names, theta_cols))
            preds = []
            for net, cond in zip(solution.networks, solution.conditions):
                pnodes = net.param_nodes(requires_grad=False)
                net_fn = _make_net_fn(net, pnodes, theta_cols)
                preds.append(cond.reparameterize(coord_nodes, net_fn,
                                                 params=params))
            # observations are of the first unknown
            mismatch = preds[0] - ad.constant(values)
            loss = ad.reduce_mean(mismatch ** 2)
            grads = ad.backward(loss, [theta_vars[k] for k in names])
        for k, g in zip(names, grads):
            lo, hi = ranges[k]
            theta[k] = float(np.clip(theta[k] - lr * g.value.item(), lo, hi))
    return theta
