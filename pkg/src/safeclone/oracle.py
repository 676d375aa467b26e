"""Brute-force oracles for the adversarial disturbance synthesis.

Two independent checks live here:

* a grid-based robust value iteration for the Dubins system, whose converged
  value function yields the worst-case disturbance field that the sampling
  solver is compared against, and
* an exhaustive minimax dynamic program on 1D control-affine instances that
  numerically reproduces the max-min / single-input reduction together with
  the bang-bang strategy recovery.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import mppi
from .errors import ContractError, ConvergenceError, FormatError
from .seeding import derive_seed, substream


# ---------------------------------------------------------------------------
# Robust value iteration on the Dubins grid
# ---------------------------------------------------------------------------

@dataclass
class ValueGrid:
    """Converged robust value function on a (p_x, p_y, theta) grid.

    theta is periodic; values are everywhere <= the safety margin at the
    nodes (the backup takes a running min against it).
    """

    xs: np.ndarray
    ys: np.ndarray
    thetas: np.ndarray
    values: np.ndarray  # (nx, ny, nt)
    d_bar: float
    tol: float
    iterations: int
    converged: bool
    gradient_eps: float = 1e-3

    @property
    def theta_spacing(self) -> float:
        return 2.0 * np.pi / len(self.thetas)


def _locate_clamped(axis, q):
    """Cell index and fraction for queries, clamped to the axis range."""
    h = axis[1] - axis[0]
    s = (np.asarray(q) - axis[0]) / h
    i = np.clip(np.floor(s).astype(np.int64), 0, len(axis) - 2)
    t = np.clip(s - i, 0.0, 1.0)
    return i, t


def _locate_periodic(thetas, q):
    n = len(thetas)
    h = 2.0 * np.pi / n
    s = (np.asarray(q) - thetas[0]) / h
    i0 = np.floor(s).astype(np.int64)
    t = s - i0
    return np.mod(i0, n), np.mod(i0 + 1, n), t


def interpolate(grid: ValueGrid, states) -> np.ndarray:
    """Trilinear interpolation of the value grid at (..., 3) states.

    x/y are clamped to the grid (edge-value extension); theta wraps.
    """
    states = np.asarray(states, dtype=float)
    ix, fx = _locate_clamped(grid.xs, states[..., 0])
    iy, fy = _locate_clamped(grid.ys, states[..., 1])
    it0, it1, ft = _locate_periodic(grid.thetas, states[..., 2])
    v = grid.values
    out = np.zeros(states.shape[:-1])
    for a, wx in ((0, 1.0 - fx), (1, fx)):
        for b, wy in ((0, 1.0 - fy), (1, fy)):
            out += wx * wy * ((1.0 - ft) * v[ix + a, iy + b, it0]
                              + ft * v[ix + a, iy + b, it1])
    return out


def value_iteration(model, world, d_bar: float, shape=(51, 51, 51), bounds=None,
                    num_controls: int = 21, tol: float = 1e-6,
                    max_iters: int = 500, gradient_eps: float = 1e-3,
                    on_sweep=None) -> ValueGrid:
    """Robust Dubins value iteration against a bang-bang yaw disturbance.

    Backup rule, iterated from V_0 = l until the max-norm change drops
    below ``tol``:

        V_{k+1}(x) = min( l(x),  max_u  min_{d in {-d_bar, +d_bar}}
                                  V_k(f(x, u + d)) )

    with u on a uniform ``num_controls``-point grid and multilinear
    interpolation of V_k between nodes.
    """
    omega_max = float(model.control_bounds[0])
    if not 0.0 <= d_bar < omega_max:
        raise ContractError("d_bar must lie in [0, omega_max)")
    nx, ny, nt = shape
    if bounds is None:
        bounds = world.bounds
    xs = np.linspace(bounds[0][0], bounds[0][1], nx)
    ys = np.linspace(bounds[1][0], bounds[1][1], ny)
    thetas = -np.pi + 2.0 * np.pi * np.arange(nt) / nt

    margin = world.signed_distance(
        np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1))  # (nx, ny)
    margin = np.broadcast_to(margin[:, :, None], (nx, ny, nt)).copy()

    # Next positions depend on (x, theta) and (y, theta) only; the heading
    # update depends on (theta, u + d) only. Precompute all interpolation
    # indices and corner weights once, they are fixed across sweeps.
    step = model.dt * model.speed
    px = xs[:, None] + step * np.cos(thetas)[None, :]  # (nx, nt)
    py = ys[:, None] + step * np.sin(thetas)[None, :]  # (ny, nt)
    ix0, fx = _locate_clamped(xs, px)
    iy0, fy = _locate_clamped(ys, py)

    u_grid = np.linspace(-omega_max, omega_max, num_controls)
    zs = np.stack([u_grid - d_bar, u_grid + d_bar], axis=1).ravel()  # (2*nu,)
    tn = thetas[:, None] + model.dt * zs[None, :]
    it0, it1, ft = _locate_periodic(thetas, tn)  # each (nt, nz)

    corner_weight = []
    corner_flat = []
    for a, wx in ((0, 1.0 - fx), (1, fx)):
        for b, wy in ((0, 1.0 - fy), (1, fy)):
            corner_weight.append(wx[:, None, :] * wy[None, :, :])
            corner_flat.append(((ix0 + a)[:, None, :] * ny + (iy0 + b)[None, :, :]) * nt)

    values = margin.copy()
    iterations = 0
    residual = np.inf
    for iterations in range(1, max_iters + 1):
        flat = values.ravel()
        best = None
        for iu in range(num_controls):
            worst = None
            for j in (0, 1):
                z = 2 * iu + j
                acc = np.zeros((nx, ny, nt))
                for w, base in zip(corner_weight, corner_flat):
                    g0 = flat[base + it0[:, z]]
                    g1 = flat[base + it1[:, z]]
                    acc += w * (g0 * (1.0 - ft[:, z]) + g1 * ft[:, z])
                worst = acc if worst is None else np.minimum(worst, acc)
            best = worst if best is None else np.maximum(best, worst)
        new_values = np.minimum(margin, best)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if on_sweep is not None:
            on_sweep(iterations, values, residual)
        if residual < tol:
            return ValueGrid(xs, ys, thetas, values, float(d_bar), tol,
                             iterations, True, gradient_eps)
    raise ConvergenceError(residual, iterations)


def theta_gradient(grid: ValueGrid, states) -> np.ndarray:
    """Central-difference dV/dtheta of the interpolated value at (..., 3) states."""
    states = np.asarray(states, dtype=float)
    h = grid.theta_spacing
    hi = states.copy()
    lo = states.copy()
    hi[..., 2] += h
    lo[..., 2] -= h
    return (interpolate(grid, hi) - interpolate(grid, lo)) / (2.0 * h)


def oracle_disturbance(grid: ValueGrid, state):
    """Worst-case yaw disturbance at ``state``, from the value gradient.

    Returns the 1-vector disturbance, or None where the heading gradient is
    below ``grid.gradient_eps`` (disturbance direction has no effect there).
    Queries outside the grid's position range raise ContractError.
    """
    state = np.asarray(state, dtype=float)
    if not (grid.xs[0] <= state[0] <= grid.xs[-1]
            and grid.ys[0] <= state[1] <= grid.ys[-1]):
        raise ContractError("query state lies outside the value grid")
    g = float(theta_gradient(grid, state))
    if abs(g) < grid.gradient_eps:
        return None
    return np.array([-grid.d_bar * np.sign(g)])


def sample_verification_states(grid: ValueGrid, world, num_samples: int,
                               rng) -> np.ndarray:
    """Uniform free-space states with non-degenerate heading gradient."""
    states = np.empty((0, 3))
    while len(states) < num_samples:
        n = 2 * (num_samples - len(states)) + 64
        cand = np.column_stack([
            rng.uniform(grid.xs[0], grid.xs[-1], n),
            rng.uniform(grid.ys[0], grid.ys[-1], n),
            rng.uniform(-np.pi, np.pi, n),
        ])
        free = world.signed_distance(cand[:, :2]) > 0.0
        alive = np.abs(theta_gradient(grid, cand)) >= grid.gradient_eps
        states = np.concatenate([states, cand[free & alive]])
    return states[:num_samples]


def disturbance_field_mse(grid: ValueGrid, model, world, config: mppi.MppiConfig,
                          num_samples: int, seed: int, method: str = "mppi",
                          on_diagnostics=None) -> float:
    """Mean squared disturbance disagreement over sampled free-space states.

    ``method="oracle"`` compares the oracle field against itself (a zero
    baseline for the pipeline); ``"mppi"`` runs one solve per sampled state
    and extracts the bang-bang disturbance from the first input's sign.
    """
    from .guidance import bang_bang_disturbance

    if method not in ("mppi", "oracle"):
        raise ContractError(f"unknown comparison method {method!r}")
    rng = substream(seed, "mse-states")
    states = sample_verification_states(grid, world, num_samples, rng)
    g = theta_gradient(grid, states)
    d_oracle = -grid.d_bar * np.sign(g)
    if method == "oracle":
        d_method = d_oracle
    else:
        d_bar_vec = np.array([grid.d_bar])
        d_method = np.empty(num_samples)
        for i, state in enumerate(states):
            cfg = mppi.MppiConfig(
                num_samples=config.num_samples, horizon=config.horizon,
                elite_k=config.elite_k, temperature=config.temperature,
                input_bound=config.input_bound, sampling_std=config.sampling_std,
                seed=derive_seed(seed, "solve", i), batch_size=config.batch_size)
            res = mppi.solve(model, world, state, cfg, on_diagnostics=on_diagnostics)
            d_method[i] = bang_bang_disturbance(
                mppi.extract_first_input(res), d_bar_vec)[0]
    return float(np.mean((d_method - d_oracle) ** 2))


def disturbance_field_slice(grid: ValueGrid, model, world, config: mppi.MppiConfig,
                            seed: int, theta: float = 0.0, on_diagnostics=None) -> dict:
    """Both disturbance fields on the theta slice, one row per (x, y) node."""
    from .guidance import bang_bang_disturbance

    d_bar_vec = np.array([grid.d_bar])
    rows = {"x": [], "y": [], "d_mppi": [], "d_oracle": [], "degenerate": []}
    for i, x in enumerate(grid.xs):
        for j, y in enumerate(grid.ys):
            state = np.array([x, y, theta])
            g = float(theta_gradient(grid, state))
            degenerate = abs(g) < grid.gradient_eps
            cfg = mppi.MppiConfig(
                num_samples=config.num_samples, horizon=config.horizon,
                elite_k=config.elite_k, temperature=config.temperature,
                input_bound=config.input_bound, sampling_std=config.sampling_std,
                seed=derive_seed(seed, "slice", i, j), batch_size=config.batch_size)
            res = mppi.solve(model, world, state, cfg, on_diagnostics=on_diagnostics)
            d_m = bang_bang_disturbance(mppi.extract_first_input(res), d_bar_vec)[0]
            rows["x"].append(float(x))
            rows["y"].append(float(y))
            rows["d_mppi"].append(float(d_m))
            rows["d_oracle"].append(0.0 if degenerate else float(-grid.d_bar * np.sign(g)))
            rows["degenerate"].append(bool(degenerate))
    return rows


def save_value_grid(grid: ValueGrid, path):
    header = {
        "xs": [float(grid.xs[0]), float(grid.xs[-1]), len(grid.xs)],
        "ys": [float(grid.ys[0]), float(grid.ys[-1]), len(grid.ys)],
        "n_theta": len(grid.thetas),
        "shape": list(grid.values.shape),
        "d_bar": grid.d_bar,
        "tol": grid.tol,
        "iterations": grid.iterations,
        "converged": grid.converged,
        "gradient_eps": grid.gradient_eps,
        "dtype": "float64",
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(np.ascontiguousarray(grid.values, dtype=np.float64).tobytes())


def load_value_grid(path) -> ValueGrid:
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
        shape = tuple(header["shape"])
        expected = np.prod(shape) * 8
        if len(blob) != expected:
            raise FormatError(f"value blob has {len(blob)} bytes, expected {expected}")
        values = np.frombuffer(blob, dtype=np.float64).reshape(shape).copy()
        xs = np.linspace(header["xs"][0], header["xs"][1], int(header["xs"][2]))
        ys = np.linspace(header["ys"][0], header["ys"][1], int(header["ys"][2]))
        nt = int(header["n_theta"])
        thetas = -np.pi + 2.0 * np.pi * np.arange(nt) / nt
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed value-grid file: {exc}") from exc
    return ValueGrid(xs, ys, thetas, values, header["d_bar"], header["tol"],
                     header["iterations"], header["converged"], header["gradient_eps"])


# ---------------------------------------------------------------------------
# Exhaustive minimax reduction check on 1D control-affine instances
# ---------------------------------------------------------------------------

def matched_w_grid(u_grid, d_grid, u_max: float, d_max: float) -> np.ndarray:
    """{u + d} intersected with [-(u_max - d_max), u_max - d_max], deduplicated."""
    w_bound = u_max - d_max
    sums = np.sort((np.asarray(u_grid)[:, None] + np.asarray(d_grid)[None, :]).ravel())
    keep = [s for s in sums if abs(s) <= w_bound + 1e-12]
    out = []
    for s in keep:
        if not out or s - out[-1] > 1e-12:
            out.append(s)
    return np.asarray(out)


@dataclass(frozen=True)
class ReductionInstance:
    """1D control-affine game x' = f1(x) + f2(x) * (u + d) on a state grid.

    f1, f2 and the safety margin are tables over ``xs``; the input grids are
    symmetric and the w grid must match {u + d} clipped to the shrunken bound.
    """

    xs: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    margin: np.ndarray
    u_max: float
    d_max: float
    horizon: int
    u_grid: np.ndarray
    d_grid: np.ndarray
    w_grid: np.ndarray

    def __post_init__(self):
        if not self.u_max > self.d_max:
            raise ContractError("instance requires u_max > d_max")
        if self.d_max < 0:
            raise ContractError("d_max must be >= 0")
        if self.horizon < 0:
            raise ContractError("horizon must be >= 0")
        for name in ("f1", "f2", "margin"):
            if len(getattr(self, name)) != len(self.xs):
                raise ContractError(f"{name} table length differs from state grid")


@dataclass(frozen=True)
class ReductionReport:
    v_maxmin: np.ndarray  # (T+1, n) Problem-1 value by exhaustive minimax DP
    v_single: np.ndarray  # (T+1, n) Problem-2 value by single-input DP
    max_diff: float
    strategy_max_err: float
    u_star: np.ndarray  # (n,) recovered control at t=0 (nan where w*=0)
    d_star: np.ndarray  # (n,) recovered disturbance at t=0


def _interp_extrap(xs, v, q):
    """1D linear interpolation with linear extrapolation beyond the grid."""
    i = np.clip(np.searchsorted(xs, q) - 1, 0, len(xs) - 2)
    t = (q - xs[i]) / (xs[i + 1] - xs[i])
    return v[i] * (1.0 - t) + v[i + 1] * t


def check_reduction(instance: ReductionInstance) -> ReductionReport:
    """Run both dynamic programs and the strategy recovery on one instance.

    The single-input value is computed over the matched w grid; the minimax
    value enumerates every (u, d) pair with the disturbance countering the
    committed control. Both share the same interpolation.
    """
    expected_w = matched_w_grid(instance.u_grid, instance.d_grid,
                                instance.u_max, instance.d_max)
    if len(expected_w) != len(instance.w_grid) or np.any(
            np.abs(expected_w - instance.w_grid) > 1e-12):
        raise ContractError("w grid does not match {u + d} under the shrunken bound")

    xs, f1, f2 = instance.xs, instance.f1, instance.f2
    n = len(xs)
    T = instance.horizon
    zs = (instance.u_grid[:, None] + instance.d_grid[None, :]).ravel()
    x_game = f1[:, None] + f2[:, None] * zs[None, :]  # (n, nu*nd)
    x_single = f1[:, None] + f2[:, None] * instance.w_grid[None, :]  # (n, nw)

    v1 = np.empty((T + 1, n))
    v2 = np.empty((T + 1, n))
    v1[T] = instance.margin
    v2[T] = instance.margin
    for t in range(T - 1, -1, -1):
        game = _interp_extrap(xs, v1[t + 1], x_game).reshape(
            n, len(instance.u_grid), len(instance.d_grid))
        v1[t] = np.minimum(instance.margin, game.min(axis=2).max(axis=1))
        single = _interp_extrap(xs, v2[t + 1], x_single)
        v2[t] = np.minimum(instance.margin, single.max(axis=1))

    max_diff = float(np.max(np.abs(v1 - v2))) if T > 0 else 0.0

    # Strategy recovery: the bang-bang disturbance and the shifted control
    # must reproduce the single-input backup when played in the game backup.
    strategy_max_err = 0.0
    u_star0 = np.full(n, np.nan)
    d_star0 = np.full(n, np.nan)
    for t in range(T):
        single = _interp_extrap(xs, v2[t + 1], x_single)
        best = np.argmax(single, axis=1)
        w_star = instance.w_grid[best]
        backup = single[np.arange(n), best]
        active = w_star != 0.0
        u_star = np.where(w_star > 0, w_star + instance.d_max, w_star - instance.d_max)
        if np.any(np.abs(u_star[active]) > instance.u_max + 1e-12):
            raise ContractError("recovered control left the admissible range")
        d_star = np.where(w_star > 0, -instance.d_max, instance.d_max)
        x_reply = (f1[:, None] + f2[:, None]
                   * (u_star[:, None] + instance.d_grid[None, :]))
        reply = _interp_extrap(xs, v1[t + 1], x_reply).min(axis=1)
        if np.any(active):
            err = float(np.max(np.abs(reply[active] - backup[active])))
            strategy_max_err = max(strategy_max_err, err)
        if t == 0:
            u_star0 = np.where(active, u_star, np.nan)
            d_star0 = np.where(active, d_star, np.nan)

    return ReductionReport(v1, v2, max_diff, strategy_max_err, u_star0, d_star0)


def random_reduction_instance(seed: int, family: str | None = None) -> ReductionInstance:
    """Randomized instance in a regime where the reduction is numerically exact.

    The equality between the two dynamic programs inherits the first-order
    (locally linear value) premise of the underlying argument; at a strict
    concave kink a committed control cannot hold the peak against a countering
    disturbance. The generator therefore draws from three exact regimes:

    * ``monotone`` -- strictly monotone safety margins with translation-plus-
      scaled-input dynamics, where both programs provably meet at the same
      extreme input;
    * ``free`` -- no disturbance (d_max = 0), arbitrary rough landscapes;
    * ``terminal`` -- horizon 0 base case.
    """
    rng = substream(seed, "reduction-instance")
    if family is None:
        family = rng.choice(["monotone", "monotone", "free", "terminal"])
    n = int(rng.integers(41, 202))
    half_width = rng.uniform(2.0, 5.0)
    xs = np.linspace(-half_width, half_width, n)
    u_max = rng.uniform(0.4, 1.5)
    nu = int(rng.choice([5, 7, 9, 11, 15, 21]))
    u_grid = np.linspace(-u_max, u_max, nu)
    scale = rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 0.3)
    drift = rng.choice([-1.0, 1.0]) * rng.uniform(0.0, 0.5)

    if family == "terminal":
        margin = np.cumsum(rng.normal(0.0, 0.3, n))
        margin -= np.median(margin)
        d_max = rng.uniform(0.1, 0.8) * u_max
        d_grid = np.array([-d_max, 0.0, d_max])
        horizon = 0
    elif family == "free":
        margin = np.cumsum(rng.normal(0.0, 0.3, n))
        margin -= np.median(margin)
        d_max = 0.0
        d_grid = np.array([0.0])
        horizon = int(rng.integers(1, 8))
    elif family == "monotone":
        increments = rng.uniform(0.02, 0.5, n - 1)
        margin = np.concatenate([[0.0], np.cumsum(increments)])
        margin -= margin[n // 2]
        margin *= rng.choice([-1.0, 1.0])
        d_max = rng.uniform(0.15, 0.85) * u_max
        nd = int(rng.choice([2, 3, 5]))
        d_grid = (np.array([-d_max, d_max]) if nd == 2
                  else np.linspace(-d_max, d_max, nd))
        horizon = int(rng.integers(1, 9))
    else:
        raise ContractError(f"unknown instance family {family!r}")

    if family == "free":
        f1 = xs + drift + rng.uniform(0.0, 0.4) * np.sin(rng.uniform(0.5, 2.0) * xs)
        f2 = scale * (1.0 + 0.5 * np.sin(rng.uniform(0.5, 2.0) * xs))
    else:
        f1 = xs + drift
        f2 = np.full(n, scale)

    w_grid = matched_w_grid(u_grid, d_grid, u_max, d_max)
    return ReductionInstance(xs, f1, f2, margin, float(u_max), float(d_max),
                             horizon, u_grid, d_grid, w_grid)


def reduction_suite(num_instances: int = 50, seed: int = 0) -> list[ReductionInstance]:
    """The default randomized suite, mixing all three exact regimes."""
    families = ["monotone", "monotone", "monotone", "free", "terminal"]
    return [
        random_reduction_instance(derive_seed(seed, "suite", i),
                                  family=families[i % len(families)])
        for i in range(num_instances)
    ]
