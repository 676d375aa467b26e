"""Discrete-time dynamics models behind a uniform black-box step interface.

All models broadcast over leading batch dimensions: ``step`` accepts states of
shape ``(..., n_x)`` and controls of shape ``(..., n_u)`` and is a pure,
deterministic function of its arguments.
"""

import numpy as np

from .errors import ContractError, RolloutDivergedError

GRAVITY = 9.81  # m/s^2


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]; exact identity for angles already inside."""
    theta = np.asarray(theta)
    outside = (theta > np.pi) | (theta <= -np.pi)
    return np.where(outside, np.pi - np.mod(np.pi - theta, 2.0 * np.pi), theta)


def _check_dims(name, arr, dim):
    if arr.shape[-1] != dim:
        raise ContractError(f"{name} has trailing dimension {arr.shape[-1]}, expected {dim}")


class DubinsCar:
    """Unicycle at constant forward speed; the control is yaw rate.

    State (p_x m, p_y m, theta rad), control (omega rad/s).
      p_x'   = p_x + dt * v * cos(theta)
      p_y'   = p_y + dt * v * sin(theta)
      theta' = theta + dt * omega     (wrapped to (-pi, pi])
    """

    name = "dubins3"
    n_x = 3
    n_u = 1

    def __init__(self, dt: float = 0.1, speed: float = 1.0, omega_max: float = 1.0):
        if dt <= 0:
            raise ContractError("dt must be positive")
        self.dt = float(dt)
        self.speed = float(speed)
        self.control_bounds = np.array([float(omega_max)])

    def step(self, state, control):
        state = np.asarray(state, dtype=float)
        control = np.asarray(control, dtype=float)
        _check_dims("state", state, self.n_x)
        _check_dims("control", control, self.n_u)
        out = np.empty(np.broadcast_shapes(state.shape[:-1], control.shape[:-1]) + (3,))
        theta = state[..., 2]
        out[..., 0] = state[..., 0] + self.dt * self.speed * np.cos(theta)
        out[..., 1] = state[..., 1] + self.dt * self.speed * np.sin(theta)
        out[..., 2] = wrap_angle(theta + self.dt * control[..., 0])
        return out

    def positions(self, state):
        return np.asarray(state)[..., :2]

    def params(self) -> dict:
        return {"id": self.name, "dt": self.dt, "speed": self.speed,
                "omega_max": float(self.control_bounds[0])}


class PlanarQuadrotor:
    """Planar 4D quadrotor; pitch/roll commands tilt the thrust vector.

    State (p_x, p_y, v_x, v_y), control (pitch theta, roll phi), both in rad.
    Forward-Euler integration of
      p_x' = v_x,  p_y' = v_y,  v_x' = g*tan(theta),  v_y' = -g*tan(phi)
    """

    name = "quad4d"
    n_x = 4
    n_u = 2

    def __init__(self, dt: float = 0.1, tilt_max: float = 0.1745):
        if dt <= 0:
            raise ContractError("dt must be positive")
        self.dt = float(dt)
        self.control_bounds = np.array([float(tilt_max), float(tilt_max)])

    def step(self, state, control):
        state = np.asarray(state, dtype=float)
        control = np.asarray(control, dtype=float)
        _check_dims("state", state, self.n_x)
        _check_dims("control", control, self.n_u)
        out = np.empty(np.broadcast_shapes(state.shape[:-1], control.shape[:-1]) + (4,))
        out[..., 0] = state[..., 0] + self.dt * state[..., 2]
        out[..., 1] = state[..., 1] + self.dt * state[..., 3]
        out[..., 2] = state[..., 2] + self.dt * GRAVITY * np.tan(control[..., 0])
        out[..., 3] = state[..., 3] - self.dt * GRAVITY * np.tan(control[..., 1])
        return out

    def positions(self, state):
        return np.asarray(state)[..., :2]

    def params(self) -> dict:
        return {"id": self.name, "dt": self.dt,
                "tilt_max": float(self.control_bounds[0])}


def rollout(model, x0, inputs) -> np.ndarray:
    """Simulate ``x_{k+1} = step(x_k, inputs[k])``; returns (len(inputs)+1, n_x).

    Raises RolloutDivergedError (carrying the step index) on a non-finite state.
    """
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.n_u)
    states = np.empty((len(inputs) + 1, model.n_x))
    states[0] = x0
    for k in range(len(inputs)):
        states[k + 1] = model.step(states[k], inputs[k])
        if not np.all(np.isfinite(states[k + 1])):
            raise RolloutDivergedError(k + 1)
    return states


_MODELS = {"dubins3": DubinsCar, "quad4d": PlanarQuadrotor}


def make_model(model_id: str, **params):
    """Model selection by string identifier ("dubins3" or "quad4d")."""
    try:
        cls = _MODELS[model_id]
    except KeyError:
        raise ContractError(f"unknown model id {model_id!r}") from None
    return cls(**params)
