"""Binary 64x64 rasterizer.

A pixel is lit iff its center lies inside any drawn shape; no anti-aliasing.
Horizontal geometry is computed relative to the image's vertical center line
so that mirrored states produce exactly mirrored frames.
"""

from __future__ import annotations

import math

import numpy as np

from .core import MC_MAX_POS, MC_MIN_POS, PM_GOAL, X_LIMIT, EnvState, get_spec

SIZE = 64
HALF = SIZE / 2

# pixel centers: columns relative to the vertical midline, rows from the top
_CX = (np.arange(SIZE) + 0.5 - HALF)[None, :]
_CY = (np.arange(SIZE) + 0.5)[:, None]

TRACK_ROW = 48
CART_HALF_W, CART_HALF_H = 6.0, 3.0
POLE_LENGTH = 24.0
POLE_HALF_THICKNESS = 1.0
CAR_RADIUS = 3.0
CAR_LIFT = 4.0
TERRAIN_TOP, TERRAIN_BOTTOM = 8.0, 56.0
TERRAIN_HALF_THICKNESS = 1.0
GOAL_RADIUS = 5.0
MASS_RADIUS = 3.0


def _segment_distance(x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    length2 = dx * dx + dy * dy
    px, py = _CX - x0, _CY - y0
    if length2 == 0.0:
        return np.sqrt(px * px + py * py)
    t = np.clip((px * dx + py * dy) / length2, 0.0, 1.0)
    ex, ey = px - t * dx, py - t * dy
    return np.sqrt(ex * ex + ey * ey)


def _disc(cx, cy, radius):
    dx, dy = _CX - cx, _CY - cy
    return dx * dx + dy * dy <= radius * radius


def cartpole_layers(s) -> dict[str, np.ndarray]:
    x, _, theta, _ = s
    u = x / X_LIMIT * HALF
    top = TRACK_ROW - CART_HALF_H
    track = np.broadcast_to(np.floor(_CY) == TRACK_ROW, (SIZE, SIZE))
    cart = (np.abs(_CX - u) <= CART_HALF_W) & (np.abs(_CY - TRACK_ROW) <= CART_HALF_H)
    pole = _segment_distance(u, top, u + POLE_LENGTH * math.sin(theta),
                             top - POLE_LENGTH * math.cos(theta)) <= POLE_HALF_THICKNESS
    return {"track": track, "cart": cart, "pole": pole}


def _terrain_row(p):
    return TERRAIN_BOTTOM - (np.sin(3.0 * p) + 1.0) / 2.0 * (TERRAIN_BOTTOM - TERRAIN_TOP)


def _column_of_position(p):
    return (p - MC_MIN_POS) / (MC_MAX_POS - MC_MIN_POS) * SIZE - HALF


def mountain_car_layers(s) -> dict[str, np.ndarray]:
    p = s[0]
    col_p = (_CX + HALF) / SIZE * (MC_MAX_POS - MC_MIN_POS) + MC_MIN_POS
    terrain = np.abs(_CY - _terrain_row(col_p)) <= TERRAIN_HALF_THICKNESS
    car = _disc(_column_of_position(p), _terrain_row(p) - CAR_LIFT, CAR_RADIUS)
    return {"terrain": terrain, "car": car}


def point_mass_layers(s) -> dict[str, np.ndarray]:
    x, y = s[0], s[1]
    gx, gy = PM_GOAL[0] * HALF, HALF - PM_GOAL[1] * HALF
    dx, dy = _CX - gx, _CY - gy
    goal = np.abs(np.sqrt(dx * dx + dy * dy) - GOAL_RADIUS) <= 0.5
    mass = _disc(x * HALF, HALF - y * HALF, MASS_RADIUS)
    return {"goal": goal, "mass": mass}


_LAYERS = {
    "cartpole-balance": cartpole_layers,
    "mountain-car": mountain_car_layers,
    "point-mass": point_mass_layers,
}


def render_layers(env, state: EnvState) -> dict[str, np.ndarray]:
    return _LAYERS[get_spec(env).id](state.s)


def render_mask(env, state: EnvState) -> np.ndarray:
    """Boolean 64x64 frame, row 0 at the top."""
    out = np.zeros((SIZE, SIZE), dtype=bool)
    for layer in render_layers(env, state).values():
        out |= layer
    return out


def render(env, state: EnvState) -> np.ndarray:
    """64x64 float frame with values in {0.0, 1.0}."""
    return render_mask(env, state).astype(np.float64)
