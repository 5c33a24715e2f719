"""Kernel lane selection: compiled extension when present, pure Python otherwise."""

from __future__ import annotations

import numpy as np

from . import _kernel_py

try:
    from . import _kernel
    HAVE_EXT = True
except ImportError:  # extension not built; fall back
    _kernel = None
    HAVE_EXT = False

CTRL_CODES = {
    "none": _kernel_py.CTRL_NONE,
    "monotone": _kernel_py.CTRL_MONOTONE,
    "nonmonotone": _kernel_py.CTRL_NONMONOTONE,
    "filter": _kernel_py.CTRL_FILTER,
    "joint": _kernel_py.CTRL_JOINT,
}


def active_lane() -> str:
    return "ext" if HAVE_EXT else "py"


def _lane_module(lane):
    if lane is None:
        return _kernel if HAVE_EXT else _kernel_py
    if lane == "ext":
        if not HAVE_EXT:
            raise RuntimeError("compiled kernel not available")
        return _kernel
    if lane == "py":
        return _kernel_py
    raise ValueError(f"unknown lane {lane!r}")


def run_trial(indptr, indices, lam_tab, mu, compete, masks0, beta0, q0,
              controller, alpha, gamma, beta_floor, grid, rng, lane=None):
    mod = _lane_module(lane)
    return mod.run_trial(
        np.ascontiguousarray(indptr, dtype=np.int32),
        np.ascontiguousarray(indices, dtype=np.int32),
        np.ascontiguousarray(lam_tab, dtype=np.float64),
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(compete, dtype=np.int32),
        np.ascontiguousarray(masks0, dtype=np.int32),
        np.ascontiguousarray(beta0, dtype=np.float64),
        float(q0), int(controller), float(alpha), float(gamma),
        float(beta_floor),
        np.ascontiguousarray(grid, dtype=np.float64), rng)


def jacobi_eigh(M, need_vectors=False, lane=None):
    mod = _lane_module(lane)
    return mod.jacobi_eigh(np.ascontiguousarray(M, dtype=np.float64),
                           bool(need_vectors))
