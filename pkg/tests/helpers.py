"""Shared test utilities: finite-difference oracle and tiny fixtures."""

import numpy as np

from siamnas.autodiff import Tape
from siamnas.graphs import CellSpec, encode_cell

FD_STEP = 1e-5
FD_RTOL = 1e-4
FD_ATOL = 1e-7  # floor for fd roundoff noise on near-zero gradients


def finite_difference(fn, arr, h=FD_STEP):
    """Central finite differences of scalar fn w.r.t. every entry of arr,
    mutating arr in place and restoring it."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        up = fn()
        arr[idx] = orig - h
        down = fn()
        arr[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rtol=FD_RTOL, atol=FD_ATOL, name=""):
    if not np.allclose(analytic, numeric, rtol=rtol, atol=atol):
        worst = np.abs(analytic - numeric).max()
        raise AssertionError(
            f"gradient mismatch{' for ' + name if name else ''}: "
            f"max abs diff {worst}")


def tape_scalar(build):
    """Run ``build(tape)`` and return the resulting 1x1 node value."""
    tape = Tape()
    node = build(tape)
    return float(node.value[0, 0])


def tiny_cell(vocab=("conv", "pool", "skip_connect")) -> CellSpec:
    return CellSpec(num_nodes=3,
                    edges=((0, 1, "conv"), (1, 2, "pool"), (0, 2, "skip_connect")),
                    op_vocab=tuple(vocab))


def tiny_graph(pad_to=None):
    return encode_cell(tiny_cell(), pad_to=pad_to)
