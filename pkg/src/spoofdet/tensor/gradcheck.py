"""Central-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .core import Tape, Tensor
from .ops import check_scalar, record_kinks


def _same_piece(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def grad_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    atol: float = 0.0,
    stats: Optional[dict] = None,
) -> float:
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` takes no arguments and must read the tensors in ``inputs``; it
    must return a scalar. Every coordinate of every input is perturbed by
    ``±eps`` in place and restored afterwards. With ``coords`` set, only
    that many coordinates per input are checked: the one with the largest
    analytic gradient first, then a random sample drawn from ``rng``.

    A coordinate whose ``±eps`` evaluations flip a relu mask or a pool
    winner straddles a kink where no derivative exists; it is skipped, and
    in sampled mode replaced by another draw. ``stats`` (if given) receives
    ``checked`` and ``skipped`` counts. An input with no usable coordinate
    yields ``inf``. Coordinates whose absolute disagreement is below
    ``atol`` count as exact; the default of 0 applies the relative formula
    everywhere.

    Returns:
        max over coordinates of ``|a - n| / max(1e-8, |a| + |n|)`` where ``a``
        is the tape gradient and ``n`` the numerical one.
    """
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    with Tape() as tape, record_kinks() as base:
        out = fn()
    check_scalar(out)
    tape.backward(out)
    stats = stats if stats is not None else {}
    stats.setdefault("checked", 0)
    stats.setdefault("skipped", 0)
    worst = 0.0
    for t in inputs:
        analytic = (np.zeros(t.shape) if t.grad is None else t.grad).reshape(-1).copy()
        flat = t.data.reshape(-1)
        order, want = np.arange(flat.size), flat.size
        if coords is not None and flat.size > coords:
            rng = rng if rng is not None else np.random.default_rng(0)
            top = int(np.abs(analytic).argmax())
            order = np.r_[top, rng.permutation(np.delete(np.arange(flat.size), top))][: 8 * coords]
            want = coords
        rel = []
        for i in order:
            if len(rel) == want:
                break
            orig = flat[i]
            flat[i] = orig + eps
            with record_kinks() as hi:
                up = fn().item()
            flat[i] = orig - eps
            with record_kinks() as lo:
                down = fn().item()
            flat[i] = orig
            if not (_same_piece(base, hi) and _same_piece(base, lo)):
                stats["skipped"] += 1
                continue
            numeric = (up - down) / (2 * eps)
            diff = abs(analytic[i] - numeric)
            rel.append(0.0 if diff < atol else diff / max(1e-8, abs(analytic[i]) + abs(numeric)))
        stats["checked"] += len(rel)
        worst = max(worst, max(rel) if rel else float("inf"))
    return worst
