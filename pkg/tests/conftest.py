import numpy as np
import pytest

from uedkit.rng import Rng


@pytest.fixture
def rng():
    return Rng(20260809)


def finite_difference_check(loss_fn, params, coords, h=1e-4, rtol=1e-4, atol=1e-7):
    """Central finite differences vs analytic gradients at selected coordinates.

    `loss_fn` rebuilds the scalar loss from the current parameter tensors;
    `coords` indexes the concatenated parameter vector.  Returns the max
    observed |fd - analytic| / max(|fd|, |analytic|, atol-scale) mismatch and
    asserts the tolerance.
    """
    loss = loss_fn()
    loss.backward()
    analytic = np.concatenate(
        [
            (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel()
            for p in params
        ]
    )
    base = np.concatenate([p.data.ravel() for p in params])

    def load(vec):
        offset = 0
        for p in params:
            n = p.data.size
            p.data = vec[offset : offset + n].reshape(p.data.shape).copy()
            p.grad = None
            offset += n

    worst = 0.0
    for i in coords:
        vec = base.copy()
        vec[i] += h
        load(vec)
        up = loss_fn().item()
        vec[i] -= 2 * h
        load(vec)
        down = loss_fn().item()
        fd = (up - down) / (2 * h)
        err = abs(fd - analytic[i])
        bound = rtol * max(abs(fd), abs(analytic[i])) + atol
        worst = max(worst, err - bound)
        assert err <= bound, f"coord {i}: fd {fd} vs analytic {analytic[i]}"
    load(base)
    return worst
