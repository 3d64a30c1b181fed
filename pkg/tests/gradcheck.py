"""Central finite-difference gradient checking used across the numeric tests."""

import numpy as np

from segnn.autodiff import Tensor, recording


def check_gradients(build, arrays, h=1e-5, tol=1e-4):
    """Compare tape gradients against central differences.

    `build` takes a list of Tensors (same order as `arrays`) and returns a
    scalar loss Tensor. It is re-invoked for every probe, so any state it
    creates must be fresh per call.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with recording() as tape:
        loss = build(tensors)
    tape.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.values) for t in tensors]

    def f():
        return build([Tensor(a) for a in arrays]).item()

    for k, a in enumerate(arrays):
        numeric = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            fp = f()
            a[idx] = orig - h
            fm = f()
            a[idx] = orig
            numeric[idx] = (fp - fm) / (2.0 * h)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic[k]), np.abs(numeric)))
        rel = np.max(np.abs(analytic[k] - numeric) / denom)
        assert rel < tol, f"input {k}: max relative error {rel:.3e}"
