"""Named parameters and the Adam update with 1/(1+decay*t) learning-rate decay."""
import numpy as np


class Parameter:
    __slots__ = ("name", "value", "adam_m", "adam_v", "step")

    def __init__(self, name, value):
        self.name = name
        self.value = value
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)
        self.step = 0


def adam_step(params, grads, lr0, decay=0.0, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One in-place Adam step over every parameter.

    The effective rate is lr0 / (1 + decay * t) with t the step count after
    this update; bias correction is the standard 1 - beta^t form.
    """
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: missing gradient for parameter {name!r}")
        g = grads[name]
        p.step += 1
        t = p.step
        lr = lr0 / (1.0 + decay * t)
        p.adam_m = beta1 * p.adam_m + (1 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1 - beta2) * (g * g)
        mhat = p.adam_m / (1 - beta1**t)
        vhat = p.adam_v / (1 - beta2**t)
        p.value -= (lr * mhat / (np.sqrt(vhat) + epsilon)).astype(p.value.dtype)
