"""Central finite-difference check of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import backward


@dataclass
class GradCheckReport:
    max_rel_error: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)
    tol: float = 1e-3

    @property
    def passed(self):
        return all(err <= self.tol for err in self.max_rel_error.values())

    def lines(self):
        for name, err in self.max_rel_error.items():
            mark = "ok" if err <= self.tol else "FAIL"
            yield f"{name:<24} coords={self.checked[name]:>5}  max_rel_err={err:.3e}  {mark}"


def rel_error(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(loss_fn, slots, h=1e-3, tol=1e-3, max_coords=None, seed=0):
    """Compare ``backward`` gradients against central differences.

    ``loss_fn(values)`` receives a dict ``name -> float64 array`` and returns
    ``(loss, leaves)``: a scalar ``Var`` built from fresh leaves, and the dict
    ``name -> leaf Var`` for the arrays it used. The arrays are perturbed in
    place between calls.

    ``max_coords`` caps the number of coordinates checked in total; when it
    applies, coordinates are sampled per slot in proportion to size.
    """
    values = {s.name: np.array(s.value, dtype=np.float64) for s in slots if s.trainable}
    loss, leaves = loss_fn(values)
    backward(loss)
    analytic = {name: (leaves[name].grad if name in leaves and leaves[name].grad is not None
                       else np.zeros_like(v)) for name, v in values.items()}

    total = sum(v.size for v in values.values())
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for name, v in values.items():
        flat = v.reshape(-1)
        n = flat.size
        if max_coords is not None and total > max_coords:
            take = max(1, int(round(max_coords * n / total)))
            coords = np.sort(rng.choice(n, size=min(take, n), replace=False))
        else:
            coords = np.arange(n)
        errs = []
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = loss_fn(values)[0].item()
            flat[c] = orig - h
            down = loss_fn(values)[0].item()
            flat[c] = orig
            numeric = (up - down) / (2.0 * h)
            errs.append(rel_error(analytic[name].reshape(-1)[c], numeric))
        report.max_rel_error[name] = float(max(errs)) if errs else 0.0
        report.checked[name] = int(len(coords))
    return report


def grad_check(model, batch, h=1e-3, tol=1e-3, term="total", max_coords=None, seed=0):
    """Finite-difference check of a model's loss on one fixed batch.

    ``term`` selects one loss part (``"general"``, ``"bia"``, ``"mia"``,
    ``"inter"``, ``"s3"``, ``"reg"``) or ``"total"`` for the weighted sum.
    Works for any model exposing ``slots``, ``leaves`` and ``loss_parts``.
    """
    from ..objectives import total_loss

    def loss_fn(values):
        leaves = model.leaves(values)
        parts = model.loss_parts(batch, leaves)
        if term == "total":
            loss = total_loss(parts, model.weights).node
        else:
            if term not in parts:
                raise KeyError(f"loss term {term!r} is not active for this model/config")
            loss = parts[term]
        return loss, leaves

    return check_gradients(loss_fn, model.slots, h, tol, max_coords, seed)
