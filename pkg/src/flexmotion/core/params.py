"""Named parameter storage with freeze flags, and the gradient entry point."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, check_finite_loss, recording


class ParamStore:
    """Ordered map of name -> float64 array with a frozen flag per entry.

    Frozen entries are never mutated by optimizer steps and always receive
    zero gradients from `gradients`.
    """

    def __init__(self):
        self._data: dict[str, np.ndarray] = {}
        self._frozen: set[str] = set()

    def add(self, name: str, value, frozen: bool = False) -> None:
        if name in self._data:
            raise ValueError(f"duplicate parameter name: {name}")
        self._data[name] = np.asarray(value, dtype=np.float64)
        if frozen:
            self._frozen.add(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._data:
            raise KeyError(name)
        self._data[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._data

    def __len__(self) -> int:
        return len(self._data)

    def names(self) -> list[str]:
        return list(self._data.keys())

    def items(self):
        return self._data.items()

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def freeze(self, name: str) -> None:
        if name not in self._data:
            raise KeyError(name)
        self._frozen.add(name)

    def freeze_prefix(self, prefix: str) -> None:
        for name in self._data:
            if name.startswith(prefix):
                self._frozen.add(name)

    def unfreeze(self, name: str) -> None:
        self._frozen.discard(name)

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self._data.items():
            out.add(name, value.copy(), frozen=name in self._frozen)
        return out

    def update_from(self, other: "ParamStore", prefix: str = "") -> None:
        """Copy values for names present in both stores."""
        for name, value in other.items():
            if name.startswith(prefix) and name in self._data:
                self._data[name] = value.copy()


class TensorBag(dict):
    """name -> Tensor view handed to loss functions during differentiation."""


def bag_from(params: ParamStore) -> TensorBag:
    return TensorBag({name: Tensor(value) for name, value in params.items()})


def gradients(loss_fn, params: ParamStore) -> ParamStore:
    """d(loss)/d(param) for every entry of `params`; frozen entries get zeros.

    `loss_fn` receives a TensorBag (name -> Tensor) and must return a scalar
    Tensor built from the core op set. A non-finite loss raises NumericError
    naming the first non-finite intermediate.
    """
    bag = bag_from(params)
    with recording() as tape:
        loss = loss_fn(bag)
    check_finite_loss(tape, loss)
    names = params.names()
    raw = backward(tape, loss, [bag[n] for n in names])
    out = ParamStore()
    for name, g in zip(names, raw):
        if params.is_frozen(name):
            g = np.zeros_like(params[name])
        out.add(name, g, frozen=params.is_frozen(name))
    return out


def loss_value(loss_fn, params: ParamStore) -> float:
    """Evaluate loss_fn without recording gradients."""
    return float(loss_fn(bag_from(params)).data)
