"""scikit-learn transformers wrapping the multiplier operators.

Rows of ``X`` are grid functions flattened in C order. ``fit`` only builds
the grid and the Rockland operator from the constructor parameters; nothing
is learned from the data, so the wrappers are meant for pipelines that
preprocess sampled fields.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .group import load_descriptor
from .lattice import Grid, GridFunction
from .rockland import RocklandSpec, build_rockland

__all__ = ["FourierMultiplier", "SpectralMultiplier", "LittlewoodPaleyTransformer"]


class _GridTransformer(TransformerMixin, BaseEstimator):
    def _build(self):
        group = load_descriptor(self.group)
        self.grid_ = Grid(group, self.extents, self.points, self.mode)
        self.rockland_ = build_rockland(RocklandSpec(self.rockland_kind), self.grid_, cache_dir=self.cache_dir)
        self.n_features_in_ = self.grid_.size

    def _rows(self, X):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError("X must have shape (n_samples, %d)" % self.n_features_in_)
        for row in X:
            yield GridFunction(row.reshape(self.grid_.shape), self.grid_)

    def fit(self, X=None, y=None):
        self._build()
        if X is not None:
            list(self._rows(X[:1]))
        return self

    @staticmethod
    def _out(values, real_input):
        out = np.stack(values)
        if real_input and np.max(np.abs(out.imag)) <= 1e-12 * max(1.0, float(np.max(np.abs(out)))):
            return out.real
        return out


class SpectralMultiplier(_GridTransformer):
    """Apply ``func(R)`` to each row.

    Parameters
    ----------
    func : callable or {'heat', 'resolvent'}
        Function of the spectral variable. ``'heat'`` is ``exp(-t lam)``
        and ``'resolvent'`` is ``1 / (1 + t lam)``.
    t : float
        Parameter of the named functions.
    """

    def __init__(self, group="abelian-iso-2", extents=(8.0, 8.0), points=(32, 32), mode="periodic",
                 rockland_kind="diagonal", func="heat", t=1.0, cache_dir=False):
        self.group = group
        self.extents = extents
        self.points = points
        self.mode = mode
        self.rockland_kind = rockland_kind
        self.func = func
        self.t = t
        self.cache_dir = cache_dir

    def _callable(self):
        if callable(self.func):
            return self.func
        if self.func == "heat":
            return lambda lam, t=self.t: np.exp(-t * lam)
        if self.func == "resolvent":
            return lambda lam, t=self.t: 1.0 / (1.0 + t * lam)
        raise ValueError("unknown func %r" % (self.func,))

    def transform(self, X):
        check_is_fitted(self, "grid_")
        f = self._callable()
        vals = [self.rockland_.apply_function(f, phi).values.ravel() for phi in self._rows(X)]
        return self._out(vals, np.isrealobj(X))


class FourierMultiplier(_GridTransformer):
    """Apply a Riesz or imaginary-power multiplier to each row.

    Parameters
    ----------
    kind : {'riesz', 'imaginary-power'}
    alpha : tuple of int
        Multi-index for ``kind='riesz'``.
    tau : float
        Exponent for ``kind='imaginary-power'``.
    """

    def __init__(self, group="abelian-iso-2", extents=(8.0, 8.0), points=(32, 32), mode="periodic",
                 rockland_kind="diagonal", kind="riesz", alpha=(1, 0), tau=1.0, cache_dir=False):
        self.group = group
        self.extents = extents
        self.points = points
        self.mode = mode
        self.rockland_kind = rockland_kind
        self.kind = kind
        self.alpha = alpha
        self.tau = tau
        self.cache_dir = cache_dir

    def fit(self, X=None, y=None):
        from .czo import imaginary_power_symbol, riesz_symbol

        super().fit(X, y)
        if self.kind == "riesz":
            self.symbol_ = riesz_symbol(self.alpha, self.rockland_)
        elif self.kind == "imaginary-power":
            self.symbol_ = imaginary_power_symbol(self.rockland_, self.tau)
        else:
            raise ValueError("unknown kind %r" % (self.kind,))
        return self

    def transform(self, X):
        check_is_fitted(self, "symbol_")
        vals = [self.symbol_.apply(phi).values.ravel() for phi in self._rows(X)]
        return np.stack(vals)


class LittlewoodPaleyTransformer(_GridTransformer):
    """Band energies ``||psi_j(R) phi||_2`` for ``j`` in ``j_range``.

    Parameters
    ----------
    j_range : tuple of int
        Inclusive band range ``(j_min, j_max)``.
    c_o : float
        Dyadic step of the partition.
    """

    def __init__(self, group="abelian-iso-2", extents=(8.0, 8.0), points=(32, 32), mode="periodic",
                 rockland_kind="diagonal", j_range=(-4, 4), c_o=1.0, cache_dir=False):
        self.group = group
        self.extents = extents
        self.points = points
        self.mode = mode
        self.rockland_kind = rockland_kind
        self.j_range = j_range
        self.c_o = c_o
        self.cache_dir = cache_dir

    def fit(self, X=None, y=None):
        from .sobolev import DyadicPartition

        super().fit(X, y)
        self.partition_ = DyadicPartition(c_o=self.c_o)
        self.bands_ = list(range(int(self.j_range[0]), int(self.j_range[1]) + 1))
        return self

    def transform(self, X):
        check_is_fitted(self, "partition_")
        out = []
        for phi in self._rows(X):
            out.append([self.rockland_.apply_function(self.partition_.psi_function(j), phi, zero_value=0.0).norm(2)
                        for j in self.bands_])
        return np.asarray(out)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "bands_")
        return np.asarray(["band_%d" % j for j in self.bands_], dtype=object)
