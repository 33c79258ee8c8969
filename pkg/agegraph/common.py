import math
import re

import numpy as np


class AgeGraphError(Exception):
    pass


class ConfigError(AgeGraphError):
    pass


class DataError(AgeGraphError):
    pass


class ShapeError(AgeGraphError, ValueError):
    pass


class StructuralError(AgeGraphError):
    pass


class UsageError(AgeGraphError):
    pass


class NumericalError(AgeGraphError):
    pass


class CheckpointError(AgeGraphError):
    pass


def make_rng(*seed_parts):
    """
    Seeded generator keyed on any number of non-negative integers, e.g.
    make_rng(seed, epoch, step). Equal keys give equal streams.
    """
    return np.random.default_rng([int(s) for s in seed_parts])


def glorot_uniform(shape, fan_in, fan_out, rng):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def floor_count(rate, n):
    # 0.29 * 100 == 28.999999999999996
    return int(math.floor(rate * n + 1e-9))


def check_finite(name, values):
    if not np.all(np.isfinite(values)):
        raise NumericalError(f'{name} produced non-finite values')


def snake_name(cls, suffix):
    # "MaxRelativeVariant" -> "max_relative"
    parts = re.findall('.[^A-Z]*', cls.__name__)
    if parts and parts[-1] == suffix:
        parts = parts[:-1]
    return '_'.join([s.lower() for s in parts])


def scatter_add(index, values, size):
    """
    out[i] = sum of values[j] over every j with index[j] == i. `index` may
    have any shape; values has shape index.shape + rest and the result
    size × rest, as np.add.at would.
    """
    index = np.asarray(index, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    rest = values.shape[index.ndim:]
    width = int(np.prod(rest, dtype=np.int64))
    if index.size == 0 or width == 0:
        return np.zeros((size, ) + rest)
    flat = (index.reshape(-1, 1) * width + np.arange(width)).reshape(-1)
    out = np.bincount(flat, weights=values.reshape(-1), minlength=size * width)
    return out.reshape((size, ) + rest)
