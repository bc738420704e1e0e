from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")
Vector = np.ndarray[tuple[int, ...], np.dtype[T]]
FloatVector = Vector[np.float64]
IntVector = Vector[np.int64]
BoolVector = Vector[np.bool]
FloatMatrix = np.ndarray[tuple[int, int], np.dtype[np.float64]]

ScalarFunction = Callable[[FloatVector], float]
GradientFunction = Callable[[FloatVector], FloatVector]
BallMaximizer = Callable[[FloatVector, float], float]

# lower and upper bound pair of a scalar quantity
Band = tuple[float, float]
