"""Discrete-time LTI plants: representation, simulation, and basic checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DimensionError, NumericalError

RANDOM_ENTRY_BOUND = 1.0  # |A_ij|, |B_ij| bound for random plants
_MAX_RESAMPLE = 100


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinearSystem:
    """Plant ``x_{k+1} = A x_k + B u_k`` with A (n x n) and B (n x m).

    Immutable after construction; the stored arrays are read-only copies.
    """

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionError(f"A must be square and nonempty, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise DimensionError(
                f"B must be {A.shape[0]} x m with m >= 1, got shape {B.shape}")
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "B", _readonly(B))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """Paired input/state samples from one experiment.

    ``inputs`` has N rows u_0 .. u_{N-1}; ``states`` has either N rows
    x_0 .. x_{N-1} or N+1 rows when the terminal state was recorded.
    """

    inputs: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.inputs, dtype=float)
        X = np.asarray(self.states, dtype=float)
        if U.ndim != 2 or X.ndim != 2:
            raise DimensionError("inputs and states must be 2-d arrays (N, dim)")
        if X.shape[0] not in (U.shape[0], U.shape[0] + 1):
            raise DimensionError(
                f"states must hold N or N+1 samples for N={U.shape[0]} inputs, "
                f"got {X.shape[0]}")
        if U.shape[0] < 1 or U.shape[1] < 1 or X.shape[1] < 1:
            raise DimensionError("empty trajectory")
        object.__setattr__(self, "inputs", _readonly(U))
        object.__setattr__(self, "states", _readonly(X))

    @property
    def sample_count(self) -> int:
        """Number N of (x_k, u_k) pairs."""
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def has_terminal_state(self) -> bool:
        return self.states.shape[0] == self.inputs.shape[0] + 1


def simulate(sys: LinearSystem, x0: np.ndarray, inputs: np.ndarray) -> Trajectory:
    """Simulate the plant from ``x0`` under the given input sequence.

    Args:
        sys: The plant.
        x0: Initial state, length n.
        inputs: Input sequence of shape (N, m) (or (N,) when m == 1).

    Returns:
        Trajectory with N inputs and N+1 states (terminal state included).

    Raises:
        DimensionError: On shape mismatch.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if x0.size != sys.n:
        raise DimensionError(f"x0 has length {x0.size}, expected {sys.n}")
    if U.ndim != 2 or U.shape[1] != sys.m:
        raise DimensionError(f"inputs must be (N, {sys.m}), got shape {U.shape}")
    X = np.empty((U.shape[0] + 1, sys.n))
    X[0] = x0
    for k in range(U.shape[0]):
        X[k + 1] = sys.A @ X[k] + sys.B @ U[k]
    return Trajectory(inputs=U, states=X)


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.abs(eigs).max())


def numerical_rank(M: np.ndarray) -> int:
    """Rank under the threshold sigma_max * max(shape) * machine epsilon.

    Shared by every rank decision in the package.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    return int(np.linalg.matrix_rank(M))


def controllability_matrix(sys: LinearSystem) -> np.ndarray:
    """Matrix [B, AB, ..., A^{n-1} B] of shape (n, n*m)."""
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank(sys: LinearSystem) -> int:
    """Numerical rank of the controllability matrix."""
    return numerical_rank(controllability_matrix(sys))


def closed_loop(sys: LinearSystem, K: np.ndarray) -> np.ndarray:
    """Closed-loop matrix A - B K for the feedback law u = -K x."""
    K = np.asarray(K, dtype=float)
    if K.shape != (sys.m, sys.n):
        raise DimensionError(f"gain must be {sys.m} x {sys.n}, got shape {K.shape}")
    return sys.A - sys.B @ K


def random_controllable_system(
    n: int,
    m: int,
    seed,
    spectral_radius_bound: float | None = None,
) -> LinearSystem:
    """Draw a controllable plant with entries uniform in [-1, 1].

    Resamples (up to an internal cap) until the controllability matrix has
    full rank.  Deterministic for a fixed ``seed``.

    Args:
        n: State dimension (>= 1).
        m: Input dimension (>= 1).
        seed: Anything accepted by ``numpy.random.default_rng``.
        spectral_radius_bound: When given, A is rescaled so its spectral
            radius equals this value.  Rescaling A preserves controllability.
            The raw ensemble (None) is not necessarily stable; see the README
            for why benchmark ensembles bound the radius.

    Raises:
        DimensionError: If n < 1 or m < 1.
        NumericalError: If no controllable draw is found within the cap
            (practically unreachable: failure has measure zero).
    """
    if n < 1 or m < 1:
        raise DimensionError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RESAMPLE):
        A = rng.uniform(-RANDOM_ENTRY_BOUND, RANDOM_ENTRY_BOUND, (n, n))
        B = rng.uniform(-RANDOM_ENTRY_BOUND, RANDOM_ENTRY_BOUND, (n, m))
        sys = LinearSystem(A, B)
        if controllability_rank(sys) == n:
            if spectral_radius_bound is not None:
                rho = spectral_radius(A)
                if rho > 0:
                    sys = LinearSystem(A * (spectral_radius_bound / rho), B)
            return sys
    raise NumericalError(
        f"no controllable system found in {_MAX_RESAMPLE} draws (n={n}, m={m})")


def load_system(path: str) -> LinearSystem:
    """Read a plant from a plain-text file.

    Format: a header line ``n m``, then n rows of A (n numbers each), then
    n rows of B (m numbers each).  Blank lines and lines starting with ``#``
    are ignored.

    Raises:
        DataFormatError: With the offending line number on any parse problem.
    """
    rows = _numeric_lines(path)
    if not rows:
        raise DataFormatError("empty file", path=path)
    lineno, header = rows[0]
    if len(header) != 2 or any(v != int(v) or v < 1 for v in header):
        raise DataFormatError("header must be two positive integers 'n m'",
                              path=path, line=lineno)
    n, m = int(header[0]), int(header[1])
    body = rows[1:]
    if len(body) != 2 * n:
        raise DataFormatError(
            f"expected {2 * n} matrix rows after the header, found {len(body)}",
            path=path, line=rows[-1][0])
    A = _collect_rows(body[:n], n, "A", path)
    B = _collect_rows(body[n:], m, "B", path)
    return LinearSystem(A, B)


def save_system(sys: LinearSystem, path: str) -> None:
    """Write a plant in the format read by :func:`load_system`."""
    with open(path, "w") as fh:
        fh.write(f"{sys.n} {sys.m}\n")
        for row in sys.A:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
        for row in sys.B:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def _numeric_lines(path: str) -> list[tuple[int, list[float]]]:
    """Parse a whitespace-separated numeric file, keeping line numbers."""
    out = []
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    out.append((lineno, [float(tok) for tok in line.split()]))
                except ValueError as exc:
                    raise DataFormatError(f"not a number: {exc}",
                                          path=path, line=lineno) from exc
    except OSError as exc:
        raise DataFormatError(str(exc), path=path) from exc
    return out


def _collect_rows(rows: list[tuple[int, list[float]]], width: int,
                  name: str, path: str) -> np.ndarray:
    for lineno, row in rows:
        if len(row) != width:
            raise DataFormatError(
                f"row of {name} must have {width} entries, found {len(row)}",
                path=path, line=lineno)
    return np.array([row for _, row in rows])
