"""CSV ingestion, reproducible random streams, and synthetic dataset generators.

The generators reproduce the standard synthetic setups used throughout the
experiment suite: an isotropic Gaussian with a mean shift along the first
axis, a contaminated normal with a tight outlier component, well-separated
Gaussian class-conditionals with a tunable test-set class balance, and a
piecewise-constant-mean series for change detection.  Every generator is a
deterministic function of its parameters and the generator state passed in.

Random streams are derived with ``rng_stream``, which keys a counter-based
Philox generator by a base seed plus a path of labels, e.g.
``rng_stream(seed, "l2-curve", replicate, "data")``.  String labels hash
through SHA-256 to a 32-bit word and integers are used as-is, so identical
paths give identical streams on every platform and numpy release.
"""

from __future__ import annotations

import csv
import hashlib

import numpy as np

from .applications import LabeledSet
from .kernel import SampleSet


class CsvFormatError(ValueError):
    """A CSV file could not be parsed into a rectangular numeric table."""


def _path_word(component) -> int:
    if isinstance(component, (int, np.integer)):
        if component < 0:
            raise ValueError("stream path integers must be nonnegative")
        return int(component) & 0xFFFFFFFF
    digest = hashlib.sha256(str(component).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def rng_stream(seed: int, *path) -> np.random.Generator:
    """Philox generator on the substream identified by (seed, *path)."""
    key = np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(_path_word(p) for p in path)
    )
    return np.random.Generator(np.random.Philox(key))


def load_csv(path, has_header: bool = False) -> SampleSet:
    """Read one point per row from a numeric CSV file.

    Errors name the offending row (1-based, counting the header if present)
    and column so malformed files are easy to fix.
    """
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {width}"
                )
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError as exc:
                    raise CsvFormatError(
                        f"{path}: row {lineno}, column {col}: not a number: {cell.strip()!r}"
                    ) from exc
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return SampleSet(np.asarray(rows, dtype=float))


def save_csv(path, points, header: list[str] | None = None) -> None:
    """Write points one per row with full float precision (round-trips exactly)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for row in pts:
            writer.writerow([format(v, ".17g") for v in row])


def l2_norm_series(series) -> np.ndarray:
    """Collapse a multichannel series to the per-sample Euclidean norm.

    Useful when channel orientation is arbitrary, e.g. accelerometer axes.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return np.linalg.norm(arr, axis=1).reshape(-1, 1)


GAUSSIAN_SHIFT_SD = float((4.0 * np.pi) ** -0.5)


def gen_gaussian_shift(
    d: int, n: int, n_prime: int, mu: float, rng: np.random.Generator
) -> tuple[SampleSet, SampleSet]:
    """Isotropic Gaussians with per-coordinate variance 1/(4 pi); the first
    set's mean is shifted to (mu, 0, ..., 0)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    x = rng.normal(0.0, GAUSSIAN_SHIFT_SD, size=(n, d))
    x[:, 0] += mu
    x_prime = rng.normal(0.0, GAUSSIAN_SHIFT_SD, size=(n_prime, d))
    return SampleSet(x), SampleSet(x_prime)


def true_l2_gaussian_shift(mu: float) -> float:
    """Closed-form L2 distance for the mean-shift setup, 2 - 2 exp(-pi mu^2).

    With per-coordinate variance 1/(4 pi) the Gaussian convolution integrals
    collapse to exactly this expression in every dimension.
    """
    return 2.0 - 2.0 * float(np.exp(-np.pi * mu**2))


OUTLIER_SD = 0.25


def gen_outlier_mixture(
    n: int, n_prime: int, eta: float, mu: float, rng: np.random.Generator
) -> tuple[SampleSet, SampleSet]:
    """Contaminated 1-d normal versus a clean standard normal.

    Each point of the first set is an outlier with probability eta, drawn
    from N(mu, 0.25^2); the rest, and all of the second set, are N(0, 1).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("outlier rate must lie in [0, 1]")
    is_outlier = rng.random(n) < eta
    inliers = rng.normal(0.0, 1.0, size=n)
    outliers = rng.normal(mu, OUTLIER_SD, size=n)
    x = np.where(is_outlier, outliers, inliers)
    x_prime = rng.normal(0.0, 1.0, size=n_prime)
    return SampleSet(x.reshape(-1, 1)), SampleSet(x_prime.reshape(-1, 1))


def _normal_pdf_at(delta: float, var: float) -> float:
    return float(np.exp(-(delta**2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var))


def true_l2_outlier_mixture(eta: float, mu: float) -> float:
    """Closed-form L2 distance for the contaminated-normal setup.

    The density difference is eta times the gap between the outlier component
    and the clean normal, so the squared integral scales with eta^2 and stays
    bounded in mu.
    """
    v_out = OUTLIER_SD**2
    v_in = 1.0
    return (eta**2) * (
        _normal_pdf_at(0.0, 2.0 * v_out)
        + _normal_pdf_at(0.0, 2.0 * v_in)
        - 2.0 * _normal_pdf_at(mu, v_out + v_in)
    )


def gen_class_balance(
    d: int,
    n_labeled_per_class: int,
    n_test: int,
    pi_star: float,
    separation: float,
    rng: np.random.Generator,
) -> tuple[LabeledSet, SampleSet, np.ndarray]:
    """Gaussian class-conditionals N(+-separation/2 e1, I) with a shifted
    test-set class balance; returns the true test labels as +-1."""
    if not 0.0 <= pi_star <= 1.0:
        raise ValueError("pi_star must lie in [0, 1]")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    offset = np.zeros(d)
    offset[0] = separation / 2.0
    positives = rng.normal(0.0, 1.0, size=(n_labeled_per_class, d)) + offset
    negatives = rng.normal(0.0, 1.0, size=(n_labeled_per_class, d)) - offset
    labels = np.where(rng.random(n_test) < pi_star, 1, -1)
    test = rng.normal(0.0, 1.0, size=(n_test, d)) + labels[:, None] * offset
    return (
        LabeledSet(positives=SampleSet(positives), negatives=SampleSet(negatives)),
        SampleSet(test),
        labels,
    )


def gen_step_series(
    length: int,
    change_times,
    shift: float,
    noise_sd: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Piecewise-constant mean (alternating 0 and ``shift``) plus Gaussian noise."""
    change_times = [int(t) for t in np.asarray(change_times, dtype=int).reshape(-1)]
    if any(t2 <= t1 for t1, t2 in zip(change_times, change_times[1:])):
        raise ValueError("change times must be strictly increasing")
    if any(t < 1 or t >= length for t in change_times):
        raise ValueError(f"change times must lie in [1, {length - 1}]")
    mean = np.zeros(length)
    for segment, start in enumerate(change_times):
        end = change_times[segment + 1] if segment + 1 < len(change_times) else length
        if segment % 2 == 0:
            mean[start:end] = shift
    series = mean + rng.normal(0.0, noise_sd, size=length)
    return series.reshape(-1, 1)
