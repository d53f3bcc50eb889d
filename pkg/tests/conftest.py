import numpy as np
import pytest

from massimpute import ColumnSchema, SampleKind, SurveySample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_sample_b(x: np.ndarray, y: np.ndarray) -> SurveySample:
    return SurveySample(
        columns={"x": np.asarray(x, float), "y": np.asarray(y, float)},
        covariate_names=("x",),
        kind=SampleKind.NON_PROBABILITY_B,
        response_name="y",
    )


def make_sample_a(x: np.ndarray, w: np.ndarray) -> SurveySample:
    return SurveySample(
        columns={"x": np.asarray(x, float), "w": np.asarray(w, float)},
        covariate_names=("x",),
        kind=SampleKind.PROBABILITY_A,
        weight_name="w",
    )


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path
