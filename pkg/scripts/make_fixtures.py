"""Write the small fixed datasets used by the test suite (tests/data/*.csv)."""

import pathlib

import numpy as np

from spatial_tsr.corr import CorrelationModel, corr_matrix, distance_matrix
from spatial_tsr.glscore import SpatialDataset
from spatial_tsr.io import write_dataset_csv

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data"


def field(n, seed, phi=1.5, sigma2=0.8, nu=5.0, extent=5.0, X=None, names=("intercept",)):
    rng = np.random.default_rng(seed)
    coords = np.round(rng.uniform(0, extent, size=(n, 2)), 3)
    X = np.ones((n, 1)) if X is None else X(coords)
    R = corr_matrix(CorrelationModel("matern", phi, 0.5), distance_matrix(coords))
    L = np.linalg.cholesky(sigma2 * R)
    y = X @ np.r_[10.0, np.zeros(X.shape[1] - 1)] + L @ rng.standard_normal(n) * np.sqrt(nu / rng.chisquare(nu))
    return SpatialDataset(coords, np.round(y, 6), X, names)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(field(6, 11), OUT / "n6.csv")
    write_dataset_csv(field(10, 12), OUT / "n10.csv")
    two = lambda c: np.column_stack([np.ones(len(c)), c[:, 0]])  # noqa: E731
    write_dataset_csv(field(10, 13, X=two, names=("intercept", "x1")), OUT / "n10_trend.csv")


if __name__ == "__main__":
    main()
