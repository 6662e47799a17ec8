import numpy as np
import pytest

from socialctx import data, features, synth


@pytest.fixture(scope="session")
def default_dataset():
    return data.filter_participants(synth.generate(synth.default_paper_profiles()))


@pytest.fixture(scope="session")
def default_matrix(default_dataset):
    return features.build_examples(default_dataset)


def make_matrix(values, labels, users, countries=None, timestamps=None, missing=None, schema=None):
    """Small FeatureMatrix over a custom single-group schema."""
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    if schema is None:
        schema = features.FeatureSchema(("g",), (tuple(f"f{j}" for j in range(d)),))
    if missing is None:
        missing = np.isnan(values).all(axis=1, keepdims=True)
    return features.FeatureMatrix(
        schema,
        np.asarray(users),
        np.asarray(countries if countries is not None else ["UK"] * n),
        np.asarray(timestamps if timestamps is not None else np.arange(n)),
        np.asarray(labels),
        values,
        np.asarray(missing, dtype=bool),
    )


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
