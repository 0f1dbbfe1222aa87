from __future__ import annotations

import pytest

from pcsinfer import errors


@pytest.mark.parametrize("name", [n for n in errors.__all__ if n != "PcsError"])
def test_every_error_is_a_value_error(name):
    cls = getattr(errors, name)
    assert issubclass(cls, errors.PcsError)
    assert issubclass(cls, ValueError)


@pytest.mark.parametrize(
    "cls, code",
    [
        (errors.SchemaError, 2),
        (errors.KTooLarge, 2),
        (errors.MalformedCsv, 3),
        (errors.DegenerateTruth, 3),
        (errors.EmptySurvivors, 4),
    ],
)
def test_exit_codes(cls, code):
    assert cls.exit_code == code


def test_numerical_error_caught_as_value_error():
    with pytest.raises(ValueError):
        raise errors.EmptySurvivors("no model survives")
