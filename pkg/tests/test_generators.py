import math

import numpy as np
import pytest

from rplab.errors import ConfigError, InvalidInput
from rplab.generators import (
    CantorProduct,
    Grid,
    KernelLine,
    Segment,
    SeededRandom,
    designed_alpha,
    export,
    generate,
    ingest,
    natural_delta0,
    spec_from_dict,
    spec_to_dict,
)
from rplab.measures import frostman_certify
from rplab.rep_core import PK, apply_many

MIDDLE_THIRDS = ((3, (0, 2)), (2, (0,)), (2, (0,)))


def test_grid_cardinality_and_scale():
    mu = generate(Grid(2, 2**-3))
    assert mu.size == 9**3
    assert np.max(np.linalg.norm(mu.points, axis=1)) <= 1 + 1e-12
    np.testing.assert_allclose(np.max(mu.points, axis=0), [0.5 / math.sqrt(3)] * 3)


def test_cantor_single_atom_at_depth_zero():
    assert generate(CantorProduct(2, MIDDLE_THIRDS, 0)).size == 1


def test_cantor_middle_thirds():
    spec = CantorProduct(2, MIDDLE_THIRDS, 8)
    mu = generate(spec)
    assert mu.size == 256
    assert spec.alpha == pytest.approx(math.log(2) / math.log(3))
    assert natural_delta0(spec) == 3.0**-8
    assert frostman_certify(mu, spec.alpha, natural_delta0(spec)).c0 <= 10


@pytest.mark.parametrize(
    "axes, field",
    [
        (((3, (0, 1, 2)), (2, (0,)), (2, (0,))), r"axes\[0\]"),
        (((3, (0, 2)), (2, ()), (2, (0,))), r"axes\[1\]"),
        (((3, (0, 2)), (2, (0,)), (2, (0, 0))), r"axes\[2\]"),
        (((3, (0, 5)), (2, (0,)), (2, (0,))), r"axes\[0\]"),
        (((3, (0, 2)), (2, (0,))), "axes"),
    ],
)
def test_invalid_digit_sets(axes, field):
    with pytest.raises(InvalidInput, match=field):
        generate(CantorProduct(2, axes, 3))


def test_segment_cardinality_and_certificate():
    mu = generate(Segment(2, (0.0, 0.0, 1.0), 2**-10))
    assert mu.size == 1025
    assert frostman_certify(mu, 1.0, 2**-10).c0 <= 8


def test_kernel_line_is_collapsed():
    spec = KernelLine(2, 2, 0.5, 2**-8)
    mu = generate(spec)
    images = apply_many(PK(2, 2, 0.5), mu.points - mu.points[0])
    assert np.max(np.abs(images)) <= 1e-10


def test_kernel_line_basepoint():
    mu = generate(KernelLine(2, 1, 0.2, 2**-4, basepoint=(0.1, 0.0, -0.1)))
    assert mu.size == 17


@pytest.mark.parametrize("spec", [Grid(2, 2**-3), CantorProduct(2, MIDDLE_THIRDS, 5), SeededRandom(2, 300, 1.5, 4)])
def test_determinism(spec):
    a, b = generate(spec), generate(spec)
    assert a.points.tobytes() == b.points.tobytes()


def test_seeded_random_certifies():
    spec = SeededRandom(2, 500, 1.5, 1)
    mu = generate(spec)
    assert mu.size <= 500
    cert = frostman_certify(mu, 1.5, natural_delta0(spec))
    assert cert.c0 <= 2.0**6


def test_seeded_random_gives_up():
    with pytest.raises(InvalidInput, match="no certified"):
        generate(SeededRandom(2, 300, 2.0, 0), certify_cap=1.0, attempts=2)


@pytest.mark.parametrize(
    "spec",
    [
        Grid(2, 0.125),
        CantorProduct(2, MIDDLE_THIRDS, 4),
        Segment(2, (1.0, 0.5, 0.0), 0.01),
        KernelLine(3, 2, 0.3, 0.1),
        SeededRandom(2, 100, 1.0, 9),
    ],
)
def test_spec_dict_round_trip(spec):
    assert spec_from_dict(spec_to_dict(spec)) == spec


def test_spec_from_dict_rejects_unknown():
    with pytest.raises(ConfigError, match="unknown"):
        spec_from_dict({"preset": "grid", "n": 2, "delta0": 0.5, "colour": 1})
    with pytest.raises(ConfigError):
        spec_from_dict({"preset": "sphere"})


def test_designed_alpha():
    assert designed_alpha(Grid(3, 0.5)) == 4
    assert designed_alpha(Segment(2, (1, 0, 0), 0.5)) == 1
    assert designed_alpha(SeededRandom(2, 10, 1.3)) == 1.3


def test_ingest_examples(tmp_path, caplog):
    one = tmp_path / "one.csv"
    one.write_text("x1,x2,x3\n0,0,0")
    mu = ingest(one, 2)
    assert mu.size == 1 and mu.points.tolist() == [[0, 0, 0]]
    four = tmp_path / "four.csv"
    four.write_text("x1,x2,x3,weight\n" + "".join(f"0.{i},0,0,0.25\n" for i in range(4)))
    mu = ingest(four, 2)
    assert mu.weights.tolist() == [0.25] * 4
    heavy = tmp_path / "heavy.csv"
    heavy.write_text("x1,x2,x3,weight\n0,0,0,1.0\n0.1,0,0,1.0\n")
    with caplog.at_level("WARNING"):
        mu = ingest(heavy, 2)
    assert mu.weights.tolist() == [0.5, 0.5]
    assert "renormal" in caplog.text.lower()
    far = tmp_path / "far.csv"
    far.write_text("x1,x2,x3\n2,0,0\n")
    with pytest.raises(InvalidInput):
        ingest(far, 2)


def test_export_ingest_round_trip(tmp_path):
    mu = generate(CantorProduct(2, ((5, (0, 2, 4)), (3, (1,)), (4, (0, 3))), 3))
    export(mu, tmp_path / "c.csv")
    back = ingest(tmp_path / "c.csv", 2)
    assert back.points.tobytes() == mu.points.tobytes()
    np.testing.assert_allclose(back.weights, mu.weights, atol=1e-12)
