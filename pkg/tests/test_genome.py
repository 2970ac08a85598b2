import json

import numpy as np
import pytest

from asne.cells import CellKind
from asne.colony import NodeId
from asne.exceptions import GenomeError
from asne.genome import RnnGenome
from factories import random_genome


def two_node(w=0.5, b=0.1):
    i, o = NodeId(0, 0), NodeId(1, 0)
    return RnnGenome({i: CellKind.SIMPLE, o: CellKind.SIMPLE}, {(i, o): w}, {}, {o: np.array([b])}, 1)


def test_round_trip_is_byte_stable():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_genome(rng)
        g.fitness = float(rng.uniform())
        again = RnnGenome.from_dict(json.loads(g.to_json()))
        assert again.to_json() == g.to_json()
        np.testing.assert_array_equal(again.flat_params(), g.flat_params())


def test_flat_params_inverse():
    g = random_genome(np.random.default_rng(3))
    theta = np.arange(g.n_weights, dtype=float)
    assert np.array_equal(g.with_params(theta).flat_params(), theta)
    with pytest.raises(GenomeError):
        g.with_params(theta[:-1])


def test_validation_errors():
    i, h, o = NodeId(0, 0), NodeId(1, 0), NodeId(2, 0)
    ok = dict(nodes={i: CellKind.SIMPLE, h: CellKind.GRU, o: CellKind.SIMPLE},
              forward={(i, h): 0.1, (h, o): 0.2}, recurrent={},
              params={h: np.zeros(9), o: np.zeros(1)}, output_layer=2)
    RnnGenome(**ok).validate()
    cases = [
        {"forward": {(i, h): 0.1}},                                   # no path to output
        {"forward": {(i, h): 0.1, (h, o): 0.2, (o, h): 1.0}},         # backwards forward edge
        {"recurrent": {(h, i, 1): 0.3}},                              # recurrent into input
        {"recurrent": {(h, h, 0): 0.3}},                              # skip 0
        {"params": {h: np.zeros(3), o: np.zeros(1)}},                 # wrong GRU size
        {"nodes": {i: CellKind.SIMPLE, h: CellKind.GRU, o: CellKind.LSTM}},
        {"forward": {(i, h): np.nan, (h, o): 0.2}},
    ]
    for change in cases:
        with pytest.raises(GenomeError):
            RnnGenome(**{**ok, **change}).validate()


def test_summary_and_histogram():
    g = two_node()
    assert g.summary()["weights"] == 2
    assert sum(g.cell_histogram().values()) == 0
    assert g.has_forward_path()
