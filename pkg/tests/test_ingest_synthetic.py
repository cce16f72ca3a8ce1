import numpy as np
import pytest

from errors import DataError
from ingest_synthetic import SyntheticSpec, planted_graph, regime_path, synthesize_panel


def test_same_spec_gives_identical_panel():
    spec = SyntheticSpec(n_stocks=6, n_days=320, seed=11)
    a, b = synthesize_panel(spec), synthesize_panel(spec)
    for field in a.bars:
        np.testing.assert_array_equal(a.bars[field].to_numpy(), b.bars[field].to_numpy())


def test_different_seed_changes_panel():
    a = synthesize_panel(SyntheticSpec(n_stocks=6, n_days=320, seed=1))
    b = synthesize_panel(SyntheticSpec(n_stocks=6, n_days=320, seed=2))
    assert not np.allclose(a.close.to_numpy(), b.close.to_numpy())


def test_panel_shape_and_sanity():
    spec = SyntheticSpec(n_stocks=6, n_days=320, seed=5, n_sectors=3)
    panel = synthesize_panel(spec)
    assert panel.close.shape == (320, 6)
    assert (panel.close.to_numpy() > 0).all()
    assert (panel.bars["high"].to_numpy() >= panel.bars["low"].to_numpy()).all()
    assert len(set(panel.sector_map[panel.calendar[0].year].values())) == 3


def test_planted_graph_is_a_ring():
    graph = planted_graph(SyntheticSpec(n_stocks=6, n_neighbors=2))
    assert graph.edge_count == 6
    assert (0, 1) in graph.edges and (0, 5) in graph.edges


def test_regime_path_switches_scale():
    spec = SyntheticSpec(n_stocks=6, n_days=400, seed=5)
    panel = synthesize_panel(spec)
    scale = regime_path(spec, panel.calendar)["vol_scale"]
    assert scale.iloc[0] == 1.0
    assert scale.iloc[200] == pytest.approx(1.8)


def test_invalid_spec_lists_problems():
    with pytest.raises(DataError, match="n_stocks must be >= 4.*n_days must be >= 300"):
        synthesize_panel(SyntheticSpec(n_stocks=2, n_days=10, n_sectors=1, n_neighbors=1))
