import numpy as np
import pytest

from constrained_chain.defect import defect_experiment
from constrained_chain.errors import ProfileError
from constrained_chain.propagator import TimeGrid


@pytest.fixture(scope="module")
def pxp12_defect():
    return defect_experiment(n_sites=12, site=6, strength=2, grid=TimeGrid(18.0))


def test_defect_removes_the_revivals(pxp12_defect):
    assert pxp12_defect.clean_is_lls
    assert not pxp12_defect.defect_is_lls
    assert pxp12_defect.clean_dimension == 322
    assert pxp12_defect.defect_dimension <= 322


def test_result_tables(pxp12_defect):
    returns = pxp12_defect.returns
    assert list(returns.columns) == ["time", "L_clean", "L_defect"]
    assert returns["L_clean"].iloc[0] == 1.0 and returns["L_defect"].iloc[0] == 1.0

    overlaps = pxp12_defect.overlaps
    assert set(overlaps["model"]) == {"clean", "defect"}
    for _, group in overlaps.groupby("model"):
        assert group["overlap"].sum() == pytest.approx(1.0)

    lightcone = pxp12_defect.lightcone
    assert list(lightcone["site"]) == list(range(12))
    assert lightcone.loc[6, "distance"] == 0
    assert lightcone["distance"].max() == 6


def test_unit_strength_reproduces_the_clean_chain():
    result = defect_experiment(n_sites=8, site=2, strength=1, grid=TimeGrid(4.0))
    np.testing.assert_allclose(result.returns["L_clean"], result.returns["L_defect"])
    assert result.clean_dimension == result.defect_dimension


def test_defect_site_outside_the_chain():
    with pytest.raises(ProfileError):
        defect_experiment(n_sites=8, site=8, grid=TimeGrid(1.0))


@pytest.mark.slow
def test_contrast_is_lost_outward_from_the_defect(pxp12_defect):
    earliest = pxp12_defect.lightcone.groupby("distance")["time"].min().sort_index()
    times = earliest.to_numpy()
    assert np.all(times[1:] >= times[:-1])
