import json

import numpy as np
import pytest

from dkglab.fields import GridSpec
from dkglab.inequality_lab import (
    FAMILIES,
    INEQ_IDS,
    ParameterRangeError,
    UnresolvedFamilyError,
    check,
    check_resolved,
    draw,
)

SMALL = {"resolution": 48, "L": 12.0}


@pytest.mark.parametrize("ineq_id", INEQ_IDS)
def test_every_inequality_has_a_finite_constant(ineq_id):
    rep = check(ineq_id, "mixed", SMALL, samples=4, seed=3, refine=False)
    assert rep.finite and len(rep.ratios) + rep.skipped == 4
    assert rep.max > 0


def test_refinement_keeps_constants_stable():
    rep = check("EXT_SOBOLEV", "gaussian", {"resolution": 64, "L": 16.0}, samples=10, seed=1)
    assert rep.stable and rep.passed
    assert rep.change <= 0.25


def test_hardy_constant_from_the_proof():
    for Lam in (0.0, 1.0):
        rep = check("EXT_HARDY", "hardy_profile", {"Lambda": Lam}, samples=10, seed=2)
        assert rep.extra["proof_constant"] == 4 / (Lam + 1) ** 2
        assert rep.max <= 1.1 * rep.extra["proof_constant"]
        assert rep.passed


def test_gamma0_radial_sharp_and_saturated():
    rep = check("GAMMA0_RADIAL", "mixed", SMALL, samples=20, seed=4, refine=False)
    assert rep.max <= 0.5 + 1e-10
    aligned = check("GAMMA0_RADIAL", "aligned", SMALL, samples=10, seed=4, refine=False)
    assert 0.45 <= aligned.max <= 0.5 + 1e-10


def test_dirac_good_on_outgoing_profiles():
    rep = check("DIRAC_GOOD", "radial_pulse", SMALL, samples=5, seed=5, refine=False)
    assert rep.finite and np.isfinite(rep.max)


def test_zero_function_is_skipped():
    rep = check("EXT_SOBOLEV", "gaussian", SMALL, samples=3, zero=True)
    assert rep.skipped == 3 and rep.ratios == [] and rep.passed


def test_parameter_ranges():
    with pytest.raises(ParameterRangeError):
        check("EXT_HARDY", "gaussian", {"Lambda": -1.0}, samples=1)
    with pytest.raises(ParameterRangeError):
        check("BOOST_LINF", "gaussian", {"lambda": 0.0}, samples=1)
    with pytest.raises(ParameterRangeError):
        check("EXT_SOBOLEV", "gaussian", {"t": 1.0}, samples=1)
    with pytest.raises(ValueError):
        check("NOT_A_LEMMA", "gaussian", samples=1)
    with pytest.raises(ValueError):
        check("EXT_SOBOLEV", "aligned", samples=1)
    with pytest.raises(ValueError):
        check("EXT_SOBOLEV", "fractal", samples=1)


def test_unresolved_family_rejected():
    """Samples are drawn resolved for a spacing; a coarser grid rejects them."""
    fine = GridSpec(2, 128, 16.0)
    coarse = GridSpec(2, 16, 16.0)
    for fam in ("gaussian", "bandlimited", "radial_pulse"):
        sample = draw(fam, np.random.default_rng(0), 2, 16.0, fine.dx)
        check_resolved(sample, fine)
        with pytest.raises(UnresolvedFamilyError):
            check_resolved(sample, coarse)


def test_reports_are_reproducible(tmp_path):
    a = check("GOOD_DERIV", "mixed", SMALL, samples=4, seed=9, refine=False)
    b = check("GOOD_DERIV", "mixed", SMALL, samples=4, seed=9, refine=False)
    assert a.ratios == b.ratios
    a.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["status"] == ("PASS" if a.passed else "FAIL") and d["ineq_id"] == "GOOD_DERIV"


def test_family_list():
    assert set(FAMILIES) >= {"gaussian", "bandlimited", "radial_pulse", "mixed"}
