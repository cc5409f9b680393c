"""Spot checks of the property-suite helpers (the full battery runs in the
acceptance tests via run_all)."""

from __future__ import annotations

import numpy as np

from dpfem.props import (
    CHECKS,
    check_conforming_dg_jumps,
    check_cr_facet_means,
    check_dg_coercivity,
    check_dg_symmetry,
    check_monotonicity,
    check_ritz,
)


def test_catalogue_names_unique():
    names = [fn.__name__ for fn in CHECKS]
    assert len(names) == len(set(names))
    assert len(CHECKS) == 10


def test_monotonicity_check_passes():
    res = check_monotonicity(seed=0)
    assert res.ok, res.detail


def test_ritz_check_passes():
    res = check_ritz()
    assert res.ok, res.detail


def test_dg_symmetry_and_coercivity():
    assert check_dg_symmetry().ok
    res = check_dg_coercivity(seed=1)
    assert res.ok, res.detail


def test_interpolant_jump_checks():
    assert check_cr_facet_means().ok
    assert check_conforming_dg_jumps(seed=2).ok


def test_results_carry_detail_strings():
    res = check_dg_symmetry()
    assert isinstance(res.detail, str) and res.detail
    assert isinstance(res.name, str)
