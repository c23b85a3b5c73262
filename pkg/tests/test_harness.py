"""Tests for the cross-check harness: catalog, runners, report mechanics.

The expensive full-suite checks are exercised once by the acceptance
tests; here only the cheap ones run for real, plus two synthetic checks
that pin down the failure and exception paths.
"""

import json

import pytest

from msearch import verification_harness as vh
from msearch.verification_harness import (
    CheckReport,
    HarnessConfig,
    check_ids,
    run_check,
    run_suite,
)


@pytest.fixture(scope="module")
def fast_reports():
    return run_suite("fast")


class TestCatalog:
    def test_full_catalog_has_fifteen_checks(self):
        ids = check_ids("full")
        assert len(ids) == 15
        assert len(set(ids)) == 15

    def test_fast_is_a_subset_in_catalog_order(self):
        full = check_ids("full")
        fast = check_ids("fast")
        assert set(fast) < set(full)
        assert [c for c in full if c in set(fast)] == fast

    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError):
            check_ids("slow")

    def test_unknown_check_rejected(self):
        with pytest.raises(ValueError, match="unknown check"):
            run_check("no-such-check")
        with pytest.raises(ValueError, match="unknown check"):
            run_suite(only="no-such-check")


class TestFastSuite:
    def test_all_fast_checks_pass(self, fast_reports):
        bad = [(r.check_id, r.detail) for r in fast_reports if not r.passed]
        assert bad == []
        assert all(r.status == "passed" for r in fast_reports)

    def test_reports_are_ordered_and_complete(self, fast_reports):
        assert [r.check_id for r in fast_reports] == check_ids("fast")
        for r in fast_reports:
            assert isinstance(r, CheckReport)
            assert r.theorem_ref
            assert r.runtime >= 0
            assert r.passed is (r.status == "passed")

    def test_reports_serialize_to_json(self, fast_reports):
        text = json.dumps([r.to_dict() for r in fast_reports])
        assert "check_id" in text
        d = fast_reports[0].to_dict(include_runtime=False)
        assert "runtime" not in d
        assert d["pass"] is True

    def test_rerun_is_byte_identical_without_runtime(self):
        a = run_check("closed-constants-m2").to_dict(include_runtime=False)
        b = run_check("closed-constants-m2").to_dict(include_runtime=False)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


class TestRunnerMechanics:
    def test_config_forms(self):
        r1 = run_check("closed-constants-m2", None)
        r2 = run_check("closed-constants-m2", {"rng_seed": 7})
        r3 = run_check("closed-constants-m2", HarnessConfig(rng_seed=7))
        assert r1.passed and r2.passed and r3.passed

    def test_budget_skips_expensive_check(self):
        r = run_check("tau-asymptotics", {"budget_seconds": 5})
        assert r.status == "skipped"
        assert r.passed is False
        assert "budget" in r.detail
        assert r.to_dict()["pass"] is False

    def test_generous_budget_does_not_skip(self):
        r = run_check("closed-constants-m2", {"budget_seconds": 3600})
        assert r.status == "passed"

    def test_failing_check_reports_values(self, monkeypatch):
        def bad(cfg):
            return False, {"x": 1}, 2.0, 1.0, 0.5, "off by one"

        monkeypatch.setitem(
            vh._CHECKS, "always-fails", vh._CheckDef("always-fails", "synthetic", False, 1, bad)
        )
        r = run_check("always-fails")
        assert r.status == "failed"
        assert not r.passed
        assert r.observed == 2.0 and r.expected == 1.0
        assert r.detail == "off by one"

    def test_raising_check_becomes_failure(self, monkeypatch):
        def boom(cfg):
            raise RuntimeError("table missing")

        monkeypatch.setitem(
            vh._CHECKS, "always-raises", vh._CheckDef("always-raises", "synthetic", False, 1, boom)
        )
        r = run_check("always-raises")
        assert r.status == "failed"
        assert "RuntimeError" in r.detail and "table missing" in r.detail

    def test_only_selection(self):
        reports = run_suite(only="closed-constants-m2")
        assert [r.check_id for r in reports] == ["closed-constants-m2"]
        reports = run_suite(only=["moment-oracle", "closed-constants-m2"])
        assert [r.check_id for r in reports] == ["moment-oracle", "closed-constants-m2"]

    def test_process_workers_match_serial(self):
        ids = ["closed-constants-m2", "degeneracy-dichotomy"]
        serial = run_suite(only=ids)
        parallel = run_suite(only=ids, workers=2)
        for a, b in zip(serial, parallel):
            assert a.check_id == b.check_id
            assert a.passed == b.passed
            assert json.dumps(a.to_dict(include_runtime=False), sort_keys=True) == json.dumps(
                b.to_dict(include_runtime=False), sort_keys=True
            )


class TestIndividualChecks:
    def test_sampler_gof_check(self):
        r = run_check("sampler-gof")
        assert r.passed
        assert r.observed["p_shapes"] > 1e-3
        assert r.observed["shapes_seen"] == 132

    def test_m_invariance_check(self):
        r = run_check("m-invariance")
        assert r.passed
        assert r.observed["discrepancy_2000"] < r.observed["discrepancy_500"]

    def test_shape_variance_trend_check(self):
        r = run_check("shape-variance-trend-m2")
        assert r.passed
        d = r.observed["distance"]
        assert d == sorted(d, reverse=True)
