import pytest

from dusss.app.losses import uncertainty
from dusss.app.tensor import functional as F
from dusss.app.verification import REGISTRY, run_checks, select
from dusss.services import verify_service


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_check_passes(name):
    passed, detail = REGISTRY[name]()
    assert passed, detail


class TestSelection:
    def test_filter_is_case_insensitive_substring(self):
        assert select("WASSERSTEIN") == [n for n in sorted(REGISTRY) if "wasserstein" in n]
        assert select() == sorted(REGISTRY)

    def test_unknown_filter(self):
        assert verify_service.run("no-such-check") == []

    def test_table(self):
        results = verify_service.run("metrics.")
        table = verify_service.table(results)
        assert table.splitlines()[0].startswith("check")
        assert "pass" in table


class TestMutations:
    def test_inverted_sss_factor_breaks_monotonicity(self, monkeypatch):
        monkeypatch.setattr(
            uncertainty, "sss_factor", lambda rel, cfg: F.exp(F.scale(uncertainty._t(rel), cfg.lam))
        )
        [result] = run_checks("monotonicity.uncertain_sim_in_d_u")
        assert not result.passed

    def test_crashing_check_fails(self, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(uncertainty, "sss_factor", boom)
        [result] = run_checks("monotonicity.uncertain_sim_in_d_u")
        assert not result.passed
        assert "RuntimeError" in result.detail
