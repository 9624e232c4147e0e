from dusss.app.verification.checks import REGISTRY, run_checks, select

__all__ = ["REGISTRY", "run_checks", "select"]
