from __future__ import annotations

import logging
from typing import List, Optional

from dusss.app.verification import run_checks, select
from dusss.models import CheckResult

logger = logging.getLogger(__name__)


class VerifyService:
    """Gradient, identity and property suites behind `verify`"""

    def run(self, pattern: Optional[str] = None) -> List[CheckResult]:
        names = select(pattern)
        if not names:
            logger.warning("no check matches %r", pattern)
            return []
        results = run_checks(pattern)
        failed = [r.name for r in results if not r.passed]
        logger.info("%d/%d checks passed in %.1fs", len(results) - len(failed), len(results), sum(r.seconds for r in results))
        if failed:
            logger.error("failed checks: %s", ", ".join(failed))
        return results

    def table(self, results: List[CheckResult]) -> str:
        width = max((len(r.name) for r in results), default=10)
        lines = [f"{'check':<{width}}  result  seconds  detail"]
        for r in results:
            lines.append(f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.seconds:7.3f}  {r.detail}")
        return "\n".join(lines)


# Singleton instance
verify_service = VerifyService()
