import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Sequence, TextIO, Tuple

import numpy as np
from pydantic import BaseModel

from config.settings import get_settings
from models.errors import PreconditionViolation
from models.schemas import CertificateFile, CertificateKind, ReplayResult
from services.run_service import TimedRun
from services.semigroup_service import get_semigroup_service
from services.skewprod_service import get_skewprod_service

logger = logging.getLogger(__name__)


def _decimal(value: Optional[float]) -> str:
    return "" if value is None else format(float(value), ".17g")


def dumps(model: BaseModel) -> str:
    return json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


class ReportService:
    """Report, cloud and certificate files, and certificate replay."""

    def __init__(self):
        self.settings = get_settings()
        self.semigroup = get_semigroup_service()
        self.skewprod = get_skewprod_service()

    def _prepare(self, path: str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def timing_path(self, path: str) -> Path:
        target = Path(path)
        stem = target.name[:-len(".json")] if target.name.endswith(".json") else target.name
        return target.with_name(f"{stem}.timing.json")

    def write_report(self, run: TimedRun, path: str) -> Path:
        """The report itself is deterministic; wall-clock data goes to a sidecar."""
        target = self._prepare(path)
        target.write_text(dumps(run.report))
        timing = {"elapsed_seconds": run.elapsed, "finished_at": datetime.now().isoformat()}
        self.timing_path(path).write_text(json.dumps(timing, sort_keys=True, indent=2) + "\n")
        logger.info("✓ report written to %s", target)
        return target

    def write_clouds(self, clouds: Dict[str, np.ndarray], path: str) -> Path:
        target = self._prepare(path)
        with target.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["cloud", "index", "x"])
            for name in sorted(clouds):
                for i, x in enumerate(np.atleast_1d(clouds[name])):
                    writer.writerow([name, i, _decimal(x)])
        logger.info("✓ %d clouds written to %s", len(clouds), target)
        return target

    def write_sweep(self, parameter: str, runs: Sequence[Tuple[float, TimedRun]], stream: TextIO) -> None:
        writer = csv.writer(stream)
        writer.writerow([parameter, "verdict", "metric"])
        for value, run in runs:
            writer.writerow([_decimal(value), run.report.outcome.verdict, _decimal(run.report.outcome.metric)])

    # ------------------------------------------------------------------
    # Certificates
    # ------------------------------------------------------------------

    def save_certificate(self, certificate: CertificateFile, path: str) -> Path:
        target = self._prepare(path)
        target.write_text(dumps(certificate))
        logger.info("✓ %s certificate written to %s", certificate.kind.value, target)
        return target

    def load_certificate(self, path: str) -> CertificateFile:
        with open(path, "r") as f:
            return CertificateFile.model_validate(json.load(f))

    def replay(self, certificate: CertificateFile) -> ReplayResult:
        F = certificate.system
        cert = certificate.certificate
        if certificate.kind == CertificateKind.DENSITY:
            result = self.semigroup.verify_density_certificate(F, cert)
        elif certificate.kind == CertificateKind.EXPANDING:
            result = self.semigroup.verify_expanding_cover(F, cert)
        elif certificate.kind == CertificateKind.BLENDING:
            result = self.semigroup.verify_blending_certificate(F, cert)
        elif certificate.kind == CertificateKind.LEAF:
            failures = self.skewprod.verify_leaf_report(F, cert)
            result = ReplayResult(kind=CertificateKind.LEAF, checked=len(cert.witnesses), failures=failures)
        else:
            raise PreconditionViolation(f"no replay for certificate kind {certificate.kind!r}")
        if result.passed:
            logger.info("✓ %s certificate replayed: %d checks", result.kind.value, result.checked)
        else:
            logger.warning("✗ %s certificate: failing indices %s", result.kind.value, result.failures)
        return result


_report_service: Optional[ReportService] = None


def get_report_service() -> ReportService:
    global _report_service
    if _report_service is None:
        _report_service = ReportService()
    return _report_service
