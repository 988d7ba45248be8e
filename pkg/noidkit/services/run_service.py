"""Run orchestration: validate, solve, mesh and verify a configured n-noid or Delaunay run."""

import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

import noidkit
from noidkit.config import Settings, get_settings
from noidkit.core.potential import choose_basepoint, rs_solve
from noidkit.core.transport import m_tilde_at_zero
from noidkit.core.weierstrass import (
    NoidParams,
    domain_epsilon,
    eval_g,
    flux_consistency,
    jorge_meeks,
    nondegeneracy_rank,
    periods,
)
from noidkit.errors import InvalidInputError, NoidKitError
from noidkit.repos.artifact_repo import ArtifactRepo
from noidkit.repos.mesh_repo import MeshRepo
from noidkit.schemas.report import Check, Report, ValidationReport, VerificationReport
from noidkit.schemas.run import Family, ParamsSchema, Provenance, RunArtifact, RunConfig, SolutionPointSchema
from noidkit.services import analysis_service as analysis
from noidkit.services.immersion_service import DelaunayFrameSource, ImmersionService, NoidFrameSource
from noidkit.services.meshing import ParameterMesh, SurfaceMesh, annulus_mesh, boundary_vertices, noid_mesh
from noidkit.services.monodromy_service import MonodromyService, SolutionPath

logger = logging.getLogger(__name__)

VALIDATION_NAME = "validation.json"
VERIFICATION_NAME = "verification.json"
FLUX_CONVENTION = "sign of alpha_i,0 read from the computed flux: + when the flux points along N0(p_i)"


def _run_check(report: Report, name: str, measure: Callable[[], Check]) -> Optional[Check]:
    """Add the check built by ``measure``; a module error becomes a failed item carrying its message."""
    try:
        return report.add(measure())
    except NoidKitError as exc:
        logger.warning("%s failed: %s", name, exc)
        return report.add(Check.failure(name, f"{type(exc).__name__}: {exc}"))


class RunService:
    """validate / solve / mesh / verify over an artifact repository."""

    def __init__(self, repo: ArtifactRepo, mesh_repo: MeshRepo, settings: Optional[Settings] = None):
        """Initialize service with repositories."""
        self.repo = repo
        self.mesh_repo = mesh_repo
        self.base_settings = settings or get_settings()

    def settings_for(self, config: RunConfig) -> Settings:
        return config.to_settings(self.base_settings)

    def build_params(self, config: RunConfig, settings: Settings) -> NoidParams:
        """Initial parameters x0 of an n-noid run."""
        if config.family == Family.jorge_meeks:
            return jorge_meeks(config.n, config.scale, config.truncation, config.rho, settings)
        return config.params.to_params(config.truncation, config.rho)

    def provenance(self, config: RunConfig, previous: Optional[Provenance] = None) -> Provenance:
        now = datetime.now(timezone.utc) if config.record_timestamps else None
        return Provenance(
            noidkit=noidkit.__version__,
            python=platform.python_version(),
            numpy=np.__version__,
            scipy=scipy.__version__,
            seed=config.grid.seed,
            created_at=(previous.created_at if previous and previous.created_at else now),
            updated_at=now,
        )

    # -- validate

    def validate(self, config: RunConfig) -> ValidationReport:
        """Period test, non-degeneracy rank and the Monodromy Problem at t = 0."""
        logger.info("validate: family %s", config.family.value)
        settings = self.settings_for(config)
        report = ValidationReport()
        if config.family == Family.delaunay:
            self._validate_delaunay(config, report)
        else:
            self._validate_nnoid(config, settings, report)
        self.repo.save_report(report, VALIDATION_NAME)
        logger.info("validate: %d checks, %d failed", len(report.checks), len(report.failures))
        return report

    def _validate_delaunay(self, config: RunConfig, report: ValidationReport) -> None:
        for t in config.t:
            def measure(t=t) -> Check:
                pair = rs_solve(t)
                return Check.measure(f"delaunay.rs[t={t:g}]", abs(pair.r * pair.s - t), 1e-15,
                                     detail=f"r={pair.r:.17g} s={pair.s:.17g}")

            _run_check(report, f"delaunay.rs[t={t:g}]", measure)

    def _validate_nnoid(self, config: RunConfig, settings: Settings, report: ValidationReport) -> None:
        try:
            x0 = self.build_params(config, settings)
        except NoidKitError as exc:
            report.add(Check.failure("construction", f"{type(exc).__name__}: {exc}"))
            return

        def invariants() -> Check:
            x0.validate(settings.singular_tol)
            return Check.measure("invariants", 0.0, 0.0)

        if not _run_check(report, "invariants", invariants).passed:
            return

        def period_test() -> Check:
            table = periods(x0, settings)
            scale = max(1.0, float(np.max(np.abs(table.Q_all))))
            return Check.measure("period.real_part", table.real_part_defect(), 1e-9 * scale,
                                 detail=f"necksizes {np.array2string(table.necksizes, precision=6)}")

        def period_sum() -> Check:
            return Check.measure("period.residue_sum", periods(x0, settings).period_sum(), 1e-9)

        def flux() -> Check:
            defect = float(np.max(flux_consistency(x0, periods(x0, settings))))
            return Check.measure("period.flux_normal", defect, 1e-8)

        def rank() -> Check:
            value, singular_values = nondegeneracy_rank(x0, settings)
            expected = 3 * x0.n - 3
            return Check.measure(
                "nondegeneracy.rank",
                float(expected - value),
                0.0,
                detail=f"rank {value} of {expected}; singular values {np.array2string(singular_values, precision=3)}",
            )

        def monodromy_at_zero() -> Check:
            worst = 0.0
            for i in range(x0.n - 1):
                worst = max(worst, m_tilde_at_zero(x0, i, settings=settings).su2_algebra_defect())
            return Check.measure("monodromy.at_zero", worst, 1e-9)

        def basepoint() -> Check:
            z0, heuristic = choose_basepoint(x0)
            if heuristic:
                report.notes["basepoint"] = f"heuristic basepoint {z0}"
            return Check.measure("basepoint", 0.0, 0.0, detail=f"z0 = {z0}")

        for name, measure in (
            ("period.real_part", period_test),
            ("period.residue_sum", period_sum),
            ("period.flux_normal", flux),
            ("nondegeneracy.rank", rank),
            ("monodromy.at_zero", monodromy_at_zero),
            ("basepoint", basepoint),
        ):
            _run_check(report, name, measure)

    # -- solve

    def solve(self, config: RunConfig, resume: Optional[RunArtifact] = None) -> RunArtifact:
        """Continuation over the t-ladder; a partial artifact is saved before a failure propagates."""
        settings = self.settings_for(config)
        provenance = self.provenance(config, resume.provenance if resume else None)
        if config.family == Family.delaunay:
            artifact = RunArtifact(config=config, provenance=provenance,
                                   z0=(1.0.hex(), 0.0.hex()))
            for t in config.t:
                if t == 0:
                    continue
                checks = analysis.delaunay_monodromy(t, config.truncation, config.rho, settings)
                for key, value in checks.items():
                    artifact.residuals[f"delaunay.{key}[t={t:g}]"] = value
            self.repo.save_artifact(artifact)
            return artifact

        if resume is not None:
            x0 = resume.initial_params()
            z0 = resume.basepoint
            path = resume.solution_path()
        else:
            x0 = self.build_params(config, settings)
            z0 = None
            path = None
        service = MonodromyService(x0, settings, z0)
        artifact = RunArtifact(
            config=config,
            x0=ParamsSchema.from_params(x0),
            z0=(service.z0.real.hex(), service.z0.imag.hex()),
            heuristic_basepoint=service.heuristic_basepoint if resume is None else resume.heuristic_basepoint,
            residuals=dict(resume.residuals) if resume else {},
            provenance=provenance,
        )
        if config.baseline:
            path = service.solve(0.0, path)
            self._record(artifact, path)
            self.repo.save_artifact(artifact)
            return artifact

        service.check_precondition()
        path = path or SolutionPath()
        for sign in (1.0, -1.0):
            ladder = sorted((t for t in config.t if np.sign(t) == sign), key=abs)
            if not ladder:
                continue
            done = path.last(sign)
            if done is not None and abs(done.t) >= abs(ladder[-1]) * (1 - 1e-14):
                logger.info("branch %+d already solved to t=%g", int(sign), done.t)
                continue
            logger.info("solve: branch %+d up to t=%g", int(sign), ladder[-1])
            try:
                path = service.solve(ladder[-1], path, stops=ladder)
            finally:
                self._record(artifact, path)
                self.repo.save_artifact(artifact)
        return artifact

    def _record(self, artifact: RunArtifact, path: SolutionPath) -> None:
        artifact.path = [SolutionPointSchema.from_point(point) for point in path.points]
        for t in artifact.config.t:
            point = path.at(t)
            if point is not None:
                artifact.residuals[f"solve.residual[t={t:g}]"] = point.residual

    # -- mesh

    def mesh(self, artifact: RunArtifact, t: float) -> tuple[Path, Path, SurfaceMesh]:
        """Immerse the parameter mesh at t; writes OBJ and TSV diagnostics."""
        domain, surface = self.surface(artifact, t)
        obj_path, tsv_path = self.mesh_repo.save_mesh(surface, f"mesh_t{t:+.3e}")
        return obj_path, tsv_path, surface

    def surface(self, artifact: RunArtifact, t: float) -> tuple[ParameterMesh, SurfaceMesh]:
        config = artifact.config
        settings = self.settings_for(config)
        grid = config.grid
        if config.family == Family.delaunay:
            source = DelaunayFrameSource(t, config.truncation, config.rho)
            domain = annulus_mesh(np.exp(-1.0), np.exp(1.0), grid.ratio, grid.sectors)
        else:
            x = self._params_at(artifact, t)
            source = NoidFrameSource(t, x, artifact.basepoint, settings)
            ends = artifact.initial_params().at_zero().ends
            domain = noid_mesh(ends, domain_epsilon(ends), grid.ratio, grid.rings, grid.sectors,
                               grid.spacing, grid.extent)
        logger.info("mesh: t=%g, %d parameter vertices", t, domain.size)
        return domain, ImmersionService(source, settings).mesh(domain)

    def _params_at(self, artifact: RunArtifact, t: float) -> NoidParams:
        if t == 0:
            return artifact.initial_params()
        point = artifact.point_at(t)
        if point is None:
            raise InvalidInputError(f"t={t:g} is not on the solved path of this artifact", t=t)
        return point.x.to_params(artifact.config.truncation, artifact.config.rho)

    # -- verify

    def verify(self, artifact: RunArtifact, geometry: bool = True) -> VerificationReport:
        """Monodromy residuals, blow-up slopes, end weights and axes, mean curvature."""
        config = artifact.config
        settings = self.settings_for(config)
        report = VerificationReport(t=list(config.t))
        logger.info("verify: family %s, t = %s", config.family.value, config.t)
        if config.family == Family.delaunay:
            self._verify_delaunay(artifact, settings, report, geometry)
        else:
            self._verify_nnoid(artifact, settings, report, geometry)
        self.repo.save_report(report, VERIFICATION_NAME)
        logger.info("verify: %d checks, %d failed", len(report.checks), len(report.failures))
        return report

    def _verify_delaunay(self, artifact: RunArtifact, settings: Settings, report: VerificationReport,
                         geometry: bool) -> None:
        config = artifact.config

        def axis() -> Check:
            measured = float(np.max(np.abs(analysis.delaunay_axis(np.eye(2)) - np.array([1.0, 0.0, 0.0]))))
            return Check.measure("delaunay.axis", measured, 1e-14)

        def catenoid() -> Check:
            limit = analysis.blowup_weierstrass(analysis.delaunay_limit_frame, analysis.delaunay_dbeta)
            data = analysis.catenoid_data()
            z = 0.5 * np.exp(2j * np.pi * np.arange(50) / 50) + 0.25
            worst = max(float(np.max(np.abs(limit.g(z) - data.g(z)))),
                        float(np.max(np.abs(limit.omega(z) - data.omega(z)))))
            return Check.measure("catenoid.weierstrass", worst, 1e-12)

        def catenoid_flux() -> Check:
            limit = analysis.blowup_weierstrass(analysis.delaunay_limit_frame, analysis.delaunay_dbeta)
            flux = analysis.limit_flux(limit, 0j, 0.5, settings)
            return Check.measure("catenoid.flux", float(np.max(np.abs(flux - [8 * np.pi, 0, 0]))), 1e-9)

        for name, measure in (("delaunay.axis", axis), ("catenoid.weierstrass", catenoid),
                              ("catenoid.flux", catenoid_flux)):
            _run_check(report, name, measure)

        for t in config.t:
            if t == 0:
                continue

            def monodromy(t=t) -> list[Check]:
                values = analysis.delaunay_monodromy(t, config.truncation, config.rho, settings)
                return [
                    Check.measure(f"delaunay.closed_form[t={t:g}]", values["closed_form"], 1e-9),
                    Check.measure(f"delaunay.value_at_one[t={t:g}]", values["value_at_one"], 1e-9),
                    Check.measure(f"delaunay.derivative_at_one[t={t:g}]", values["derivative_at_one"], 1e-8),
                ]

            try:
                for check in monodromy():
                    report.add(check)
            except NoidKitError as exc:
                report.add(Check.failure(f"delaunay.monodromy[t={t:g}]", f"{type(exc).__name__}: {exc}"))

            if geometry:
                _run_check(report, f"cmc.delaunay[t={t:g}]",
                           lambda t=t: self._curvature_check(artifact, t, 1e-3, "cmc.delaunay"))

    def _curvature_check(self, artifact: RunArtifact, t: float, tol: float, prefix: str) -> Check:
        domain, surface = self.surface(artifact, t)
        interior = surface.ok & ~boundary_vertices(domain.size, surface.faces)
        curvature = np.abs(surface.mean_curvature[interior])
        if curvature.size == 0:
            return Check.failure(f"{prefix}[t={t:g}]", "no interior vertices")
        fraction = float(np.mean(np.abs(curvature - 1.0) <= tol))
        return Check.measure(f"{prefix}[t={t:g}]", 1.0 - fraction, 0.05,
                             detail=f"{100 * fraction:.1f}% of interior vertices within {tol:g} of |H| = 1")

    def _verify_nnoid(self, artifact: RunArtifact, settings: Settings, report: VerificationReport,
                      geometry: bool) -> None:
        config = artifact.config
        x0 = artifact.initial_params()
        z0 = artifact.basepoint
        report.notes["flux_convention"] = FLUX_CONVENTION
        if artifact.heuristic_basepoint:
            report.notes["basepoint"] = f"heuristic basepoint {z0}"
        service = MonodromyService(x0, settings, z0)

        if config.baseline:
            def flat_immersion() -> Check:
                immersion = ImmersionService(NoidFrameSource(0.0, x0, z0, settings), settings)
                points = analysis.compact_samples(x0, 8, z0, config.grid.seed)
                worst = max(float(np.linalg.norm(immersion.frame_at(z).f)) for z in points)
                return Check.measure("immersion.t0_zero", worst, 1e-12)

            _run_check(report, "immersion.t0_zero", flat_immersion)
            _run_check(report, "monodromy.residual[t=0]",
                       lambda: Check.measure("monodromy.residual[t=0]", service.residual(0.0, x0).norm(),
                                             settings.solver_tol))
            return

        solved = [artifact.point_at(t) for t in config.t]
        missing = [t for t, p in zip(config.t, solved) if p is None]
        for t in missing:
            report.add(Check.failure(f"solve[t={t:g}]", "t is not on the solved path"))
        points = [p.to_point(config.truncation, config.rho) for p in solved if p is not None]

        for point in points:
            def residual(point=point) -> Check:
                value = service.residual(point.t, point.x).norm()
                stored = artifact.residuals.get(f"solve.residual[t={point.t:g}]", point.residual)
                return Check.measure(f"monodromy.residual[t={point.t:g}]", value, settings.solver_tol,
                                     detail=f"stored {stored:.3e}")

            def problem(point=point) -> Check:
                values = service.monodromy_report(point.t, point.x)
                worst = max(values.values())
                detail = ", ".join(f"{k} {v:.2e}" for k, v in values.items())
                return Check.measure(f"monodromy.problem[t={point.t:g}]", worst, 1e-8, detail=detail)

            _run_check(report, f"monodromy.residual[t={point.t:g}]", residual)
            _run_check(report, f"monodromy.problem[t={point.t:g}]", problem)

        positive = sorted((p for p in points if p.t > 0), key=lambda p: p.t)
        negative = sorted((p for p in points if p.t < 0), key=lambda p: -p.t)
        for branch in (positive, negative):
            if len(branch) < 2:
                continue
            sign = "+" if branch[0].t > 0 else "-"

            def blowup(branch=branch, sign=sign) -> list[Check]:
                samples = analysis.compact_samples(x0, config.grid.samples, z0, config.grid.seed)
                ladder = analysis.blowup_error(branch, x0, samples, z0, settings)
                return [
                    Check.measure(f"blowup.slope[{sign}]", abs(ladder.slope - 1.0), 0.3,
                                  detail=f"errors {np.array2string(ladder.errors, precision=3)}"),
                    Check.measure(f"blowup.differential_slope[{sign}]", abs(ladder.differential_slope - 1.0), 0.3),
                    Check.measure(f"blowup.monotone[{sign}]", 0.0 if ladder.monotone else 1.0, 0.0),
                ]

            try:
                for check in blowup():
                    report.add(check)
            except NoidKitError as exc:
                report.add(Check.failure(f"blowup[{sign}]", f"{type(exc).__name__}: {exc}"))

        self._verify_ends(artifact, x0, positive, negative, settings, report, geometry)

    def _verify_ends(self, artifact: RunArtifact, x0: NoidParams, positive: list, negative: list,
                     settings: Settings, report: VerificationReport, geometry: bool) -> None:
        config = artifact.config
        branch = positive or negative
        if not branch:
            return
        smallest = branch[0]
        central = x0.at_zero()
        end_geometry: dict[int, analysis.EndGeometry] = {}
        if geometry:
            try:
                domain, surface = self.surface(artifact, smallest.t)
                for i in range(x0.n):
                    end_geometry[i] = analysis.end_geometry(domain, surface, i)
                interior = surface.ok & ~boundary_vertices(domain.size, surface.faces)
                curvature = np.abs(surface.mean_curvature[interior])
                fraction = float(np.mean(np.abs(curvature - 1.0) <= 1e-2)) if curvature.size else 0.0
                report.add(Check.measure(f"cmc.nnoid[t={smallest.t:g}]", 1.0 - fraction, 0.05,
                                         detail=f"{100 * fraction:.1f}% of interior vertices within 1e-2"))
            except NoidKitError as exc:
                report.add(Check.failure("geometry", f"{type(exc).__name__}: {exc}"))

        weights = []
        for i in range(x0.n):
            name = f"end[{i + 1}]"
            try:
                ends = analysis.end_report(smallest.t, smallest.x, i, x0, end_geometry.get(i), settings)
            except NoidKitError as exc:
                report.add(Check.failure(name, f"{type(exc).__name__}: {exc}"))
                continue
            weights.append(ends.weight)
            report.add(Check.measure(f"{name}.alpha_variation", ends.alpha_variation, 1e-8))
            report.add(Check.measure(f"{name}.alpha_imaginary", abs(ends.alpha.imag), 1e-8))
            report.add(Check.measure(f"{name}.necksize", ends.necksize_error, 0.02,
                                     detail=f"w = {ends.weight:.6g} ({ends.kind}), tau = {ends.tau:.6g}"))
            report.add(Check.measure(f"{name}.eigenvalue_real", ends.eigenvalue_defect, 1e-8))
            if abs(complex(central.B(central.ends[i]))) > 1e-12:
                formula = analysis.delaunay_axis(analysis.end_frame_at_one(eval_g(central, central.ends[i])))
                # axes are lines; orientation is not compared
                defect = min(float(np.max(np.abs(formula - ends.axis_limit))),
                             float(np.max(np.abs(formula + ends.axis_limit))))
                report.add(Check.measure(f"{name}.axis_formula", defect, 1e-12))
            if ends.geometry is not None:
                report.add(Check.measure(f"{name}.axis_angle", ends.axis_angle, 2.0,
                                         detail=f"symmetry residual {ends.geometry.symmetry_residual:.3e}, "
                                                f"{ends.geometry.self_intersections} self-intersections"))
            _run_check(report, f"{name}.necksize_limit", lambda i=i: self._necksize_limit(branch, x0, i, settings))
            if positive and negative:
                _run_check(report, f"{name}.sign_flip", lambda i=i: self._sign_flip(positive[0], negative[0], x0, i,
                                                                                    settings))
            _run_check(report, f"{name}.gauge_chain", lambda i=i: self._gauge_chain(smallest, i, settings))

        if config.family == Family.jorge_meeks and len(weights) == x0.n:
            spread = (max(weights) - min(weights)) / max(abs(w) for w in weights)
            report.add(Check.measure("ends.weight_symmetry", spread, 0.01))

    def _necksize_limit(self, branch: list, x0: NoidParams, i: int, settings: Settings) -> Check:
        ratios = [analysis.end_alpha(p.t, p.x, i, settings).value.real for p in branch]
        limit = analysis.richardson([p.t for p in branch], ratios)
        table = periods(x0, settings)
        tau = float(table.necksizes[i])
        return Check.measure(f"end[{i + 1}].necksize_limit", abs(abs(limit) - tau) / tau, 0.005,
                             detail=f"extrapolated {limit:.8g}, tau {tau:.8g}")

    def _sign_flip(self, plus, minus, x0: NoidParams, i: int, settings: Settings) -> Check:
        w_plus = analysis.end_report(plus.t, plus.x, i, x0, settings=settings).weight
        w_minus = analysis.end_report(minus.t, minus.x, i, x0, settings=settings).weight
        return Check.measure(f"end[{i + 1}].sign_flip", 0.0 if w_plus * w_minus < 0 else 1.0, 0.0,
                             detail=f"w(+) = {w_plus:.4g}, w(-) = {w_minus:.4g}")

    def _gauge_chain(self, point, i: int, settings: Settings) -> Check:
        chain = analysis.end_gauge_chain(point.t, point.x, i, settings)
        worst = max(chain.residue_error, chain.limit_error, chain.gauge_at_zero_error, chain.unitary_error)
        return Check.measure(
            f"end[{i + 1}].gauge_chain",
            worst,
            1e-8,
            detail=f"residue {chain.residue_error:.2e}, t=0 {chain.limit_error:.2e}, G(0) "
                   f"{chain.gauge_at_zero_error:.2e}, QH^-1 {chain.unitary_error:.2e}",
        )

