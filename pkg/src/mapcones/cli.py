import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import click
from click.core import ParameterSource

from . import __version__
from .bodies import MatrixBody
from .cache import ResultCache
from .cones import CHAIN, BodySpec, ConeId, Slice, Status, load_fixture, slice_membership
from .config import ExperimentConfig, load_ini
from .errors import ConfigError, MapConesError, MixingError
from .geometry import (
    MAX_VOLUME_DIM,
    BoundCheck,
    Estimate,
    GeometryReport,
    Schedule,
    base_vrad_bounds,
    base_width_bound,
    cp_base_vrad,
    duality_experiment,
    mean_width_mc,
    no_duality_discrepancy,
    radii_verify,
    section_bounds,
    tni_experiment,
    tp_section_bounds,
    volume_mcmc,
    vrad_from_log_vol,
)
from .matcore import ChoiMat, depolarizing_choi, isotropic_choi, load_matrix, rho_max, swap_operator
from .randgen import RngStream
from .report import emit_tables, envelope, render_json, write_outputs

EXIT_CHECK_FAILED = 2
EXIT_CONFIG_ERROR = 3

FAMILIES = ("isotropic", "depolarizing", "identity", "transpose", "choi-map")

_COLOURS = {"OK": "green", "WARN": "yellow", "FAIL": "red", "INFO": None}
_EXPLICIT = {ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT}
_PARAM_KEYS = {"slice_": "slice"}
_LOCAL_PARAMS = {"as_json", "no_cache", "config_path"}


@dataclass
class Outcome:
    result: dict[str, Any]
    passed: bool = True
    summary: list[tuple[str, str]] = field(default_factory=list)
    rows: list[dict[str, str]] | None = None


def _progress(msg: str) -> None:
    click.echo(f"[progress] {msg}", err=True)


def _plain(value: Any) -> Any:  # noqa: ANN401
    return str(value) if isinstance(value, Path) else value


def build_config(ctx: click.Context) -> ExperimentConfig:
    """INI values, then flags the user actually typed."""
    overrides = {
        _PARAM_KEYS.get(name, name): _plain(value)
        for name, value in ctx.params.items()
        if name not in _LOCAL_PARAMS and value is not None and ctx.get_parameter_source(name) in _EXPLICIT
    }
    return ExperimentConfig.build(ctx.info_name or "", load_ini(ctx.params.get("config_path")), overrides)


def _emit(config: ExperimentConfig, document: dict[str, Any], text: str, *, as_json: bool) -> None:
    if config.out:
        written = write_outputs(Path(config.out), config.command, text, document.get("rows"))
        click.echo(f"[INFO] wrote {', '.join(str(p) for p in written)}", err=True)
    if as_json:
        click.echo(text, nl=False)
        return
    for tag, line in document.get("summary", []):
        click.secho(f"[{tag}] {line}", fg=_COLOURS.get(tag))


def execute(
    ctx: click.Context, compute: Callable[[ExperimentConfig], Outcome], *, cacheable: bool = True
) -> None:
    """Build the config, consult the cache, run ``compute`` and map failures to exit codes."""
    as_json = bool(ctx.params.get("as_json"))
    config: ExperimentConfig | None = None
    try:
        config = build_config(ctx)
        cache = ResultCache() if cacheable and not ctx.params.get("no_cache") else None
        text = cache.get(config) if cache is not None else None
        if text is not None:
            click.echo("[INFO] cache hit", err=True)
            document = json.loads(text)
        else:
            outcome = compute(config)
            payload = {
                "result": outcome.result,
                "summary": [list(s) for s in outcome.summary],
                "rows": outcome.rows,
            }
            document = envelope(config, payload, passed=outcome.passed)
            text = render_json(document)
            if cache is not None:
                cache.put(config, text)
    except MixingError as err:
        if config is None:
            raise
        payload = {"result": {"aborted": str(err), "partial": err.partial}, "summary": [["FAIL", str(err)]]}
        document = envelope(config, payload, passed=False)
        _emit(config, document, render_json(document), as_json=as_json)
        ctx.exit(EXIT_CHECK_FAILED)
    except (MapConesError, OSError, ValueError) as err:
        click.echo(f"[error] {err}", err=True)
        ctx.exit(EXIT_CONFIG_ERROR)
    _emit(config, document, text, as_json=as_json)
    if not document["passed"]:
        ctx.exit(EXIT_CHECK_FAILED)


def common_options[F: Callable[..., Any]](func: F) -> F:
    options = [
        click.option("--n", "n", type=int, help="Matrix size N of the maps (default 2)."),
        click.option("--cone", help="Cone: P, D, CP, CcP, T or SP (default CP)."),
        click.option("--slice", "slice_", help="Slice: base, tp, tni, sym, sym-polar (default base)."),
        click.option("--seed", type=int, help="Master seed (default 0)."),
        click.option("--chains", type=int, help="Independent Monte Carlo chains (default 8)."),
        click.option("--steps", type=int, help="Samples per annealing phase (default 2000)."),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Report directory."),
        click.option("--json", "as_json", is_flag=True, help="Print the JSON report to stdout."),
        click.option(
            "--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="INI file."
        ),
        click.option("--no-cache", is_flag=True, help="Ignore and do not update the result cache."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.version_option(version=__version__, prog_name="mapcones")
def main():
    """mapcones: cones of quantum maps, their slices and their volumes."""


# ----------------------------------------------------------------------------- membership


def load_input(config: ExperimentConfig) -> ChoiMat:
    n = config.n
    if config.input is not None:
        return ChoiMat.from_array(load_matrix(Path(config.input)), n)
    match config.family:
        case None:
            msg = "give --input FILE or --family NAME"
            raise ConfigError(msg)
        case "isotropic":
            if config.p is None:
                msg = "the isotropic family needs --p"
                raise ConfigError(msg)
            return isotropic_choi(n, config.p)
        case "depolarizing":
            return depolarizing_choi(n)
        case "identity":
            return rho_max(n)
        case "transpose":
            return ChoiMat.from_array(swap_operator(n), n)
        case "choi-map":
            fixture = load_fixture("choi-map")
            if fixture.n != n:
                msg = f"the choi-map fixture has N={fixture.n}, not N={n}"
                raise ConfigError(msg)
            return fixture
    msg = f"unknown family {config.family!r}; choose from {', '.join(FAMILIES)}"
    raise ConfigError(msg)


def run_membership(config: ExperimentConfig) -> Outcome:
    spec = config.body_spec
    verdict = slice_membership(load_input(config), spec)
    tag = {Status.IN: "OK", Status.OUT: "INFO", Status.UNKNOWN: "WARN"}[verdict.status]
    line = f"{spec.label}: {verdict.status.value} (margin {verdict.margin:.3e})"
    if verdict.certificate is not None:
        line += f", certificate {verdict.certificate.kind}"
    summary = [(tag, line)]
    if verdict.heuristic:
        summary.append(("WARN", "verdict is heuristic: no certificate of the opposite kind was found"))
    return Outcome({"body": spec.to_json(), "verdict": verdict.to_json()}, summary=summary)


@main.command()
@common_options
@click.option(
    "--input", "input", type=click.Path(dir_okay=False, path_type=Path), help="Matrix JSON file."
)
@click.option("--family", type=click.Choice(FAMILIES), help="Built-in Choi matrix instead of --input.")
@click.option("--p", "p", type=float, help="Mixing weight for the isotropic family.")
@click.pass_context
def membership(ctx: click.Context, **_: Any) -> None:
    """Decide whether a Choi matrix lies in a cone or slice."""
    execute(ctx, run_membership)


# ----------------------------------------------------------------------------- volume and width


def vrad_checks(spec: BodySpec, value: float | None, stderr: float = 0.0) -> list[BoundCheck]:
    checks: list[BoundCheck] = []
    if spec.slice is Slice.BASE:
        lo, hi, source = base_vrad_bounds(spec.cone, spec.n)
        checks.append(BoundCheck.evaluate(source, "vrad", lo, hi, value, stderr))
    elif spec.slice is Slice.TP:
        lo, hi = tp_section_bounds(spec.cone, spec.n)
        checks.append(BoundCheck.evaluate("section bound from the base", "vrad", lo, hi, value, stderr))
    return checks


def run_volume(config: ExperimentConfig) -> Outcome:
    spec = config.body_spec
    body = MatrixBody(spec)
    schedule = Schedule(chains=config.chains, samples_per_phase=config.steps)
    result = volume_mcmc(body, RngStream(config.seed), schedule, progress=_progress)
    est = result.vrad
    checks = vrad_checks(spec, est.value, est.stderr)
    exact = body.log_volume_exact()
    if exact is not None:
        target = vrad_from_log_vol(exact, body.dim)
        checks.append(
            BoundCheck.evaluate(
                "exact volume formula ±10%", "vrad", 0.9 * target, 1.1 * target, est.value, est.stderr
            )
        )
    report = GeometryReport(spec.label, vrad=est, bound_refs=checks)
    line = f"{spec.label}: vrad = {est.value:.6f} ± {est.stderr:.6f} over {result.phases} phases"
    summary = [("INFO", line)]
    summary += [_check_line(c) for c in checks]
    return Outcome(
        {"body": spec.to_json(), "volume": result.to_json(), "report": report.to_json()},
        passed=report.passed,
        summary=summary,
        rows=emit_tables({spec.label: report}),
    )


def _check_line(check: BoundCheck) -> tuple[str, str]:
    lo = "-inf" if check.lower is None else f"{check.lower:.6g}"
    hi = "inf" if check.upper is None else f"{check.upper:.6g}"
    if check.value is None:
        return "WARN", f"{check.quantity} pending ({check.source}: [{lo}, {hi}])"
    tag = "OK" if check.passed else "FAIL"
    return tag, f"{check.quantity} = {check.value:.6g} within [{lo}, {hi}] ({check.source})"


@main.command()
@common_options
@click.pass_context
def volume(ctx: click.Context, **_: Any) -> None:
    """Estimate the volume radius of a slice by multiphase hit-and-run."""
    execute(ctx, run_volume)


def run_width(config: ExperimentConfig) -> Outcome:
    spec = config.body_spec
    result = mean_width_mc(
        MatrixBody(spec), config.dirs, RngStream(config.seed), chains=config.chains, progress=_progress
    )
    bound, source = base_width_bound(spec.cone, spec.n)
    est = result.estimate
    checks = []
    if bound is not None:
        checks.append(BoundCheck.evaluate(source, "width", None, bound, est.value, est.stderr))
    report = GeometryReport(spec.label, width=result, bound_refs=checks)
    line = f"{spec.label}: w = {est.value:.6f} ± {est.stderr:.6f}"
    if result.is_interval:
        line += f" in [{result.lo.value:.6f}, {result.hi.value:.6f}]"
    summary = [("INFO", line)] + [_check_line(c) for c in checks]
    if result.heuristic:
        summary.append(("WARN", "some support values are see-saw lower bounds"))
    return Outcome(
        {"body": spec.to_json(), "width": result.to_json(), "report": report.to_json()},
        passed=report.passed,
        summary=summary,
        rows=emit_tables({spec.label: report}),
    )


@main.command()
@common_options
@click.option("--dirs", type=int, help="Number of random directions (default 10000).")
@click.pass_context
def width(ctx: click.Context, **_: Any) -> None:
    """Estimate the mean width of a base."""
    execute(ctx, run_width)


# ----------------------------------------------------------------------------- verification


def run_duality(config: ExperimentConfig) -> Outcome:
    rep = duality_experiment(config.n, config.pairs, RngStream(config.seed), progress=_progress)
    checks = [
        BoundCheck.evaluate("CP^b pairs", "max pair value", None, 1.0, rep.max_cp),
        BoundCheck.evaluate("(T^b, D^b) pairs", "max pair value", None, 1.0, rep.max_td),
        BoundCheck.evaluate("orthogonal pure pair", "pair value", 1.0, 1.0, rep.attained),
    ]
    return Outcome(
        rep.to_json(),
        passed=rep.passed,
        summary=[_check_line(c) for c in checks],
        rows=emit_tables({f"duality (N={config.n})": GeometryReport("duality", bound_refs=checks)}),
    )


@main.command()
@common_options
@click.option("--pairs", type=int, help="Random CP^b pairs (default 100000; T/D pairs are a tenth).")
@click.pass_context
def duality(ctx: click.Context, **_: Any) -> None:
    """Check that pair values over the base never exceed 1."""
    execute(ctx, run_duality)


def run_radii(config: ExperimentConfig) -> Outcome:
    spec = config.body_spec
    rep = radii_verify(spec, config.probes, RngStream(config.seed), progress=_progress)
    tag = "OK" if rep.passed else "FAIL"
    summary = [
        (tag, f"{rep.label}: r = {rep.inradius:.6f}, R = {rep.outradius:.6f}"),
        ("INFO", f"inner probes failing: {rep.inner_failures}/{rep.inner_probes}"),
        ("INFO", f"inner probes unknown: {rep.inner_unknown}"),
        ("INFO", f"largest outer distance: {rep.outer_max:.6f}"),
    ]
    summary += [("FAIL", o) for o in rep.offending]
    summary += [("WARN", note) for note in rep.notes]
    return Outcome(rep.to_json(), passed=rep.passed, summary=summary)


@main.command()
@common_options
@click.option("--probes", type=int, help="Probes per check (default 1000).")
@click.pass_context
def radii(ctx: click.Context, **_: Any) -> None:
    """Verify the inradius and outradius of a base or TP section."""
    execute(ctx, run_radii)


def table_entry(spec: BodySpec, config: ExperimentConfig) -> GeometryReport:
    """Volume radius, width and radii of one slice; unavailable quantities stay pending."""
    body = MatrixBody(spec)
    stream = RngStream(config.seed).child(list(ConeId).index(spec.cone))
    warnings: list[str] = []
    vrad: Any = None
    stderr = 0.0
    exact = body.log_volume_exact()
    if exact is not None:
        vrad = vrad_from_log_vol(exact, body.dim)
    elif body.dim <= MAX_VOLUME_DIM:
        schedule = Schedule(chains=config.chains, samples_per_phase=config.steps)
        try:
            vrad = volume_mcmc(body, stream.child(0), schedule, progress=_progress).vrad
            stderr = vrad.stderr
        except MixingError as err:
            warnings.append(str(err))
    else:
        warnings.append(f"volume pending: dimension {body.dim} exceeds {MAX_VOLUME_DIM}")
    value = vrad.value if isinstance(vrad, Estimate) else vrad
    checks = vrad_checks(spec, value, stderr)
    width_result = None
    if spec.slice is Slice.BASE:
        bound, source = base_width_bound(spec.cone, spec.n)
        width_result = mean_width_mc(
            body, config.dirs, stream.child(1), chains=config.chains, progress=_progress
        )
        if bound is not None:
            w = width_result.estimate
            checks.append(BoundCheck.evaluate(source, "width", None, bound, w.value, w.stderr))
    rad = radii_verify(spec, config.probes, stream.child(2), progress=_progress)
    warnings += rad.notes
    return GeometryReport(
        spec.label,
        vrad=vrad,
        width=width_result,
        inradius_check=rad.inner_failures == 0 and rad.inner_witness_member is not False,
        outradius_check=rad.outer_max <= rad.outradius + 1e-9,
        bound_refs=checks,
        warnings=warnings,
    )


def run_tables(config: ExperimentConfig) -> Outcome:
    section = Slice.BASE if config.suite == "bases" else Slice.TP
    reports: dict[str, GeometryReport] = {}
    for cone in reversed(CHAIN):
        spec = BodySpec(cone, config.n, section)
        _progress(f"table row {spec.label}")
        reports[spec.label] = table_entry(spec, config)
    summary: list[tuple[str, str]] = []
    for label, rep in reports.items():
        tag = "OK" if rep.passed else "FAIL"
        radii_ok = bool(rep.inradius_check and rep.outradius_check)
        summary.append((tag, f"{label}: radii {'pass' if radii_ok else 'fail'}"))
        summary += [_check_line(c) for c in rep.bound_refs]
        summary += [("WARN", w) for w in rep.warnings]
    passed = all(rep.passed for rep in reports.values())
    result = {label: rep.to_json() for label, rep in reports.items()}
    return Outcome(result, passed=passed, summary=summary, rows=emit_tables(reports))


@main.command()
@common_options
@click.option("--suite", type=click.Choice(["bases", "tp"]), help="Rows to compute (default bases).")
@click.option("--dirs", type=int, help="Directions per width estimate (default 10000).")
@click.option("--probes", type=int, help="Probes per radii check (default 1000).")
@click.pass_context
def tables(ctx: click.Context, **_: Any) -> None:
    """Volume radii, widths and radii checks for the five nested cones."""
    execute(ctx, run_tables)


def run_tni(config: ExperimentConfig) -> Outcome:
    schedule = Schedule(chains=config.chains, samples_per_phase=config.steps)
    rep = tni_experiment(
        config.n, schedule, RngStream(config.seed), g_samples=config.probes, progress=_progress
    )
    errors = f"{rep.fiber_max_error:.2e} / {rep.identity_max_error:.2e}"
    summary = [("OK" if rep.fiber_ok else "FAIL", f"fibre map errors: {errors}")]
    if rep.aborted is not None:
        summary.append(("FAIL", f"volume run aborted: {rep.aborted}"))
    elif rep.ratio is not None:
        tag = "OK" if rep.in_bracket else "FAIL"
        summary.append((tag, f"volume ratio {rep.ratio:.4e} within [{rep.lower:.4e}, {rep.upper:.4e}]"))
    passed = rep.fiber_ok and rep.aborted is None and rep.in_bracket is not False
    return Outcome(rep.to_json(), passed=passed, summary=summary)


@main.command()
@common_options
@click.option("--probes", type=int, help="Random channels for the fibre identities (default 1000).")
@click.pass_context
def tni(ctx: click.Context, **_: Any) -> None:
    """Volume ratio of trace-non-increasing maps against TP maps times the operator interval."""
    execute(ctx, run_tni)


def run_no_duality(config: ExperimentConfig) -> Outcome:
    rep = no_duality_discrepancy(config.n, config.probes, RngStream(config.seed))
    tag = "OK" if rep.passed else "FAIL"
    summary = [
        (tag, f"ratio {rep.ratio:.6g} (>= {config.n})"),
        ("INFO", f"sampled TP max {rep.sampled_max:.6g} <= {rep.denominator:.6g}"),
    ]
    return Outcome(rep.to_json(), passed=rep.passed, summary=summary)


@main.command("no-duality")
@common_options
@click.option("--probes", type=int, help="Random TP channels (default 1000).")
@click.pass_context
def no_duality(ctx: click.Context, **_: Any) -> None:
    """Show that the TP section is not self-dual the way the base is."""
    execute(ctx, run_no_duality)


@main.command("section-bounds")
@common_options
@click.option("--m", "m", type=int, help="Dimension of the body (default N^4 - 1).")
@click.option("--k", "k", type=int, help="Dimension of the section (default N^4 - N^2).")
@click.option("--vrad", "vrad", type=float, help="Volume radius of the body (default: exact CP base value).")
@click.option("--r", "r", type=float, help="Inradius (default (N^2-1)^(-1/2)).")
@click.option("--R", "big_r", type=float, help="Outradius (default (N^2-1)^(1/2)).")
@click.option("--value", type=float, help="Section volume radius to test against the bracket.")
@click.pass_context
def section_bounds_cmd(ctx: click.Context, **_: Any) -> None:
    """Bracket the volume radius of a central section from the body's radii."""
    p = ctx.params

    def run(config: ExperimentConfig) -> Outcome:
        n = config.n
        m = p["m"] if p["m"] is not None else n**4 - 1
        k = p["k"] if p["k"] is not None else n**4 - n * n
        vrad = p["vrad"] if p["vrad"] is not None else cp_base_vrad(n)
        r = p["r"] if p["r"] is not None else 1 / math.sqrt(n * n - 1)
        big_r = p["big_r"] if p["big_r"] is not None else math.sqrt(n * n - 1)
        lo, hi = section_bounds(vrad, r, big_r, m, k)
        check = BoundCheck.evaluate("section bound", "vrad", lo, hi, p["value"])
        result = {"m": m, "k": k, "vrad": vrad, "r": r, "R": big_r, "lower": lo, "upper": hi}
        result["check"] = check.to_json()
        summary = [("INFO", f"section vrad within [{lo:.6g}, {hi:.6g}]")]
        if check.value is not None:
            summary.append(_check_line(check))
        return Outcome(result, passed=check.passed is not False, summary=summary)

    execute(ctx, run, cacheable=False)


if __name__ == "__main__":
    main()
