"""
Command-line front end
======================
Five workflows: capacity, plan, simulate, compare, audit. Every command reads
an optional flat key=value config file (``--config``) and lets flags override
it. Human-readable lines go to stdout; ``--json-style`` prints the sealed
document instead and ``--out`` writes it to a file.

Exit codes: 0 success, 2 invalid spec, 3 infeasible plan, 4 decode or
plan-consistency failure, 5 audit failure.
"""

import functools
import logging
from fractions import Fraction
from typing import Any, Dict, Optional

import click

from audit import InsufficientSamplesError, run_audit
from config import Config, RunConfig, load_run_config
from decode import DecodeIntegrityError
from gf import FieldError, FieldSpec
from mds import MdsConstructionError
from params import (
    InfeasiblePlanError,
    PlanConsistencyError,
    ProblemSpec,
    SpecValidationError,
    capacity,
    compute_plan,
    converse_bound,
    feasibility_lift,
    pir_capacity,
    plan_summary,
    rate_report,
    sem_pir_capacity,
    tpir_capacity,
    zero_padding_rate,
)
from runtime import CollusionSizeError, run_session, sample_theta
from scheme import AllocationError, Mutation, ScramblerSamplingError, allocate_mds, build_ledger, render_layout
from serialization import canonical_json, seal, write_document

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_SPEC = 2
EXIT_INFEASIBLE = 3
EXIT_DECODE_FAILURE = 4
EXIT_AUDIT_FAILURE = 5

INVALID_SPEC_ERRORS = (
    ValueError,
    FieldError,
    MdsConstructionError,
    AllocationError,
    ScramblerSamplingError,
    InsufficientSamplesError,
    CollusionSizeError,
)


def handle_errors(command):
    """Map failure families onto the stable exit codes"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except InfeasiblePlanError as e:
            click.echo(f"infeasible plan: {e}", err=True)
            ctx.exit(EXIT_INFEASIBLE)
        except DecodeIntegrityError as e:
            logger.error(f"🚨 Decode failure: {e}")
            click.echo(f"decode failure: {e}", err=True)
            ctx.exit(EXIT_DECODE_FAILURE)
        except PlanConsistencyError as e:
            logger.error(f"🚨 Plan consistency failure: {e}")
            click.echo(f"plan consistency failure: {e}", err=True)
            ctx.exit(EXIT_DECODE_FAILURE)
        except INVALID_SPEC_ERRORS as e:
            click.echo(f"invalid spec: {e}", err=True)
            ctx.exit(EXIT_INVALID_SPEC)

    return wrapper


def spec_options(command):
    """Flags shared by every command"""
    options = [
        click.option('--servers', help='Number of servers N'),
        click.option('--collusion', help='Collusion parameter T (1 <= T < N)'),
        click.option('--lengths', help='Message lengths, comma separated'),
        click.option('--priors', help='Retrieval priors as exact rationals, e.g. 1/2,1/3,1/6'),
        click.option('--field', help='Prime field modulus'),
        click.option('--seed', help='Seed for every random draw'),
        click.option('--out', help='Write the report document to this path'),
        click.option('--json-style', 'json_style', is_flag=True, default=None,
                     help='Print the structured document instead of text'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _run_config(ctx, **flags) -> RunConfig:
    return load_run_config(ctx.obj.get('config_path') if ctx.obj else None, flags)


def build_spec(config: RunConfig, require_priors: bool = False) -> ProblemSpec:
    if config.servers is None or config.collusion is None or not config.lengths:
        raise SpecValidationError("servers, collusion and lengths are required")
    if require_priors and config.priors is None:
        raise SpecValidationError("priors are required for this command")
    if config.seed < 0:
        raise SpecValidationError(f"seed must be nonnegative, got {config.seed}")
    return ProblemSpec.create(
        servers=config.servers,
        collusion=config.collusion,
        lengths=config.lengths,
        priors=config.priors,
        field=FieldSpec(config.field_modulus),
    )


def _user_theta(spec: ProblemSpec, theta: Optional[int]) -> Optional[int]:
    """Caller's 1-based index -> canonical index"""
    if theta is None:
        return None
    return spec.canonical_index(theta - 1)


def _decimal(value: Fraction) -> str:
    return f"{float(value):.6f}"


def _emit(config: RunConfig, kind: str, body: Dict[str, Any], lines):
    if config.out:
        write_document(config.out, kind, body)
    if config.json_style:
        click.echo(canonical_json(seal(kind, body)))
    else:
        for line in lines:
            click.echo(line)


def _message_label(spec, canonical):
    return f"W{spec.user_index(canonical) + 1}"


@click.group()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='Flat key=value settings file')
@click.pass_context
def cli(ctx, config_path):
    """Semantic T-colluding private information retrieval toolkit"""
    ctx.ensure_object(dict)
    ctx.obj['config_path'] = config_path


@cli.command('capacity')
@spec_options
@click.pass_context
@handle_errors
def cmd_capacity(ctx, **flags):
    """Capacity, converse bound and the α·E[D] identity"""
    config = _run_config(ctx, **flags)
    spec = build_spec(config, require_priors=True)
    value = capacity(spec)
    bound = converse_bound(spec)
    lifted, lift = feasibility_lift(spec)
    plan = compute_plan(lifted)

    body = {
        'spec': spec.to_dict(),
        'capacity': str(value),
        'expected_length': str(spec.expected_length),
        'converse_bound': str(bound),
        'lift': str(lift),
        'alpha': str(plan.alpha),
        'D': str(plan.D),
        'sem_pir_capacity': str(sem_pir_capacity(spec)),
    }
    lines = [
        f"capacity = {value} ({_decimal(value)})",
        f"capacity = E[L]/{bound} with E[L] = {spec.expected_length}",
        f"converse bound = {bound}",
        f"alpha*E[D] = {plan.alpha}*{plan.D} = {plan.total_downloads} = {lift}*{bound}",
    ]
    if lift > 1:
        lines.append(f"lift = {lift} (lengths scaled to {list(lifted.lengths)})")
    _emit(config, 'capacity', body, lines)


@cli.command('plan')
@spec_options
@click.option('--lift', is_flag=True, default=None, help='Scale lengths by the minimal lift factor if needed')
@click.option('--layout', 'layout_theta', type=int, default=None, help='Also render the per-server table for this θ')
@click.pass_context
@handle_errors
def cmd_plan(ctx, layout_theta, **flags):
    """Sub-packetization, per-θ fresh counts and per-subset ledger counts"""
    config = _run_config(ctx, **flags)
    spec = build_spec(config)
    lift = 1
    if config.lift:
        spec, lift = feasibility_lift(spec)
    plan = compute_plan(spec)
    ledger = build_ledger(plan, 0)

    labels = {
        subset: '~'.join(_message_label(spec, i) for i in subset)
        for subset, count in ledger.counts.items() if count
    }
    body = plan_summary(plan)
    body['lift'] = str(lift)
    body['spec'] = spec.to_dict()
    body['ledger'] = {labels[subset]: str(count) for subset, count in ledger.counts.items() if count}

    lines = []
    if config.lift:
        lines.append(f"lift = {lift}")
    lines += [
        f"alpha = {plan.alpha}",
        f"D = {plan.D}",
        f"downloads per session = {plan.total_downloads}",
        f"rate = {plan.rate()} ({_decimal(plan.rate())})",
    ]
    for i in range(spec.K):
        lines.append(
            f"{_message_label(spec, i)}: L={spec.lengths[i]} U={plan.U[i]} nu={plan.nu[i]} U_theta={plan.U_of_theta[i]}"
        )
    lines.append("per-server s-sum counts:")
    lines += [f"  {labels[subset]} = {count}" for subset, count in ledger.counts.items() if count]

    if layout_theta is not None:
        theta = _user_theta(spec, layout_theta)
        layout_ledger = build_ledger(plan, theta)
        allocation = allocate_mds(plan, theta, layout_ledger)
        table = render_layout(layout_ledger, allocation, spec.order)
        body['layout'] = table.splitlines()
        lines.append(f"layout for theta = {layout_theta}:")
        lines += table.splitlines()
    _emit(config, 'plan', body, lines)


@cli.command('simulate')
@spec_options
@click.option('--theta', help='Desired message (1-based); sampled from the priors when omitted')
@click.option('--sessions', type=click.IntRange(min=1), default=1, show_default=True,
              help='Number of sessions; more than one reports the mean rate')
@click.option('--lift', is_flag=True, default=None, help='Scale lengths by the minimal lift factor if needed')
@click.pass_context
@handle_errors
def cmd_simulate(ctx, sessions, **flags):
    """Run full retrieval sessions and write the transcript"""
    config = _run_config(ctx, **flags)
    spec = build_spec(config)
    if config.lift:
        spec, _ = feasibility_lift(spec)
    plan = compute_plan(spec)
    fixed_theta = _user_theta(spec, config.theta)

    if sessions == 1:
        theta = fixed_theta if fixed_theta is not None else sample_theta(spec, config.seed)
        transcript = run_session(spec, theta, config.seed, plan=plan)
        body = transcript.to_dict()
        lines = [
            f"theta = {spec.user_index(theta) + 1}",
            f"downloads = {transcript.downloads}",
            f"rate = {transcript.rate} ({_decimal(transcript.rate)})",
            "recovery = exact",
        ]
        if config.out:
            lines.append(f"transcript = {config.out}")
        _emit(config, 'transcript', body, lines)
        return

    runs = []
    for index in range(sessions):
        theta = fixed_theta if fixed_theta is not None else sample_theta(spec, config.seed, index)
        transcript = run_session(spec, theta, config.seed + index, plan=plan)
        runs.append(transcript)
    mean_rate = sum((run.rate for run in runs), Fraction(0)) / len(runs)
    body = {
        'spec': spec.to_dict(),
        'seed': str(config.seed),
        'sessions': [
            {
                'theta': str(spec.user_index(run.theta) + 1),
                'downloads': str(run.downloads),
                'rate': str(run.rate),
                'checksum': run.checksum(),
            }
            for run in runs
        ],
        'mean_rate': str(mean_rate),
        'capacity': str(capacity(spec)),
    }
    lines = [
        f"sessions = {sessions}",
        f"mean rate = {mean_rate} ({_decimal(mean_rate)})",
        f"capacity = {capacity(spec)} ({_decimal(capacity(spec))})",
        "recovery = exact in every session",
    ]
    _emit(config, 'session_batch', body, lines)


@cli.command('compare')
@spec_options
@click.pass_context
@handle_errors
def cmd_compare(ctx, **flags):
    """Conditions and verdicts against classical PIR/TPIR and zero padding"""
    config = _run_config(ctx, **flags)
    spec = build_spec(config, require_priors=True)
    report = rate_report(spec)
    rates = {
        'sem_tpir': capacity(spec),
        'sem_pir': sem_pir_capacity(spec),
        'tpir': tpir_capacity(spec.N, spec.T, spec.K),
        'pir': pir_capacity(spec.N, spec.K),
        'zero_padding_tpir': zero_padding_rate(spec, spec.T),
        'zero_padding_pir': zero_padding_rate(spec, 1),
    }
    body = report.to_dict()
    body['spec'] = spec.to_dict()
    body['rates'] = {name: str(rate) for name, rate in rates.items()}

    lines = [f"{name} rate = {rate} ({_decimal(rate)})" for name, rate in rates.items()]
    for entry in report.comparisons:
        values = ', '.join(f"{value} ({_decimal(value)})" for value in entry.condition_values)
        lines.append(
            f"{entry.name}: {entry.statement} -> {values}; holds={entry.holds}; "
            f"sem-tpir is {entry.verdict} ({_decimal(entry.sem_rate)} vs {_decimal(entry.other_rate)})"
        )
    _emit(config, 'comparison', body, lines)


@cli.command('audit')
@spec_options
@click.option('--stats', is_flag=True, default=None, help='Also run the statistical privacy test')
@click.option('--samples', help='Sessions per θ for the statistical test')
@click.option('--significance', help='Family-wise significance level')
@click.option('--mutant', type=click.Choice([m.value for m in Mutation]), default=None,
              help='Inject a planner defect (test hook)')
@click.pass_context
@handle_errors
def cmd_audit(ctx, **flags):
    """Structure, counting and (optionally) statistical privacy checks"""
    config = _run_config(ctx, **flags)
    if config.servers is None and config.collusion is None and not config.lengths:
        # Default statistical instance
        config = RunConfig(
            servers=Config.STAT_SERVERS,
            collusion=Config.STAT_COLLUSION,
            lengths=list(Config.STAT_LENGTHS),
            seed=config.seed,
            field_modulus=Config.STAT_FIELD_MODULUS,
            out=config.out,
            stats=config.stats,
            samples=config.samples,
            significance=config.significance,
            json_style=config.json_style,
            mutant=config.mutant,
        )
    spec = build_spec(config)
    mutation = Mutation(config.mutant or Mutation.NONE.value)
    report = run_audit(
        spec,
        seed=config.seed,
        stats=config.stats,
        samples=config.samples,
        significance=config.significance,
        mutation=mutation,
    )

    lines = [
        f"structure check = {'pass' if report.structure.passed else 'FAIL'}",
        f"counting check = {'pass' if report.counting_passed else 'FAIL'} "
        f"({len(report.counting)} code views, {report.tight_instances} tight)",
    ]
    if report.stats is not None:
        lines.append(
            f"statistical test = {'pass' if report.stats.passed else 'FAIL'} "
            f"({len(report.stats.tests)} tests, min p = {report.stats.min_p_value:.3g}, "
            f"threshold = {report.stats.threshold:.3g})"
        )
    lines.append(f"audit = {'pass' if report.passed else 'FAIL'}")
    _emit(config, 'audit', report.to_dict(), lines)
    if not report.passed:
        ctx.exit(EXIT_AUDIT_FAILURE)
