# emslb_pkg/cli/commands.py
import click
from colorama import just_fix_windows_console

from .. import create_app
from ..errors import ConfigValidationError
from .emit import emit, render_csv
from .experiments import run_experiment
from .scenario import apply_overrides, load_config, load_presets, validate_config, with_seed


@click.group()
@click.option("--env", "env", default=None,
              help="Runtime settings profile (development, testing, production). Defaults to EMSLB_ENV.")
@click.pass_context
def cli(ctx, env):
    """Vehicle EMS retro-reflector simulation and localization bounds."""
    just_fix_windows_console()
    ctx.obj = create_app(env)


@cli.command("run")
@click.argument("config")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed for every random draw.")
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path; the table is printed to stdout when omitted.")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted config override, e.g. panel.n=80. Repeatable.")
@click.pass_context
def run_command(ctx, config, seed, out, overrides):
    """Run the experiment described by CONFIG (a JSON file or a preset name)."""
    app = ctx.obj
    try:
        scenario_config = apply_overrides(load_config(config), overrides)
        if seed is not None:
            scenario_config = with_seed(scenario_config, seed)
        table = run_experiment(scenario_config, app)
        if out:
            emit(table, out)
        else:
            click.echo(render_csv(table), nl=False)
    except Exception as e:
        ctx.exit(app.handle_error(e))


@cli.command("validate")
@click.argument("config")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE")
@click.pass_context
def validate_command(ctx, config, overrides):
    """Check CONFIG and report every problem found."""
    app = ctx.obj
    try:
        scenario_config = apply_overrides(load_config(config), overrides)
    except ConfigValidationError as e:
        for problem in e.problems:
            click.secho(f"error: {problem}", fg="red", err=True)
        ctx.exit(e.exit_code)
        return

    problems = validate_config(scenario_config, tuple(app.experiments))
    if problems:
        for problem in problems:
            click.secho(f"error: {problem}", fg="red", err=True)
        ctx.exit(ConfigValidationError.exit_code)
        return
    click.secho(f"OK {scenario_config.experiment_type} '{scenario_config.scenario_id}' "
                f"sha256={scenario_config.digest()}", fg="green")


@cli.command("presets")
def presets_command():
    """List the bundled experiment presets."""
    for name, preset in sorted(load_presets().items()):
        click.echo(f"{name:<20} {preset['description']}")
