import logging

import click

from miniform import __version__
from miniform.config import RunConfig, load_setup
from miniform.kernel.engine.engine import Session
from miniform.utils import MiniformError, get_logger

logger = get_logger("cli")


def _parse_defines(values):
    defines = {}
    for item in values:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise click.BadParameter(f"expected name=value, got {item!r}", param_hint="-D")
        defines[name.strip()] = value
    return defines


def build_config(program, setup=None, log=False, defines=(), **overrides):
    """RunConfig from defaults, then the setup file, then the command line."""
    values = load_setup(setup) if setup else {}
    config = RunConfig(**values)
    merged = {**config.defines, **_parse_defines(defines)}
    return config.with_overrides(program=program, log=log or None, defines=merged, **overrides)


@click.command()
@click.argument("program", type=click.Path(dir_okay=False))
@click.option("--setup", type=click.Path(exists=True, dir_okay=False), help="Setup file with <key> <value> lines.")
@click.option("--log", is_flag=True, help="Mirror the program output into <program>.log.")
@click.option("-D", "defines", multiple=True, metavar="NAME=VALUE", help="Predefine a preprocessor variable.")
@click.option("-I", "--include", "include_path", multiple=True, type=click.Path(file_okay=False), help="Add a directory to the include path.")
@click.option("--sort-buffer", type=int, default=None, help="Terms held in memory before a sort patch is formed.")
@click.option("--threads", type=int, default=None, help="Chunks per module when every $-variable has a merge mode.")
@click.option("--verbose", is_flag=True, help="Debug logging on standard error.")
@click.version_option(__version__, prog_name="miniform")
def main(program, setup, log, defines, include_path, sort_buffer, threads, verbose):
    """Run a miniform PROGRAM file."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config = build_config(program, setup=setup, log=log, defines=defines, sort_buffer=sort_buffer, threads=threads)
        if include_path:
            config = config.with_overrides(include_path=[*include_path, *config.include_path])
    except MiniformError as e:
        click.echo(str(e), err=True)
        raise SystemExit(1)

    logger.debug("running %s", program)
    status = Session(config).run_file(program)
    raise SystemExit(status)
