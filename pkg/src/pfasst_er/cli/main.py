import click

from .. import __version__
from .commands.config import config
from .commands.run import run


@click.group()
@click.version_option(__version__, prog_name="pfasst-er")
def cli():
    """pfasst-er - Parallel-in-time SDC, PFASST and PFASST-ER benchmarks"""
    pass


cli.add_command(run)
cli.add_command(config)


def main():
    cli()


if __name__ == '__main__':
    main()
