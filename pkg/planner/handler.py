"""Module with the command-line entry point."""

import logging

from .commands import build_parser
from .container import LOG_LEVEL, Container


def main(argv=None, container=None):
    """Parses `argv`, dispatches to the matching handler and returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVEL,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )
    if container is None:
        container = Container()
    handlers = {
        'plan': container.plan_handler,
        'train': container.train_handler,
        'eval': container.evaluate_handler,
        'generate': container.generate_handler
    }
    return handlers[args.command].handle(args)
