"""Module with domain-related constants."""

from enum import Enum


class SearchStatus(Enum):
    """Enum with possible outcomes of a search."""
    SOLVED = 'solved'
    EXHAUSTED = 'exhausted'
    LIMIT_REACHED = 'limit_reached'


class Algorithm(Enum):
    """Enum with supported search algorithms."""
    ASTAR = 'astar'
    GBFS = 'gbfs'
    GBFLS = 'gbfls'


class HeuristicId(Enum):
    """Enum with classical heuristic ids used in flags and checkpoint metadata."""
    BLIND = 'blind'
    ZERO = 'zero'
    HADD = 'hadd'
    HFF = 'hff'


class Shaping(Enum):
    """Enum with potential functions available for reward shaping."""
    NONE = 'none'
    BLIND = 'blind'
    HADD = 'hadd'
    HFF = 'hff'


class GeneratorDomain(Enum):
    """Enum with domains that have a bundled instance generator."""
    BLOCKS = 'blocks'
    GRIPPER = 'gripper'
    FERRY = 'ferry'


LEARNED_PREFIX = 'learned:'
