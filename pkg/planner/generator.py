"""Module with deterministic problem generators for the bundled domains."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

from .domain import GeneratorDomain, HeuristicId, SearchStatus
from .exception import InvalidGeneratorSize
from .heuristic import make_heuristic
from .pddl import parse
from .search import SearchConfig, gbfs
from .strips import ground, is_goal


logger = logging.getLogger(__name__)

DOMAIN_DIR = Path(__file__).parent / 'domains'

BOUNDS = {
    GeneratorDomain.BLOCKS.value: {'blocks': (2, 10)},
    GeneratorDomain.GRIPPER.value: {'balls': (1, 20)},
    GeneratorDomain.FERRY.value: {'locations': (2, 10), 'cars': (1, 10)},
}


def domain_text(domain):
    """Returns the bundled PDDL domain definition."""
    _check_domain(domain)
    return (DOMAIN_DIR / '{}.pddl'.format(domain)).read_text(encoding='utf-8')


def _check_domain(domain):
    if domain not in BOUNDS:
        raise InvalidGeneratorSize(
            message='No generator for domain {}.'.format(domain),
            payload={'domain': domain, 'choices': sorted(BOUNDS)}
        )


def check_sizes(domain, sizes):
    """Raises InvalidGeneratorSize unless every size parameter is given and in bounds."""
    _check_domain(domain)
    bounds = BOUNDS[domain]
    errors = {}
    for name, (low, high) in bounds.items():
        value = sizes.get(name)
        if not isinstance(value, int) or not low <= value <= high:
            errors[name] = 'Must be an integer in [{}, {}].'.format(low, high)
    for name in set(sizes) - set(bounds):
        errors[name] = 'Unknown size parameter.'
    if errors:
        raise InvalidGeneratorSize(
            message='Invalid size parameters for {}.'.format(domain),
            payload={'domain': domain, 'errors': errors}
        )


def _towers(rng, names):
    """Random stacking of `names`: list of towers listed bottom-up."""
    order = [names[i] for i in rng.permutation(len(names))]
    towers, current = [], []
    for name in order:
        if current and rng.random() < 0.5:
            towers.append(current)
            current = []
        current.append(name)
    towers.append(current)
    return towers


def _tower_atoms(towers):
    atoms = []
    for tower in towers:
        atoms.append('(ontable {})'.format(tower[0]))
        atoms.extend('(on {} {})'.format(top, below) for below, top in zip(tower, tower[1:]))
        atoms.append('(clear {})'.format(tower[-1]))
    return atoms


def _problem(name, domain, objects, init, goal):
    return '\n'.join([
        '(define (problem {})'.format(name),
        '  (:domain {})'.format(domain),
        '  (:objects {})'.format(' '.join(objects)),
        '  (:init',
        *('    {}'.format(atom) for atom in init),
        '  )',
        '  (:goal (and',
        *('    {}'.format(atom) for atom in goal),
        '  ))',
        ')',
        ''
    ])


def generate_blocks(blocks, seed):
    check_sizes(GeneratorDomain.BLOCKS.value, {'blocks': blocks})
    rng = np.random.default_rng(seed)
    names = ['b{}'.format(i) for i in range(1, blocks + 1)]
    initial = _tower_atoms(_towers(rng, names))
    goal = initial
    while sorted(goal) == sorted(initial):
        goal = _tower_atoms(_towers(rng, names))
    goal = [atom for atom in goal if not atom.startswith('(clear')]
    return _problem('blocks-{}-{}'.format(blocks, seed), 'blocks', names, initial + ['(handempty)'], goal)


def generate_gripper(balls, seed):
    """All balls start in one room and must be moved to the other; the seed picks the rooms and the robot's start."""
    check_sizes(GeneratorDomain.GRIPPER.value, {'balls': balls})
    rng = np.random.default_rng(seed)
    rooms = ['rooma', 'roomb']
    names = ['ball{}'.format(i) for i in range(1, balls + 1)]
    start = int(rng.integers(2))
    robot = rooms[int(rng.integers(2))]
    init = ['(room {})'.format(room) for room in rooms]
    init += ['(gripper left)', '(gripper right)', '(free left)', '(free right)', '(at-robby {})'.format(robot)]
    init += ['(ball {})'.format(ball) for ball in names]
    init += ['(at {} {})'.format(ball, rooms[start]) for ball in names]
    goal = ['(at {} {})'.format(ball, rooms[1 - start]) for ball in names]
    objects = rooms + ['left', 'right'] + names
    return _problem('gripper-{}-{}'.format(balls, seed), 'gripper', objects, init, goal)


def generate_ferry(locations, cars, seed):
    check_sizes(GeneratorDomain.FERRY.value, {'locations': locations, 'cars': cars})
    rng = np.random.default_rng(seed)
    places = ['l{}'.format(i) for i in range(1, locations + 1)]
    names = ['c{}'.format(i) for i in range(1, cars + 1)]
    starts = [places[int(i)] for i in rng.integers(locations, size=cars)]
    targets = [places[int(i)] for i in rng.integers(locations, size=cars)]
    if starts == targets:
        moved = int(rng.integers(cars))
        others = [place for place in places if place != starts[moved]]
        targets[moved] = others[int(rng.integers(len(others)))]
    ferry = places[int(rng.integers(locations))]
    init = ['(location {})'.format(place) for place in places]
    init += ['(not-eq {} {})'.format(a, b) for a in places for b in places if a != b]
    init += ['(car {})'.format(car) for car in names]
    init += ['(at {} {})'.format(car, place) for car, place in zip(names, starts)]
    init += ['(at-ferry {})'.format(ferry), '(empty-ferry)']
    goal = ['(at {} {})'.format(car, place) for car, place in zip(names, targets)]
    return _problem('ferry-{}x{}-{}'.format(locations, cars, seed), 'ferry', places + names, init, goal)


GENERATORS = {
    GeneratorDomain.BLOCKS.value: generate_blocks,
    GeneratorDomain.GRIPPER.value: generate_gripper,
    GeneratorDomain.FERRY.value: generate_ferry,
}


def generate(domain, seed, **sizes):
    """Returns the PDDL problem text for `domain` with the given size parameters.

    Raises:
        InvalidGeneratorSize: If the domain is unknown or a size is out of bounds.

    """
    check_sizes(domain, sizes)
    return GENERATORS[domain](seed=seed, **sizes)


def content_hash(text):
    return hashlib.md5(text.encode('utf-8')).hexdigest()


def is_usable(domain, problem_text, eval_limit=100000):
    """Whether an instance is non-trivial and solved by GBFS with h_FF within the limit."""
    task = ground(parse(domain_text(domain), problem_text))
    if is_goal(task.initial, task):
        return False
    result = gbfs(task, make_heuristic(HeuristicId.HFF.value, task), SearchConfig(eval_limit=eval_limit))
    return result.status == SearchStatus.SOLVED.value


def generate_corpus(domain, sizes, seeds, eval_limit=100000):
    """Generates unique usable instances for every (sizes, seed) combination.

    Args:
        domain (str): Generator domain.
        sizes (list): Size-parameter dicts.
        seeds (iterable): Seeds tried per size.
        eval_limit (int): Evaluation budget of the solvability check.

    Returns:
        list: (problem name, problem text) pairs, duplicates removed by content hash.

    """
    seen = set()
    corpus = []
    seeds = list(seeds)
    for size in sizes:
        for seed in seeds:
            text = generate(domain, seed, **size)
            digest = content_hash(_strip_name(text))
            if digest in seen:
                logger.debug('Skipping duplicate %s seed %d', size, seed)
                continue
            seen.add(digest)
            if not is_usable(domain, text, eval_limit):
                logger.warning('Skipping unusable %s instance %s seed %d', domain, size, seed)
                continue
            corpus.append((_problem_name(text), text))
    logger.info('Generated %d %s instances', len(corpus), domain)
    return corpus


def _problem_name(text):
    return text.split('\n', 1)[0][len('(define (problem '):-1]


def _strip_name(text):
    return text.split('\n', 1)[1]
