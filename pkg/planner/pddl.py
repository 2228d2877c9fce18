"""Module mapping pyperplan's PDDL reader output onto the STRIPS (+ typing) fragment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Tuple

from pyperplan.pddl.lisp_parser import parse_lisp_iterator
from pyperplan.pddl.parser import parse_domain_def, parse_problem_def
from pyperplan.pddl.tree_visitor import TraversePDDLDomain, TraversePDDLProblem

from .exception import (
    PddlSyntaxError,
    UnsupportedRequirement,
    UnsupportedConstruct,
    InvalidLiftedTask
)


logger = logging.getLogger(__name__)

SUPPORTED_REQUIREMENTS = frozenset({':strips', ':typing'})
ROOT_TYPE = 'object'
TYPE_PREDICATE_PREFIX = 'type:'

_CONNECTIVES = frozenset({'not', 'or', 'imply', 'exists', 'forall', 'when', '=', 'increase', 'decrease'})


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    types: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Atom:
    """Predicate applied to arguments (variables start with '?')."""
    predicate: str
    args: Tuple[str, ...] = ()

    def __str__(self):
        return '({})'.format(' '.join((self.predicate,) + self.args))


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: Tuple[Tuple[str, str], ...]
    pre: Tuple[Atom, ...]
    add: Tuple[Atom, ...]
    delete: Tuple[Atom, ...]


@dataclass(frozen=True)
class LiftedTask:
    """Parsed STRIPS task ⟨O, P, A, I, G⟩ with types compiled away.

    Attributes:
        objects (tuple): Object names in declaration order (domain constants first).
        object_types (tuple): Declared type of each object.
        types (tuple): (type, parent) pairs in declaration order.
        predicates (tuple): Declared predicates followed by one static unary
            predicate per non-root type.
        actions (tuple): Action schemas.
        init (tuple): Initial ground atoms, type atoms included.
        goal (tuple): Goal ground atoms.

    """
    domain_name: str
    problem_name: str
    requirements: Tuple[str, ...]
    types: Tuple[Tuple[str, str], ...]
    objects: Tuple[str, ...]
    object_types: Tuple[str, ...]
    predicates: Tuple[Predicate, ...]
    actions: Tuple[ActionSchema, ...]
    init: Tuple[Atom, ...]
    goal: Tuple[Atom, ...]
    type_members: Tuple[Tuple[str, Tuple[str, ...]], ...] = field(default=())

    def members_of(self, type_name):
        """Returns objects whose type is `type_name` or one of its subtypes."""
        if type_name == ROOT_TYPE:
            return self.objects
        return dict(self.type_members).get(type_name, ())


def parse(domain_text, problem_text):
    """Parses a domain and a problem into a `LiftedTask`.

    Args:
        domain_text (str): PDDL domain definition.
        problem_text (str): PDDL problem definition.

    Returns:
        LiftedTask: Task with typing compiled into static unary atoms.

    Raises:
        PddlSyntaxError: If the reader rejects the text.
        UnsupportedRequirement: If a requirement other than :strips/:typing is declared.
        UnsupportedConstruct: If formulas go beyond conjunctions of atoms.
        InvalidLiftedTask: If atoms, variables or objects are undeclared.

    """
    domain_ast = _read(parse_domain_def, domain_text, 'domain')
    requirements = check_requirements(domain_ast.requirements)
    for action in domain_ast.actions or ():
        if action.precond is not None:
            check_conjunction(action.precond.formula, action.name)
        if action.effect is not None:
            check_effect(action.effect.formula, action.name)
    domain = _visit(domain_ast, TraversePDDLDomain(), 'domain').domain

    problem_ast = _read(parse_problem_def, problem_text, 'problem')
    if problem_ast.goal is not None:
        check_conjunction(problem_ast.goal.formula, 'goal')
    problem = _visit(problem_ast, TraversePDDLProblem(domain), 'problem').get_problem()

    task = _lifted_task(domain, problem, requirements)
    validate(task)
    return task


def check_requirements(statement):
    """Returns the declared requirements, :strips when none are declared.

    Raises:
        UnsupportedRequirement: For anything outside :strips and :typing.

    """
    if statement is None:
        return (':strips',)
    requirements = tuple(':' + keyword.name.lstrip(':') for keyword in statement.keywords)
    for requirement in requirements:
        if requirement not in SUPPORTED_REQUIREMENTS:
            raise UnsupportedRequirement(
                message='Unsupported requirement {}.'.format(requirement),
                payload={'requirement': requirement}
            )
    return requirements


def check_conjunction(formula, where):
    """Accepts an atom or a (possibly empty, possibly nested) conjunction of atoms."""
    if formula.key == 'and':
        for child in formula.children:
            check_conjunction(child, where)
    else:
        _check_atom(formula, where)


def check_effect(formula, where):
    """Accepts conjunctions of atoms and negated atoms."""
    if formula.key == 'and':
        for child in formula.children:
            check_effect(child, where)
    elif formula.key == 'not':
        if len(formula.children) != 1:
            raise PddlSyntaxError(
                message='Malformed negative effect in {}.'.format(where),
                payload={'where': where}
            )
        _check_atom(formula.children[0], where)
    else:
        _check_atom(formula, where)


def _check_atom(formula, where):
    if formula.key in _CONNECTIVES or formula.key == 'and' or any(child.children for child in formula.children):
        raise UnsupportedConstruct(
            message='Unsupported construct "{}" in {}.'.format(formula.key, where),
            payload={'construct': formula.key, 'where': where}
        )


def _read(definition, text, document):
    try:
        return definition(parse_lisp_iterator(text.splitlines()))
    except Exception as error:
        raise PddlSyntaxError(
            message='Cannot read PDDL {}: {}'.format(document, error),
            payload={'document': document, 'reason': str(error)}
        ) from error


def _visit(ast, visitor, document):
    try:
        ast.accept(visitor)
    except Exception as error:
        raise InvalidLiftedTask(
            message='Inconsistent PDDL {}: {}'.format(document, error),
            payload={'document': document, 'reason': str(error)}
        ) from error
    return visitor


def _lifted_task(domain, problem, requirements):
    types = [
        (name, type_.parent.name if type_.parent is not None else ROOT_TYPE)
        for name, type_ in domain.types.items() if name != ROOT_TYPE
    ]
    constants = domain.constants or {}
    typed_objects = [(name, _single_type(type_, name)) for name, type_ in constants.items()]
    typed_objects += [
        (name, _single_type(type_, name)) for name, type_ in problem.objects.items()
        if name not in constants
    ]
    predicates = [
        Predicate(
            predicate.name,
            len(predicate.signature),
            tuple(_single_type(types_, predicate.name) for _, types_ in predicate.signature)
        )
        for predicate in domain.predicates.values()
    ]
    actions = [_action_schema(action) for action in domain.actions.values()]

    declared_types = _type_closure(types)
    type_members = []
    type_atoms = []
    for type_name in _non_root_types(types, typed_objects):
        predicate = Predicate(TYPE_PREDICATE_PREFIX + type_name, 1, (type_name,))
        predicates.append(predicate)
        members = tuple(
            obj for obj, obj_type in typed_objects
            if type_name in declared_types.get(obj_type, (obj_type, ROOT_TYPE))
        )
        type_members.append((type_name, members))
        type_atoms.extend(Atom(predicate.name, (obj,)) for obj in members)

    return LiftedTask(
        domain_name=domain.name,
        problem_name=problem.name,
        requirements=requirements,
        types=tuple(types),
        objects=tuple(obj for obj, _ in typed_objects),
        object_types=tuple(obj_type for _, obj_type in typed_objects),
        predicates=tuple(predicates),
        actions=tuple(actions),
        init=tuple(_atom(atom) for atom in problem.initial_state) + tuple(type_atoms),
        goal=tuple(_atom(atom) for atom in problem.goal),
        type_members=tuple(type_members)
    )


def _action_schema(action):
    parameters = tuple((name, _single_type(types, action.name)) for name, types in action.signature)
    return ActionSchema(
        action.name,
        parameters,
        tuple(_atom(atom) for atom in action.precondition),
        tuple(sorted((_atom(atom) for atom in action.effect.addlist), key=str)),
        tuple(sorted((_atom(atom) for atom in action.effect.dellist), key=str))
    )


def _atom(predicate):
    return Atom(predicate.name, tuple(name for name, _ in predicate.signature))


def _single_type(types, where):
    if not isinstance(types, (tuple, list)):
        types = (types,)
    if len(types) != 1:
        raise UnsupportedConstruct(
            message='Compound types such as (either ...) are not supported in {}.'.format(where),
            payload={'construct': 'either', 'where': where}
        )
    return types[0].name


def validate(task):
    """Checks arities, variable scoping and object references of a lifted task.

    Raises:
        InvalidLiftedTask: On the first violation found.

    """
    arities = {}
    for predicate in task.predicates:
        if predicate.name in arities:
            raise InvalidLiftedTask(
                message='Predicate {} declared twice.'.format(predicate.name),
                payload={'predicate': predicate.name}
            )
        arities[predicate.name] = predicate.arity
    objects = set(task.objects)

    def check_atom(atom, scope, where):
        if atom.predicate not in arities:
            raise InvalidLiftedTask(
                message='Undeclared predicate {} in {}.'.format(atom.predicate, where),
                payload={'predicate': atom.predicate, 'where': where}
            )
        if arities[atom.predicate] != len(atom.args):
            raise InvalidLiftedTask(
                message='Predicate {} expects {} arguments, got {} in {}.'.format(
                    atom.predicate, arities[atom.predicate], len(atom.args), where),
                payload={'predicate': atom.predicate, 'where': where}
            )
        for arg in atom.args:
            if arg.startswith('?'):
                if arg not in scope:
                    raise InvalidLiftedTask(
                        message='Undeclared variable {} in {}.'.format(arg, where),
                        payload={'variable': arg, 'where': where}
                    )
            elif arg not in objects:
                raise InvalidLiftedTask(
                    message='Undeclared object {} in {}.'.format(arg, where),
                    payload={'object': arg, 'where': where}
                )

    known_types = {ROOT_TYPE} | {name for name, _ in task.types} | {parent for _, parent in task.types}
    for action in task.actions:
        scope = {var for var, _ in action.parameters}
        for _, type_name in action.parameters:
            if type_name not in known_types:
                raise InvalidLiftedTask(
                    message='Undeclared type {} in action {}.'.format(type_name, action.name),
                    payload={'type': type_name, 'where': action.name}
                )
        for atom in action.pre + action.add + action.delete:
            check_atom(atom, scope, action.name)
    for atom in task.init:
        check_atom(atom, set(), 'init')
    for atom in task.goal:
        check_atom(atom, set(), 'goal')


def _type_closure(types):
    """Maps each type to the tuple of itself and all its ancestors."""
    parents = dict(types)
    closure = {}
    for name in set(parents) | set(parents.values()) | {ROOT_TYPE}:
        chain, current = [], name
        while current is not None and current not in chain:
            chain.append(current)
            current = parents.get(current, ROOT_TYPE if current != ROOT_TYPE else None)
        closure[name] = tuple(chain)
    return closure


def _non_root_types(types, typed_objects):
    ordered = []
    for name, parent in types:
        for type_name in (name, parent):
            if type_name != ROOT_TYPE and type_name not in ordered:
                ordered.append(type_name)
    for _, type_name in typed_objects:
        if type_name != ROOT_TYPE and type_name not in ordered:
            ordered.append(type_name)
    return ordered
