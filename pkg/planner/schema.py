"""Module with marshmallow schemas for configuration and persisted rows."""

from marshmallow import Schema, fields, post_load, validate
from marshmallow.exceptions import ValidationError

from .domain import Algorithm, Shaping
from .dto import EpisodeRecord, ReportRow, RunManifest
from .exception import InvalidConfig
from .search import SearchConfig
from .trainer import TrainConfig


_POSITIVE = validate.Range(min=1)
_NON_NEGATIVE = validate.Range(min=0)


class TrainConfigSchema(Schema):
    steps = fields.Integer(load_default=50000, validate=_NON_NEGATIVE)
    episode_cap = fields.Integer(load_default=40, validate=_POSITIVE)
    gamma = fields.Float(load_default=0.999999, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    batch = fields.Integer(load_default=25, validate=_POSITIVE)
    tau = fields.Float(load_default=1.0, validate=validate.Range(min=0.0, min_inclusive=False))
    buffer = fields.Integer(load_default=6000, validate=_POSITIVE)
    shaping = fields.String(load_default=Shaping.HFF.value, validate=validate.OneOf([s.value for s in Shaping]))
    seed = fields.Integer(load_default=0)
    max_arity = fields.Integer(load_default=3, validate=_NON_NEGATIVE)
    layers = fields.Integer(load_default=6, validate=_POSITIVE)
    width = fields.Integer(load_default=8, validate=_POSITIVE)
    learning_rate = fields.Float(load_default=0.001, validate=validate.Range(min=0.0, min_inclusive=False))
    dead_end_value = fields.Float(load_default=None, allow_none=True)
    checkpoint_interval = fields.Integer(load_default=1000, validate=_POSITIVE)
    log_interval = fields.Integer(load_default=100, validate=_POSITIVE)

    @post_load
    def make_config(self, data, **kwargs):
        return TrainConfig(**data)


class SearchConfigSchema(Schema):
    algorithm = fields.String(load_default=Algorithm.GBFS.value, validate=validate.OneOf([a.value for a in Algorithm]))
    eval_limit = fields.Integer(load_default=100000, validate=_POSITIVE)
    lookahead_factor = fields.Integer(load_default=5, validate=_POSITIVE)
    lookahead_fallback = fields.Integer(load_default=50, validate=_POSITIVE)

    @post_load
    def make_config(self, data, **kwargs):
        return SearchConfig(**data)


class EpisodeRecordSchema(Schema):
    sgd_step = fields.Integer(required=True)
    episode = fields.Integer(required=True)
    instance = fields.String(required=True)
    objects = fields.Integer(required=True)
    episode_len = fields.Integer(required=True)
    reached_goal = fields.Boolean(required=True)
    loss = fields.Float(allow_none=True, allow_nan=True)
    cumulative_goals = fields.Integer(required=True)

    @post_load
    def make_record(self, data, **kwargs):
        return EpisodeRecord(**data)


class ReportRowSchema(Schema):
    instance = fields.String(required=True)
    objects = fields.Integer(required=True)
    algorithm = fields.String(required=True)
    heuristic = fields.String(required=True)
    status = fields.String(required=True)
    evaluations = fields.Integer(required=True)
    expansions = fields.Integer(required=True)
    plan_length = fields.Integer(required=True)
    seconds = fields.Float(required=True)

    @post_load
    def make_row(self, data, **kwargs):
        return ReportRow(**data)


REPORT_COLUMNS = (
    'instance', 'objects', 'algorithm', 'heuristic', 'status', 'evaluations', 'expansions', 'plan_length', 'seconds'
)


class RunManifestSchema(Schema):
    seed = fields.Integer(required=True)
    config = fields.Dict(required=True)
    instances = fields.Dict(keys=fields.String(), values=fields.String(), required=True)
    version = fields.String(required=True)
    domain_fingerprint = fields.String(required=True)

    @post_load
    def make_manifest(self, data, **kwargs):
        return RunManifest(**data)


def load(schema, data):
    """Loads `data` with `schema`, raising InvalidConfig with marshmallow's field errors."""
    try:
        return schema.load(data)
    except ValidationError as error:
        raise InvalidConfig(
            message='Validation failed for {}.'.format(type(schema).__name__),
            payload=error.messages
        )
