"""Module with data transfer objects."""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional


@dataclass
class Dto:

    def as_dict(self):
        return asdict(self)


@dataclass
class SearchResult(Dto):
    status: str
    plan: List[int]
    evaluations: int
    expansions: int
    plan_length: int
    seconds: float
    lookahead_depth: Optional[int] = None


@dataclass
class EpisodeRecord(Dto):
    sgd_step: int
    episode: int
    instance: str
    objects: int
    episode_len: int
    reached_goal: bool
    loss: Optional[float]
    cumulative_goals: int


@dataclass
class ReportRow(Dto):
    instance: str
    objects: int
    algorithm: str
    heuristic: str
    status: str
    evaluations: int
    expansions: int
    plan_length: int
    seconds: float


@dataclass
class SuiteReport(Dto):
    """Evaluation rows plus per-heuristic coverage and pairwise tallies.

    `tallies[a][b]` counts instances where heuristic a needed fewer evaluations than b.
    """
    rows: List[ReportRow]
    coverage: Dict[str, int]
    tallies: Dict[str, Dict[str, int]]
    failures: List[str] = field(default_factory=list)


@dataclass
class RunManifest(Dto):
    seed: int
    config: dict
    instances: Dict[str, str]
    version: str
    domain_fingerprint: str


@dataclass
class PlanReport(Dto):
    row: ReportRow
    plan: List[str]


@dataclass
class TrainSummary(Dto):
    steps: int
    episodes: int
    cumulative_goals: int
    checkpoint: str
    metrics: str
    manifest: str
