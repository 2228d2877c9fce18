"""Module with DI configuration."""

import os

from .client import (
    CheckpointFileClient,
    ManifestFileClient,
    MetricsFileClient,
    PlanFileClient,
    ProblemFileClient,
    ReportFileClient
)
from .commands import (
    EvaluateHandler,
    GenerateHandler,
    PlanHandler,
    TrainHandler
)
from .usecase import (
    EvaluateProblems,
    GenerateProblems,
    HeuristicResolver,
    PlanInstance,
    TrainModel
)


THREADS = os.environ.get('PLANNER_THREADS', 1)
EVAL_LIMIT = os.environ.get('PLANNER_EVAL_LIMIT', 100000)
CHECKPOINT_INTERVAL = os.environ.get('PLANNER_CHECKPOINT_INTERVAL', 1000)
LOG_LEVEL = os.environ.get('PLANNER_LOG_LEVEL', 'INFO')
LOG_INTERVAL = os.environ.get('PLANNER_LOG_INTERVAL', 100)


class Container:

    def __init__(self, *, testing_mode=False):
        """Container initializer.

        Args:
            testing_mode (bool): Whether container should be set up in testing mode or not.
                Testing mode runs single-threaded with a reduced evaluation budget.

        """
        if testing_mode:
            threads = 1
            eval_limit = 10000
        else:
            threads = int(THREADS)
            eval_limit = int(EVAL_LIMIT)

        # clients

        self.problem_file_client = ProblemFileClient()

        self.checkpoint_file_client = CheckpointFileClient()

        self.metrics_file_client = MetricsFileClient()

        self.report_file_client = ReportFileClient()

        self.manifest_file_client = ManifestFileClient()

        self.plan_file_client = PlanFileClient()

        # services

        self.heuristic_resolver = HeuristicResolver(
            checkpoint_client=self.checkpoint_file_client
        )

        # use cases

        self.plan_instance = PlanInstance(
            problem_client=self.problem_file_client,
            plan_client=self.plan_file_client,
            resolver=self.heuristic_resolver,
            eval_limit=eval_limit
        )

        self.train_model = TrainModel(
            problem_client=self.problem_file_client,
            checkpoint_client=self.checkpoint_file_client,
            metrics_client=self.metrics_file_client,
            manifest_client=self.manifest_file_client,
            checkpoint_interval=int(CHECKPOINT_INTERVAL),
            log_interval=int(LOG_INTERVAL)
        )

        self.evaluate_problems = EvaluateProblems(
            problem_client=self.problem_file_client,
            report_client=self.report_file_client,
            resolver=self.heuristic_resolver,
            eval_limit=eval_limit,
            threads=threads
        )

        self.generate_problems = GenerateProblems(
            problem_client=self.problem_file_client,
            eval_limit=eval_limit
        )

        # commands

        self.plan_handler = PlanHandler(
            plan_instance=self.plan_instance
        )

        self.train_handler = TrainHandler(
            train_model=self.train_model
        )

        self.evaluate_handler = EvaluateHandler(
            evaluate_problems=self.evaluate_problems
        )

        self.generate_handler = GenerateHandler(
            generate_problems=self.generate_problems
        )
