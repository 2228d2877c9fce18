"""Module with simple wrappers around the files the planner reads and writes."""

import csv
import json
from pathlib import Path

from . import checkpoint
from .exception import CheckpointFormatError, ProblemFileError
from .schema import REPORT_COLUMNS, EpisodeRecordSchema, ReportRowSchema, RunManifestSchema, load


DOMAIN_FILE = 'domain.pddl'


class ProblemFileClient:
    """Reads PDDL files.

    Attributes:
        _encoding (str): Text encoding of the files.

    """

    def __init__(self, encoding='utf-8'):
        self._encoding = encoding

    def read(self, path):
        """Returns the text of a PDDL file.

        Raises:
            ProblemFileError: If the file cannot be read.

        """
        try:
            return Path(path).read_text(encoding=self._encoding)
        except (OSError, UnicodeDecodeError) as error:
            raise ProblemFileError(message='Cannot read {}.'.format(path), payload={'path': str(path), 'error': str(error)})

    def list_problems(self, directory):
        """Returns the .pddl files of a directory in name order, `domain.pddl` excluded.

        Raises:
            ProblemFileError: If the directory does not exist.

        """
        directory = Path(directory)
        if not directory.is_dir():
            raise ProblemFileError(message='{} is not a directory.'.format(directory), payload={'path': str(directory)})
        return sorted(
            path for path in directory.glob('*.pddl')
            if path.is_file() and path.name != DOMAIN_FILE
        )

    def write(self, path, text):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding=self._encoding)


class CheckpointFileClient:
    """Stores models in the binary checkpoint format."""

    def save(self, path, model, adam=None):
        """Writes the checkpoint via a temporary file and returns its bytes."""
        data = checkpoint.dumps(model, adam)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        temporary = path.with_name(path.name + '.tmp')
        temporary.write_bytes(data)
        temporary.replace(path)
        return data

    def load(self, path):
        """Reads a checkpoint.

        Returns:
            Checkpoint: Model, optimizer state and header.

        Raises:
            CheckpointFormatError: If the file is missing or malformed.

        """
        try:
            data = Path(path).read_bytes()
        except OSError as error:
            raise CheckpointFormatError(message='Cannot read {}.'.format(path), payload={'path': str(path), 'error': str(error)})
        return checkpoint.loads(data)


class MetricsFileClient:
    """Appends training records as JSON lines.

    Attributes:
        _schema (EpisodeRecordSchema): Row (de)serializer.

    """

    def __init__(self):
        self._schema = EpisodeRecordSchema()

    def open(self, path):
        """Truncates the metrics file and returns an appending writer."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('', encoding='utf-8')

        def append(record):
            with path.open('a', encoding='utf-8') as stream:
                stream.write(json.dumps(self._schema.dump(record), sort_keys=True) + '\n')

        return append

    def read(self, path):
        with Path(path).open(encoding='utf-8') as stream:
            return [load(self._schema, json.loads(line)) for line in stream if line.strip()]


class ReportFileClient:
    """Writes and reads evaluation reports as CSV."""

    def __init__(self):
        self._schema = ReportRowSchema()

    def write(self, path, rows):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', encoding='utf-8', newline='') as stream:
            writer = csv.DictWriter(stream, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow(self._schema.dump(row))

    def read(self, path):
        with Path(path).open(encoding='utf-8', newline='') as stream:
            return [load(self._schema, row) for row in csv.DictReader(stream)]

    def write_summary(self, path, report):
        """Writes per-heuristic coverage, pairwise tallies and failures as JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        summary = {
            'rows': len(report.rows),
            'coverage': report.coverage,
            'tallies': report.tallies,
            'failures': report.failures
        }
        path.write_text(json.dumps(summary, sort_keys=True, indent=2) + '\n', encoding='utf-8')

    def read_summary(self, path):
        return json.loads(Path(path).read_text(encoding='utf-8'))


class ManifestFileClient:
    """Writes and reads run manifests as JSON."""

    def __init__(self):
        self._schema = RunManifestSchema()

    def write(self, path, manifest):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self._schema.dump(manifest), sort_keys=True, indent=2) + '\n', encoding='utf-8')

    def read(self, path):
        return load(self._schema, json.loads(Path(path).read_text(encoding='utf-8')))


class PlanFileClient:
    """Writes plans in VAL form, one `(action obj1 obj2)` per line."""

    def write(self, path, labels):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(''.join(label + '\n' for label in labels), encoding='utf-8')

    def read(self, path):
        return [line.strip() for line in Path(path).read_text(encoding='utf-8').splitlines() if line.strip()]
