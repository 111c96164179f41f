"""
shefk Results Module
Monte Carlo estimates and the CSV/JSON run documents built from them
"""

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FieldEstimate:
    """
    A Monte Carlo scalar result
    """
    value: float
    std_error: float
    n: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")
        if self.n < 1:
            raise ValueError(f"sample count must be positive, got {self.n}")

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> 'FieldEstimate':
        """Sample mean with its standard error (ddof=1)"""
        values = np.asarray(samples, dtype=float).ravel()
        n = values.size
        if n == 0:
            raise ValueError("cannot estimate from an empty sample")
        mean = float(np.mean(values))
        se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(value=mean, std_error=se, n=n)

    @classmethod
    def exact(cls, value: float) -> 'FieldEstimate':
        """A deterministic value (zero standard error)"""
        return cls(value=float(value), std_error=0.0, n=1)

    def agrees_with(self, other: float, n_se: float = 3.0, budget: float = 0.0) -> bool:
        """True when |value - other| is within n_se standard errors plus budget"""
        return abs(self.value - other) <= n_se * self.std_error + budget

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FieldEstimate':
        """Create instance from dictionary"""
        return cls(value=float(data['value']), std_error=float(data['std_error']), n=int(data['n']))


def combined_se(*estimates: FieldEstimate) -> float:
    """Standard error of a difference of independent estimates"""
    return float(np.sqrt(sum(e.std_error ** 2 for e in estimates)))


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 (first 16 hex chars) of the canonical JSON of a config"""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays nested in results to plain Python"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, FieldEstimate):
        return value.to_dict()
    return value


@dataclass
class RunDocument:
    """
    Output of one CLI run: {config, results[], diagnostics{}, provenance{}}
    """
    config: Dict[str, Any]
    results: List[Dict[str, Any]] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(cls, config: Dict[str, Any], version: str) -> 'RunDocument':
        """New document stamped with config hash, seed and version"""
        provenance = {
            'config_hash': config_hash(config),
            'seed': config.get('seed'),
            'version': version,
        }
        return cls(config=dict(config), provenance=provenance)

    def add_row(self, **row: Any) -> None:
        """Append a result row"""
        row.setdefault('config_hash', self.provenance.get('config_hash'))
        self.results.append(_jsonable(row))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return _jsonable(asdict(self))

    def to_json(self, pretty: bool = True) -> str:
        """Convert to JSON string (sorted keys, no timestamps)"""
        indent = 2 if pretty else None
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True) + '\n'

    def to_csv(self) -> str:
        """Result rows as CSV with a header row"""
        buffer = io.StringIO()
        columns: List[str] = []
        for row in self.results:
            for key in row:
                if key not in columns:
                    columns.append(key)
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        for row in self.results:
            writer.writerow({k: _csv_cell(v) for k, v in row.items()})
        return buffer.getvalue()

    def render(self, fmt: str) -> str:
        """Render in 'csv' or 'json'"""
        if fmt == 'json':
            return self.to_json()
        if fmt == 'csv':
            return self.to_csv()
        raise ValueError(f"Unknown output format: {fmt}")

    def dump_to_file(self, filename: str, fmt: str = 'json') -> None:
        """Save the document to a file"""
        with open(filename, 'w', newline='') as f:
            f.write(self.render(fmt))
        logger.info(f"Results written to {filename}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunDocument':
        """Create instance from dictionary"""
        return cls(
            config=dict(data.get('config', {})),
            results=list(data.get('results', [])),
            diagnostics=dict(data.get('diagnostics', {})),
            provenance=dict(data.get('provenance', {})),
        )

    @classmethod
    def from_json(cls, json_str: str) -> 'RunDocument':
        """Create instance from JSON string"""
        return cls.from_dict(json.loads(json_str))

    @classmethod
    def load_from_file(cls, filename: str) -> Optional['RunDocument']:
        """Load a document from a JSON file"""
        try:
            with open(filename, 'r') as f:
                return cls.from_json(f.read())
        except Exception as e:
            logger.error(f"Failed to load run document from {filename}: {e}")
            return None


def _csv_cell(value: Any) -> Any:
    """Flatten list cells so CSV stays one value per column"""
    if isinstance(value, (list, tuple)):
        return ';'.join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return value
