"""
Ordered fan-out of independent jobs (channels, layer payloads, index
shards) over a pool of worker processes.

Results always come back in submission order, so nothing computed here
depends on how many workers were used.
"""
import logging
import multiprocessing
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional

from config import config

logger = logging.getLogger(__name__)


class JobStatus(Enum):
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


# One unit of work handed to a worker; kept so a batch can be inspected
# after it ran (how far it got, which job failed and why).
@dataclass
class Job:
    job_id: str
    index: int
    status: JobStatus
    created_at: datetime
    started_at: Optional[datetime] = None
    completed_at: Optional[datetime] = None
    error: Optional[str] = None

    def to_dict(self):
        return {
            'job_id': self.job_id,
            'index': self.index,
            'status': self.status.value,
            'created_at': self.created_at.isoformat(),
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'completed_at': self.completed_at.isoformat() if self.completed_at else None,
            'error': self.error,
        }


class JobManager:
    """Runs a picklable function over a batch of arguments"""

    def __init__(self, num_workers: int = None, name: str = "job"):
        if num_workers is None:
            num_workers = config.NUM_WORKERS
        self.num_workers = max(1, int(num_workers))
        self.name = name
        self.jobs: List[Job] = []

    def _mark(self, job: Job, status: JobStatus, error: str = None):
        job.status = status
        if status is JobStatus.PROCESSING:
            job.started_at = datetime.now()
        elif status in (JobStatus.COMPLETED, JobStatus.FAILED):
            job.completed_at = datetime.now()
            job.error = error

    def run(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """Apply `func` to every item; results are returned in item order."""
        items = list(items)
        self.jobs = [
            Job(job_id=f"{self.name}-{i}", index=i, status=JobStatus.PENDING, created_at=datetime.now())
            for i in range(len(items))
        ]
        if not items:
            return []

        workers = min(self.num_workers, len(items))
        if workers <= 1:
            results = []
            for job, item in zip(self.jobs, items):
                self._mark(job, JobStatus.PROCESSING)
                try:
                    results.append(func(item))
                except Exception as e:
                    self._mark(job, JobStatus.FAILED, str(e))
                    logger.error(f"Job failed: {job.to_dict()}")
                    raise
                self._mark(job, JobStatus.COMPLETED)
            logger.debug(f"{self.name} batch finished: {self.get_queue_stats()}")
            return results

        logger.debug(f"Starting {workers} worker processes for {len(items)} {self.name} jobs")
        for job in self.jobs:
            self._mark(job, JobStatus.PROCESSING)
        results = []
        with multiprocessing.Pool(processes=workers) as pool:
            iterator = pool.imap(func, items, chunksize=1)
            for job in self.jobs:
                try:
                    results.append(next(iterator))
                except Exception as e:
                    self._mark(job, JobStatus.FAILED, str(e))
                    logger.error(f"Job failed: {job.to_dict()}")
                    raise
                self._mark(job, JobStatus.COMPLETED)
        logger.debug(f"{self.name} batch finished: {self.get_queue_stats()}")
        return results

    def get_queue_stats(self) -> Dict[str, int]:
        """Get job statistics for the last batch"""
        counts = {status.value: 0 for status in JobStatus}
        for job in self.jobs:
            counts[job.status.value] += 1
        counts['total'] = len(self.jobs)
        return counts
