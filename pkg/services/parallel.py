"""Worker pool shared by the per-gene, per-cell and per-subsample loops."""
from typing import Any, Callable, Iterable, List, Sequence

from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits


def _single_threaded(func: Callable, args: Sequence[Any]) -> Any:
    # one BLAS thread per task: results must not depend on the worker count
    with threadpool_limits(limits=1):
        return func(*args)


def run_parallel(func: Callable, tasks: Iterable[Sequence[Any]], jobs: int = 1) -> List[Any]:
    """Apply ``func`` to every argument tuple; results come back in submission order."""
    tasks = list(tasks)
    if jobs == 1 or len(tasks) <= 1:
        return [_single_threaded(func, args) for args in tasks]
    return Parallel(n_jobs=jobs)(delayed(_single_threaded)(func, args) for args in tasks)
