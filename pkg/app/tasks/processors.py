import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Optional

from app.settings import get_settings

from . import tasks

logger = logging.getLogger(__name__)


# Run fn on every parameter in a worker thread and gather the results in input order
async def sweep_processor(task_id: str, fn: Callable[[Any], Any], params: list, workers: int):
    tasks[task_id]["status"] = "processing"  # Mark as processing
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, fn, p) for p in params]  # numpy releases the GIL
        return await asyncio.gather(*futures)


# Register a sweep, run it and record its final status
def run_sweep(label: str, fn: Callable[[Any], Any], params: Iterable, workers: Optional[int] = None) -> list:
    params = list(params)
    workers = workers or get_settings().workers
    task_id = f"{label}_{len(tasks)}"  # Unique task id
    tasks[task_id] = {"status": "pending", "size": len(params)}
    if workers <= 1 or len(params) <= 1:
        tasks[task_id]["status"] = "processing"
        coro = None
    else:
        coro = sweep_processor(task_id, fn, params, workers)
    try:
        results = [fn(p) for p in params] if coro is None else asyncio.run(coro)
        tasks[task_id] = {"status": "completed", "size": len(params)}
        logger.info("Sweep %s finished (%d parameters)", task_id, len(params))
        return list(results)
    except Exception as e:
        tasks[task_id] = {"status": "error", "error": str(e)}  # Save error
        raise
