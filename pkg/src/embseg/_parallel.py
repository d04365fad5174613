"""Worker-count policy: the DGS_THREADS environment variable caps parallelism."""

import os


def worker_count(task_count=None):
    cap = os.cpu_count() or 1
    env = os.environ.get("DGS_THREADS")
    if env is not None:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass  # unparseable value falls back to cpu count
    if task_count is not None:
        cap = max(1, min(cap, task_count))
    return cap
