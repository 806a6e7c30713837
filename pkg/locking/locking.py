import os
from threading import Lock, RLock
from contextlib import contextmanager

registryLock = Lock()
artifactLocks = {}


@contextmanager
def artifactLock(*paths):
    # acquired in sorted absolute-path order
    keys = sorted({os.path.abspath(path) for path in paths})
    for key in keys:
        getLock(key).acquire()
    try:
        yield None
    finally:
        for key in reversed(keys):
            getLock(key).release()


def getLock(key):
    with registryLock:
        lock = artifactLocks.get(key)
        if not lock:
            lock = RLock()
            artifactLocks[key] = lock
        return lock


def clearLocks():
    with registryLock:
        artifactLocks.clear()
