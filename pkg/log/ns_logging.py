import sys
from threading import local
from contextlib import contextmanager

context = local()


@contextmanager
def loggingContext(stage=None, item=None):
    oldStage = getStage()
    oldItem = getItem()
    setContext(stage if stage else oldStage, item if item is not None else oldItem)
    try:
        yield None
    finally:
        setContext(oldStage, oldItem)


def setContext(stage=None, item=None):
    context.stage = stage
    context.item = item


def getStage():
    return getattr(context, "stage", None)


def getItem():
    return getattr(context, "item", None)


def exceptionStr(exception):
    return getattr(exception, "message", repr(exception))


def logInfo(message):
    log(message, "INFO", sys.stdout)


def logWarning(message):
    log(message, "WARNING", sys.stderr)


def logError(message):
    log(message, "ERROR", sys.stderr)


def log(message, level, file):
    stage = getStage()
    item = getItem()
    if stage:
        if item is not None:
            stageSpecifier = f"[{stage}][{item}]: "
        else:
            stageSpecifier = f"[{stage}]: "
    else:
        stageSpecifier = ""
    print(f"{stageSpecifier}{level}: {message}", file=file, flush=True)
