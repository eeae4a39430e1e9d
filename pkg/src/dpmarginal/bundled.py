"""Example programs shipped with the package."""

import re
from importlib import resources

_PKG = "dpmarginal.programs"

EXAMPLES = {
    "game": "game.scm",
    "rejection": "rejection.scm",
    "rejection-query": "rejection-query.scm",
    "rope-pulling-team1": "rope-pulling-team1.scm",
    "rope-pulling-team2": "rope-pulling-team2.scm",
    "scalar-implicature": "scalar-implicature.scm",
}

_IMPLICATURE_CALL = re.compile(r"\(listener 'full some-sentence \d+\)\s*\Z")


def source(name):
    try:
        fname = EXAMPLES[name]
    except KeyError:
        raise KeyError(f"no bundled example {name!r}; choose from {', '.join(EXAMPLES)}") from None
    return resources.files(_PKG).joinpath(fname).read_text(encoding="utf-8")


def path(name):
    return resources.files(_PKG).joinpath(EXAMPLES[name])


def implicature_source(depth):
    """The scalar-implicature model queried at the given reasoning depth."""
    text = source("scalar-implicature")
    if not _IMPLICATURE_CALL.search(text):
        raise ValueError("scalar-implicature.scm no longer ends with the expected query")
    return _IMPLICATURE_CALL.sub(f"(listener 'full some-sentence {int(depth)})\n", text)
