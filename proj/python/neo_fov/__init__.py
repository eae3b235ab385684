"""Field-of-view extrapolation: voxel radiance field, pose sampling,
outpainting and baselines."""

import json

from ._core import *  # noqa: F401,F403
from ._core import NeoError, read_report_json


def read_report(path):
    """Parsed report.json as a dict."""
    return json.loads(read_report_json(str(path)))


__all__ = [name for name in dir() if not name.startswith("_")] + ["NeoError"]
