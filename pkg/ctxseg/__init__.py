from .app import app as app
from .app import entry_point as cli  # noqa: F401
