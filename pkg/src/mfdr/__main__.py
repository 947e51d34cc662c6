"""Module execution entry point: ``python -m mfdr``."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
