"""Make pcsinfer runnable with python -m pcsinfer <command>."""
from pcsinfer.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
