"""Allow running the CLI as ``python -m churnet``."""

from .cli import main

if __name__ == "__main__":
    main()
