"""Allow `python -m popmdp`."""

from popmdp.cli import main

if __name__ == "__main__":
    main()
