#! python3

"""Main script entry point to run MIMO-FAS campaigns."""

from mimofas.cli import main

if __name__ == "__main__":
    # Entry point of campaign runner script.
    # Execute only if run as a script.
    main()
