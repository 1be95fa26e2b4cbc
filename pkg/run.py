import sys

from cli import main

# same flags as `phidep`
# e.g. python run.py estimate --input returns.csv --groups 2,2 --phi hellinger
if __name__ == "__main__":
    sys.exit(main())
