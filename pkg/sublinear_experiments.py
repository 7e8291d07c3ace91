"""Script to run the experiment command line"""
from dotenv import load_dotenv
load_dotenv()
from SublinearDirichlet.cli import main #pylint: disable=wrong-import-position

if __name__ == "__main__":
    main()  # pylint: disable=no-value-for-parameter
