# run.py
from dotenv import load_dotenv
load_dotenv()

from emslb_pkg.cli.commands import cli

if __name__ == '__main__':
    cli()
