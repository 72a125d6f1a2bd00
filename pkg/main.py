import logging
import sys

from config import Config

logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)

logger = logging.getLogger(__name__)


def main():
    from cli import cli

    try:
        cli(prog_name='semtpir')
    except Exception as e:
        logger.critical(f"Unhandled failure: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
