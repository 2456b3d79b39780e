"""Console entry point: serve the app under uvicorn."""

import uvicorn

from .app import create_app
from .config import load_config


def main() -> None:
    config = load_config()
    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port)


if __name__ == "__main__":
    main()
