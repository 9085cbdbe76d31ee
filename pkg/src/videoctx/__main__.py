from .cli_io import entrypoint

entrypoint()
