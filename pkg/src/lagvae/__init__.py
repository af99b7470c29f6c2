"""Lagrangian views of latent-variable generative-model objectives."""

__version__ = "0.1.0"


def bundled(name: str):
    """Path of a file shipped in ``lagvae/data`` (configs, grammar notes)."""
    from importlib.resources import files

    path = files(__package__) / "data" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled file {name!r}")
    return path
