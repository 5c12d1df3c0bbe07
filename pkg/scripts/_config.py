"""Turn a dataclass of defaults into command-line flags."""

import argparse
import dataclasses


def parse_config(cls, description: str, argv=None):
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, tuple):
            parser.add_argument(flag, type=float, nargs="+", default=list(default))
        else:
            parser.add_argument(flag, type=type(default), default=default)
    ns = vars(parser.parse_args(argv))
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in ns.items()})
