"""robustse command line.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when a
numerical routine fails without recovery.
"""
import argparse
import sys

import numpy as np

from . import __version__
from .errors import (ConfigError, DegenerateRelaxation, NoCertificate,
                     NonConvergence, ParseError, RankDeficient)
from .estimators import chi_eps, decode_linear
from .harness import load_config, run, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 42)")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, help="worker processes for the trials")
    p.add_argument("-o", "--output", help="CSV path (a .json sidecar is written next to it)")


def build_parser():
    parser = _Parser(prog="robustse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"robustse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bounds", help="alpha*, C and varpi sweeps")
    _common(p)
    p.add_argument("--deltas", type=_floats)
    p.add_argument("--mus", type=_floats)
    p.add_argument("--varpi-delta", type=float)

    for name, text in (("linear", "Gaussian linear measurements"),
                       ("power", "nonlinear power-network measurements")):
        p = sub.add_parser(name, help=f"Monte Carlo on {text}")
        _common(p)
        p.add_argument("--sigmas", type=_floats)
        p.add_argument("--rhos", type=_floats)
        p.add_argument("--error-sigma", type=float)
        p.add_argument("--eps-rule", choices=("chi", "fixed"))
        p.add_argument("--eps", type=float)
        if name == "linear":
            p.add_argument("--n", type=int)
            p.add_argument("--m", type=int)
        else:
            p.add_argument("--network", help="builtin name or CDF file")
            p.add_argument("--measurements", type=int)
            p.add_argument("--max-outer", type=int)

    p = sub.add_parser("verify", help="certified C and beta on Gaussian instances")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--k-max", type=int)

    p = sub.add_parser("decode", help="decode one linear instance from an .npz file")
    p.add_argument("instance", help=".npz with arrays H and y (optional scalar eps)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--eps", type=float, help="noise radius")
    g.add_argument("--sigma", type=float, help="noise std; radius from the chi rule")
    p.add_argument("-o", "--output", help="write x_hat here (one value per line)")
    return parser


_NUMERIC = (NonConvergence, RankDeficient, NoCertificate, DegenerateRelaxation,
            FloatingPointError, np.linalg.LinAlgError)

_OVERRIDES = ("seed", "trials", "workers", "output", "deltas", "mus", "varpi_delta",
              "sigmas", "rhos", "error_sigma", "eps_rule", "eps", "n", "m", "network",
              "measurements", "max_outer", "k_max")


def _experiment(args):
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    config = load_config(args.config, kind=args.command, **overrides)
    table = run(config)
    text = write_outputs(table, config)
    if not config.output:
        sys.stdout.write(text)
    return EXIT_OK


def _decode(args):
    try:
        data = np.load(args.instance)
        H, y = data["H"], data["y"]
        eps = float(data["eps"]) if "eps" in data.files else 0.0
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read instance {args.instance}: {exc}") from exc
    if args.eps is not None:
        eps = args.eps
    elif args.sigma is not None:
        eps = chi_eps(len(y), args.sigma)
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    res = decode_linear(y, H, eps)
    text = "".join(f"{v:.17g}\n" for v in res.x_hat)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    st = res.status
    print(f"eps={eps:.6g} objective={st.objective:.10g} dual_bound={st.dual_bound:.10g} "
          f"iterations={st.iterations}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decode":
            return _decode(args)
        return _experiment(args)
    except _NUMERIC as exc:
        print(f"robustse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParseError, OSError, ValueError) as exc:
        print(f"robustse: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
