"""Command-line interface: generate, fit, eval, predict.

Exit codes: 0 success, 2 configuration, 3 numerical/consistency, 4 I/O.
"""
import argparse
import hashlib
import json
import logging
import os
import sys

from .copula import CopulaSpec, NumericalError
from .evalharness import cross_validate, default_workers
from .formats import (FormatError, config_hash, read_dataset, read_matrix_csv, read_pairs,
                      read_subgroups, write_dataset, write_json, write_matrix_csv,
                      write_subgroups)
from .inference import ChainConfig, run_chain
from .mathkernel import DomainError
from .relmodel import ConsistencyError, Hyperparams, SubgroupMap
from .synthgen import PRESETS, SynthSpec, generate, preset

log = logging.getLogger("cmmsb")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

RUN_KEYS = {
    "dataset", "subgroups", "preset", "variant", "mode", "K", "K_init", "alpha", "gamma",
    "lambda1", "lambda2", "copulas", "iterations", "burn_in_fraction", "seed", "folds",
    "workers", "out", "sample_beta", "theta_steps", "pi_steps", "beta_steps",
    "beta_concentration", "uv_steps", "predictive_draws",
}
TUNING_KEYS = ("sample_beta", "theta_steps", "pi_steps", "beta_steps", "beta_concentration",
               "uv_steps", "predictive_draws", "burn_in_fraction")


class ConfigError(DomainError):
    pass


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _copula_from_config(entry, where):
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: copula entry must be an object")
    entry = dict(entry)
    if "theta_init" in entry:
        entry["theta"] = entry.pop("theta_init")
    unknown = set(entry) - {"family", "theta", "prior", "proposal_scale", "fixed"}
    if unknown:
        raise ConfigError(f"{where}: unknown copula fields {sorted(unknown)}")
    try:
        return CopulaSpec(**entry)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


class RunConfig:
    """Resolved run configuration (file-backed, paths relative to the file)."""

    def __init__(self, raw, base_dir=".", seed=None, out=None, preset_name=None):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - RUN_KEYS
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        self.raw = dict(raw)
        if seed is not None:
            self.raw["seed"] = seed
        if preset_name is not None:
            self.raw["preset"] = preset_name
            self.raw.pop("dataset", None)
            self.raw.pop("subgroups", None)
        self.base_dir = base_dir
        self.out = out or raw.get("out") or "."
        if not os.path.isabs(self.out) and out is None:
            self.out = os.path.join(base_dir, self.out)
        r = self.raw
        if ("dataset" in r) == ("preset" in r):
            raise ConfigError("config needs exactly one of 'dataset' or 'preset'")
        K = r.get("K", r.get("K_init", 4))
        copulas = [_copula_from_config(c, f"copulas[{t}]") for t, c in enumerate(r.get("copulas", []))]
        try:
            hp = Hyperparams(r.get("alpha", 1.0), r.get("gamma", 1.0),
                             r.get("lambda1", 1.0), r.get("lambda2", 1.0))
            tuning = {k: r[k] for k in TUNING_KEYS if k in r}
            self.chain = ChainConfig(variant=r.get("variant", "pi"), mode=r.get("mode", "finite"),
                                     K=int(K), iterations=int(r.get("iterations", 1000)),
                                     seed=int(r.get("seed", 0)), copulas=copulas, hyper=hp,
                                     **tuning)
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        self.folds = int(r.get("folds", 10))
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        self.workers = r.get("workers")

    def _path(self, key):
        p = self.raw[key]
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def load_data(self):
        if "preset" in self.raw:
            try:
                data, sub, _ = generate(preset(self.raw["preset"], self.chain.seed))
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
            D = len(self.chain.copulas)
            if sub.D > D:
                raise ConfigError(f"preset uses {sub.D} subgroups but {D} copulas are configured")
            return data, sub
        data = read_dataset(self._path("dataset"))
        if "subgroups" in self.raw:
            sub = read_subgroups(self._path("subgroups"), data.n)
        elif self.chain.copulas:
            sub = SubgroupMap.full(data.n, 1)
        else:
            sub = SubgroupMap.independent(data.n)
        return data, sub

    def identity(self):
        """Hash input: the config as given plus the content of referenced files."""
        ident = {"config": self.raw}
        for key in ("dataset", "subgroups"):
            if key in self.raw:
                with open(self._path(key), "rb") as fh:
                    ident[key + "_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        return config_hash(ident)


def _resolve(args):
    if args.config is None and args.preset is None:
        raise ConfigError("--config or --preset is required")
    raw = _load_json(args.config) if args.config else {}
    if args.config is None:
        raw = {"copulas": [{"family": "gumbel", "theta": 2.0}]}
        if args.preset == "paper-synthetic-partial":
            raw["copulas"] = raw["copulas"] * 2
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    return RunConfig(raw, base, seed=args.seed, out=args.out, preset_name=args.preset)


# ---------------------------------------------------------------------------

def cmd_generate(args):
    if args.preset is not None:
        spec = preset(args.preset, 0 if args.seed is None else args.seed)
    elif args.config is not None:
        raw = _load_json(args.config)
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: spec must be a JSON object")
        if args.seed is not None:
            raw["seed"] = args.seed
        try:
            raw["copula_specs"] = [_copula_from_config(c, f"copula_specs[{t}]")
                                   for t, c in enumerate(raw.get("copula_specs", []))]
            spec = SynthSpec(**raw)
        except (DomainError, TypeError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
    else:
        raise ConfigError("generate needs --preset or --config")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    data, sub, truth = generate(spec)
    h = config_hash(spec.to_dict())
    write_dataset(os.path.join(out, "data.txt"), data)
    write_subgroups(os.path.join(out, "subgroups.txt"), sub)
    write_json(os.path.join(out, "truth.json"), {
        "config_sha256": h,
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "groups": truth["groups"].tolist(),
        "pi": truth["pi"].tolist(),
        "theta": truth["theta"],
        "pairs": truth["pairs"].tolist(),
        "u": truth["u"].tolist(),
        "v": truth["v"].tolist(),
        "s": truth["s"].tolist(),
        "r": truth["r"].tolist(),
    })
    log.info("wrote %s (n=%d)", out, data.n)
    return 0


def cmd_fit(args):
    rc = _resolve(args)
    data, sub = rc.load_data()
    h = rc.identity()
    trace = run_chain(data, sub, rc.chain)
    os.makedirs(rc.out, exist_ok=True)
    pred = trace.pred_sum / trace.n_samples
    write_matrix_csv(os.path.join(rc.out, "predictive.csv"), pred,
                     f"config_sha256={h} seed={rc.chain.seed}")
    burn = trace.burn_in
    write_json(os.path.join(rc.out, "trace.json"), {
        "config_sha256": h,
        "seed": rc.chain.seed,
        "iterations": trace.iterations,
        "burn_in": burn,
        "n_samples": trace.n_samples,
        "K": trace.K.tolist(),
        "occupied": trace.occupied.tolist(),
        "theta": trace.theta.tolist(),
        "loglik": trace.loglik.tolist(),
        "accept": {k: list(v) for k, v in trace.accept.items()},
        "theta_posterior_mean": trace.theta[burn:].mean(axis=0).tolist(),
    })
    log.info("fit done: %d iterations, %d samples", trace.iterations, trace.n_samples)
    return 0


def cmd_eval(args):
    rc = _resolve(args)
    data, sub = rc.load_data()
    h = rc.identity()
    workers = rc.workers if rc.workers is not None else default_workers(rc.folds)
    if os.environ.get("CMMSB_WORKERS"):
        workers = default_workers(rc.folds)
    report = cross_validate(data, sub, rc.chain, rc.folds, workers=int(workers))
    os.makedirs(rc.out, exist_ok=True)
    doc = {"config_sha256": h, "seed": rc.chain.seed, "variant": rc.chain.variant}
    doc.update(report.to_dict())
    write_json(os.path.join(rc.out, "metrics.json"), doc)
    s = report.summary()
    log.info("test_error %.4f  auc %s", s["test_error"]["mean"], s["auc"]["mean"])
    return 0


def cmd_predict(args):
    if args.trace is None or args.pairs is None:
        raise ConfigError("predict needs --trace DIR and --pairs FILE")
    pred = read_matrix_csv(os.path.join(args.trace, "predictive.csv"))
    pairs = read_pairs(args.pairs, pred.shape[0])
    lines = []
    for i, j in pairs:
        if i == j:
            raise ConfigError(f"pair ({i}, {j}) is on the diagonal")
        lines.append(f"{i} {j} {float(pred[i, j])!r}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="cmmsb", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sp = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("generate", cmd_generate, "write a synthetic dataset"),
        ("fit", cmd_fit, "run one chain on all observed entries"),
        ("eval", cmd_eval, "k-fold link-prediction evaluation"),
        ("predict", cmd_predict, "look up predictive probabilities of node pairs"),
    ):
        p = sp.add_parser(name, help=helptext)
        p.set_defaults(func=fn)
        p.add_argument("--out", help="output directory (predict: output file)")
        if name == "predict":
            p.add_argument("--trace", help="directory written by 'fit'")
            p.add_argument("--pairs", help="file with one 'i j' per line")
        else:
            p.add_argument("--config", help="JSON config file")
            p.add_argument("--seed", type=int)
            p.add_argument("--preset", choices=PRESETS)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FormatError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConsistencyError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
