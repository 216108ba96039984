"""Command-line front end.

    sketchattn bench-spectral --n 512 --p 8 --d 16,32,64 --seeds 10 --kernel gaussian --out sweep.csv

Commands: bench-spectral, bench-runtime, loewner-audit, spectrum,
sensitivity, check-invariants. A ``--config`` file holds ``key = value``
lines (keys are the flag names without dashes, ``#`` starts a comment);
flags given on the command line win over the file.

Exit codes: 0 success, 1 usage error, 2 runtime or validation failure,
3 invariant-suite failure.
"""

import argparse
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import attention as att
from . import evalbench as eb
from . import io, kernels, matcore, sketch
from .kernels import KernelKind, KernelSpec
from .rng import seeded_rng

COMMANDS = ("bench-spectral", "bench-runtime", "loewner-audit", "spectrum", "sensitivity",
            "check-invariants")

DEFAULT_METHODS = {"bench-runtime": ["SkyformerLifted", "Exact"]}
_SPECTRAL_METHODS = ["SkyformerLifted", "TruncatedSVD"]

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    n: list = field(default_factory=lambda: [256])
    p: int = 8
    pv: int = None
    d: list = field(default_factory=lambda: [16, 32, 64])
    seeds: list = field(default_factory=lambda: list(range(10)))
    kernel: KernelKind = KernelKind.GAUSSIAN
    methods: list = None  # per-command default, see DEFAULT_METHODS
    distribution: str = "iso"
    sigma: float = 1.0
    decay: float = 0.5
    gamma: float = 1e-3
    inverse_mode: att.InverseMode = att.InverseMode.EXACT_PINV
    iters: int = 20
    tol: float = 1e-7
    with_replacement: bool = True
    repeats: int = 5
    output_path: str = None
    input_paths: dict = field(default_factory=dict)

    def synthetic(self, n=None):
        return eb.SyntheticSpec(n or self.n[0], self.p, self.distribution, self.sigma, self.decay,
                                self.seeds[0] if self.seeds else 0, self.pv)

    def iter_config(self):
        return sketch.IterInverseConfig(self.gamma, self.iters, self.tol)


def _count(token, name, minimum=1):
    try:
        v = int(token)
    except ValueError:
        raise UsageError(f"--{name}: expected an integer, got {token!r}") from None
    if v < minimum:
        raise UsageError(f"--{name}: must be >= {minimum}, got {v}")
    return v


def _count_list(token, name, minimum=1):
    parts = [t for t in str(token).split(",") if t.strip()]
    if not parts:
        raise UsageError(f"--{name}: empty list")
    return [_count(t.strip(), name, minimum) for t in parts]


def _real(token, name, positive=True):
    try:
        v = float(token)
    except ValueError:
        raise UsageError(f"--{name}: expected a number, got {token!r}") from None
    if not np.isfinite(v) or (positive and v <= 0):
        raise UsageError(f"--{name}: must be a positive finite number, got {token!r}")
    return v


def _seeds(token):
    token = str(token).strip()
    if "," in token:
        return _count_list(token, "seeds", minimum=0)
    return list(range(_count(token, "seeds")))


def _choice(token, name, options):
    t = str(token).strip().lower()
    if t not in options:
        raise UsageError(f"--{name}: expected one of {sorted(options)}, got {token!r}")
    return options[t]


# key -> converter applied to the raw string (flags and config file alike)
_CONVERTERS = {
    "n": lambda t: _count_list(t, "n"),
    "p": lambda t: _count(t, "p"),
    "pv": lambda t: _count(t, "pv"),
    "d": lambda t: _count_list(t, "d"),
    "seeds": _seeds,
    "kernel": lambda t: _choice(t, "kernel", {"sm": KernelKind.SOFTMAX, "gaussian": KernelKind.GAUSSIAN}),
    "method": lambda t: [_method(x) for x in str(t).split(",") if x.strip()],
    "dist": lambda t: _choice(t, "dist", {"iso": "iso", "aniso": "aniso"}),
    "sigma": lambda t: _real(t, "sigma"),
    "decay": lambda t: _real(t, "decay"),
    "gamma": lambda t: _real(t, "gamma"),
    "inverse": lambda t: _choice(t, "inverse", {"pinv": att.InverseMode.EXACT_PINV,
                                                  "iter": att.InverseMode.ITERATIVE}),
    "iters": lambda t: _count(t, "iters"),
    "tol": lambda t: _real(t, "tol"),
    "replacement": lambda t: _choice(t, "replacement", {"with": True, "without": False}),
    "repeats": lambda t: _count(t, "repeats"),
    "out": str,
    "q": str,
    "k": str,
    "v": str,
}

_FIELD = {"method": "methods", "dist": "distribution", "inverse": "inverse_mode",
          "replacement": "with_replacement", "out": "output_path"}


def _method(token):
    try:
        return eb.Method.parse(token).value
    except ValueError:
        raise UsageError(f"--method: unknown method {token!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="sketchattn", description="Nystrom attention benchmarks")
    parser.add_argument("command", choices=COMMANDS)
    for key in _CONVERTERS:
        parser.add_argument(f"--{key}", dest=key, default=None)
    parser.add_argument("--config", default=None)
    return parser


def read_config_file(path):
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-")
            if key not in _CONVERTERS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def parse_config(argv, config_file=None):
    """Build a :class:`RunConfig` from ``argv`` (command first) and an optional file."""
    args = _build_parser().parse_args(list(argv))
    raw = {}
    path = config_file or args.config
    if path:
        raw.update(read_config_file(path))
    for key in _CONVERTERS:
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    cfg = RunConfig(args.command)
    inputs = {}
    for key, value in raw.items():
        converted = _CONVERTERS[key](value)
        if key in ("q", "k", "v"):
            inputs[key] = converted
        else:
            setattr(cfg, _FIELD.get(key, key), converted)
    cfg.input_paths = inputs
    if cfg.methods is None:
        cfg.methods = list(DEFAULT_METHODS.get(cfg.command, _SPECTRAL_METHODS))
    if inputs and set(inputs) != {"q", "k", "v"}:
        raise UsageError("--q, --k and --v must be given together")
    if cfg.command != "bench-runtime" and len(cfg.n) != 1:
        raise UsageError(f"--n: {cfg.command} takes a single size")
    return cfg


def _load_inputs(cfg):
    if not cfg.input_paths:
        return None
    inp = att.AttentionInput(*(io.load_matrix(cfg.input_paths[k]) for k in ("q", "k", "v")))
    cfg.n = [inp.n]
    cfg.p = inp.p
    cfg.pv = inp.v.shape[1]
    return inp


def _write(cfg, reports, out):
    if cfg.output_path:
        io.emit_csv(reports, cfg.output_path)
    else:
        io.write_csv(reports, out)


def cmd_bench_spectral(cfg, out):
    inp = _load_inputs(cfg)
    return eb.spectral_sweep(cfg.synthetic(), cfg.kernel, cfg.d, cfg.seeds, cfg.methods,
                             with_replacement=cfg.with_replacement, inputs=inp)


def cmd_bench_runtime(cfg, out):
    return eb.runtime_sweep(cfg.n, cfg.d[0], cfg.p, cfg.kernel, cfg.methods, cfg.repeats,
                            seed=cfg.seeds[0], inverse_mode=cfg.inverse_mode)


def cmd_loewner(cfg, out):
    inp = _load_inputs(cfg)
    spec = cfg.synthetic()
    reports = []
    for d in cfg.d:
        recs = eb.loewner_audit(spec, cfg.kernel, d, cfg.seeds, cfg.with_replacement, inputs=inp)
        reports += eb.loewner_reports(spec, cfg.kernel, d, recs)
    return reports


def _sky_cfg(cfg, d, seed):
    return att.SkyformerConfig(d, cfg.kernel, cfg.inverse_mode, cfg.iter_config(), seed,
                               cfg.with_replacement)


def cmd_spectrum(cfg, out):
    inp0 = _load_inputs(cfg)
    d = cfg.d[0]
    reports = []
    for seed in cfg.seeds:
        inp = inp0 or eb.generate_qkv(cfg.synthetic().with_seed(seed))
        outputs = {"Exact": (att.softmax_attention_exact(inp) if cfg.kernel is KernelKind.SOFTMAX
                             else att.kernelized_attention_exact(inp))}
        if "SkyformerLifted" in cfg.methods:
            sky = _sky_cfg(cfg, d, seed)
            outputs["SkyformerLifted"] = (att.approx_softmax_attention(inp, sky)
                                          if cfg.kernel is KernelKind.SOFTMAX
                                          else att.skyformer_attention(inp, sky))
        for method, o in outputs.items():
            for i, val in enumerate(eb.decay_spectrum(o, min(o.shape))):
                reports.append(eb.ApproxReport("spectrum", inp.n, inp.p, d, seed, method,
                                               cfg.kernel.value, f"sv_ratio_{i + 1:04d}", float(val)))
    return reports


def cmd_sensitivity(cfg, out):
    inp0 = _load_inputs(cfg)
    d = cfg.d[0]
    reports = []
    for seed in cfg.seeds:
        inp = inp0 or eb.generate_qkv(cfg.synthetic().with_seed(seed))
        rows = [("Exact", "sm", eb.perturbation_sensitivity(inp, "softmax", seed=seed)),
                ("Exact", "gaussian", eb.perturbation_sensitivity(inp, "kernelized", seed=seed)),
                ("SkyformerLifted", "gaussian",
                 eb.perturbation_sensitivity(inp, "skyformer", seed=seed, cfg=_sky_cfg(
                     replace(cfg, kernel=KernelKind.GAUSSIAN), d, seed)))]
        for method, kernel, r in rows:
            reports.append(eb.ApproxReport("sensitivity", inp.n, inp.p, d, seed, method, kernel,
                                           "tau", r.tau))
            reports.append(eb.ApproxReport("sensitivity", inp.n, inp.p, d, seed, method, kernel,
                                           "ratio_vs_softmax", r.ratio_vs_softmax))
    return reports


def invariant_suite(cfg, out):
    """Run the property checks; return the first failure as ``(name, seed, detail)`` or None."""
    n = min(cfg.n[0], 64)
    p = cfg.p
    for seed in cfg.seeds:
        inp = eb.generate_qkv(eb.SyntheticSpec(n, p, cfg.distribution, cfg.sigma, cfg.decay, seed))
        # factorization identity
        try:
            direct = kernels.kernel_matrix(KernelSpec.softmax(p), inp.q, inp.k)
            rebuilt = kernels.sm_from_gaussian(inp.q, inp.k, p)
            dev = np.max(np.abs(direct - rebuilt)) / np.max(np.abs(direct))
            if not dev < 1e-10:
                return ("factorization-identity", seed, f"max relative deviation {dev:.3g}")
        except kernels.KernelOverflowError as exc:
            return ("factorization-identity", seed, str(exc))
        # full-sampling exactness
        for kind in KernelKind:
            spec = KernelSpec(kind, p)
            full = sketch.SubSample(2 * n, np.arange(2 * n), float(np.sqrt(1 / (2 * n))), False)
            err = sketch.nystrom_error(spec, inp.q, inp.k, sketch.lifted_nystrom(spec, inp.q, inp.k, full))
            if not err <= 1e-6:
                return ("full-sampling-exactness", seed, f"{kind.value}: relative error {err:.3g}")
        # Loewner gap
        for d in cfg.d:
            for r in eb.loewner_audit(eb.SyntheticSpec(n, p, cfg.distribution, cfg.sigma, cfg.decay),
                                      "gaussian", min(d, 2 * n), [seed], workers=1):
                if r.min_eig < -1e-6 * r.cbar_norm:
                    return ("loewner-gap", seed, f"d={d}: min eigenvalue {r.min_eig:.3g}")
        # preconditioner spectrum
        s = sketch.uniform_subsample(2 * n, min(cfg.d[0], 2 * n), False, seeded_rng(seed))
        m = kernels.kernel_matrix(KernelSpec.gaussian(p), np.vstack([inp.q, inp.k])[s.indices])
        lo, hi = sketch.precondition_spectrum_check(m, cfg.gamma)
        if not (lo > 0 and hi <= 1 + 1e-10):
            return ("preconditioner-spectrum", seed, f"eigenvalues in [{lo:.3g}, {hi:.3g}]")
    return None


HANDLERS = {
    "bench-spectral": cmd_bench_spectral,
    "bench-runtime": cmd_bench_runtime,
    "loewner-audit": cmd_loewner,
    "spectrum": cmd_spectrum,
    "sensitivity": cmd_sensitivity,
}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    try:
        if cfg.command == "check-invariants":
            failure = invariant_suite(cfg, out)
            if failure:
                name, seed, detail = failure
                print(f"FAIL {name} seed={seed} n={min(cfg.n[0], 64)} p={cfg.p} d={cfg.d} "
                      f"kernel=gaussian: {detail}", file=err)
                return EXIT_INVARIANT
            print(f"all invariants hold on {len(cfg.seeds)} seed(s)", file=out)
            return EXIT_OK
        reports = HANDLERS[cfg.command](cfg, out)
        _write(cfg, reports, out)
    except (ValueError, ArithmeticError, OSError, matcore.ShapeError, sketch.DivergenceError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
