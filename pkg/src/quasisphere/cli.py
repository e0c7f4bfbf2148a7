"""Command-line front end.

Exit codes: 0 pass, 1 certificate failure, 2 input error, 3 internal error
or non-convergence. Reports are JSON with sorted keys and floats written
with 17 significant digits, so identical configs give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".eE"):
        s += ".0"
    return s


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17 significant digits."""

    def enc(o) -> str:
        if isinstance(o, dict):
            items = sorted((str(k), v) for k, v in o.items())
            return "{" + ", ".join(json.dumps(k) + ": " + enc(v) for k, v in items) + "}"
        if isinstance(o, (list, tuple)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        if isinstance(o, np.ndarray):
            return enc(o.tolist())
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _fmt_float(float(o))
        if o is None:
            return "null"
        if hasattr(o, "to_json"):
            return enc(o.to_json())
        return json.dumps(str(o))

    return enc(obj) + "\n"


def _emit(report: dict, out: str | None, name: str) -> None:
    text = canonical_json(report)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    sys.stdout.write(text)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        from .finite_metric import InputError

        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        from .finite_metric import InputError

        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _set_threads(n: int | None) -> None:
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass


# ---------------------------------------------------------------------------
# subcommands


def cmd_snowsphere(args) -> int:
    from .constructions import SNOWSPHERE_MAX_STAGE, snowsphere
    from .simplicial import qc_certificate

    c = snowsphere(args.stage)
    qc = qc_certificate(c)
    report = {
        "stage": args.stage,
        "max_stage": SNOWSPHERE_MAX_STAGE,
        "vertices": c.n_vertices,
        "triangles": c.n_triangles,
        "squares": c.n_triangles // 2,
        "euler_characteristic": c.euler_characteristic(),
        "qc": {"M1": qc.M1, "M2": qc.M2, "M3": qc.M3},
    }
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"snowsphere_{args.stage}.json").write_text(canonical_json(c.to_json()))
        (d / f"snowsphere_{args.stage}.obj").write_text(c.to_obj())
    _emit(report, None, "")
    return EXIT_PASS


def _load_complex(path: str):
    from .simplicial import MetricComplex

    return MetricComplex.from_json(_load_json(path))


def cmd_approximate(args) -> int:
    from .finite_metric import FiniteMetric
    from .pipeline import PipelineInput, run_pipeline, self_target, snowsphere_target

    density = None
    if args.snowsphere is not None:
        base, target_stage = args.snowsphere
        st = snowsphere_target(base, target_stage, m=args.mesh_level)
        Z, target, density = st.Z, st.target, st.density
    else:
        if not args.base:
            from .finite_metric import InputError

            raise InputError("need --base or --snowsphere")
        Z = _load_complex(args.base)
        target = FiniteMetric.from_json(_load_json(args.target)) if args.target else self_target(Z, args.mesh_level)
    alpha = "auto" if args.alpha == "auto" else float(args.alpha)
    inp = PipelineInput(
        Z,
        target,
        alpha=alpha,
        mesh_level=args.mesh_level,
        sample=args.sample,
        distortion=args.distortion,
        extra_density=density,
        axioms=not args.no_axioms,
        seed=args.seed,
    )
    out = run_pipeline(inp)
    report = out.report()
    report["eps"] = out.certs["eps_iso"].eps
    # wall-clock times would break byte-identical reports
    timings = report.pop("timings")
    print("timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in timings.items()), file=sys.stderr)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "Y.json").write_text(canonical_json(out.Y.to_json()))
        (d / "Y.obj").write_text(out.Y.to_obj())
        (d / "d_tilde.json").write_text(canonical_json(out.d_tilde.to_json()))
    _emit(report, args.out, "certificates.json")
    return EXIT_PASS if out.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    import math as _m

    from .approximation import Approximation, certified_L, check_axioms, skeleton_approximation
    from .simplicial import mesh_graph, qc_certificate

    c = _load_complex(args.complex)
    mesh = mesh_graph(c, args.mesh_level)
    if args.approximation:
        a = Approximation.from_json(_load_json(args.approximation), host=mesh)
    else:
        a = skeleton_approximation(c, mesh=mesh)
    K = args.K if args.K is not None else int(_m.ceil(qc_certificate(c).M))
    L = args.L if args.L is not None else certified_L(a, K, star_K=args.star_K)
    rep = check_axioms(a, K, L, tol=args.tol, star_K=args.star_K, seed=args.seed)
    _emit(rep.to_json(), args.out, "axioms.json")
    return EXIT_PASS if rep.ok else EXIT_FAIL


def cmd_modulus(args) -> int:
    from .finite_metric import InputError
    from .modulus import MODULUS_FIXTURES, CurveFamily, annulus_condition, fixture_family, mod2
    from .simplicial import mesh_graph

    if args.fixture:
        fam = fixture_family(args.fixture, args.mesh_level)
        res = mod2(fam, tol=args.tol)
        expected, rel = MODULUS_FIXTURES[args.fixture]
        ok = abs(res.value - expected) <= rel * expected
        report = {"fixture": args.fixture, "expected": expected, "rel_tol": rel, "ok": ok, **res.to_json()}
        _emit(report, args.out, "modulus.json")
        return EXIT_PASS if ok else EXIT_FAIL
    if not args.complex:
        raise InputError("need --fixture or --complex")
    c = _load_complex(args.complex)
    if args.annulus_L is not None:
        rep = annulus_condition(c, L=args.annulus_L, m=args.mesh_level, tol=args.tol)
        report = rep.to_json()
        ok = args.bound is None or rep.max_modulus <= args.bound
        report["ok"] = ok
        _emit(report, args.out, "annulus.json")
        return EXIT_PASS if ok else EXIT_FAIL
    if not args.family:
        raise InputError("need --family or --annulus-L with --complex")
    fam_json = _load_json(args.family)
    mesh = mesh_graph(c, args.mesh_level, complete=False)
    G = None if fam_json.get("G", "all") == "all" else fam_json["G"]
    res = mod2(CurveFamily(mesh, fam_json["E"], fam_json["F"], G), tol=args.tol)
    report = res.to_json()
    if args.dump_rho:
        report["rho"] = res.rho.rho
    ok = report["certificate"]["min_length"] >= 1.0 - args.tol
    report["ok"] = ok
    _emit(report, args.out, "modulus.json")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_distortion(args) -> int:
    from .finite_metric import FiniteMetric, bilip_constant, qs_profile

    src = FiniteMetric.from_json(_load_json(args.src))
    dst = FiniteMetric.from_json(_load_json(args.dst)) if args.dst else src
    f = np.arange(src.n) if not args.map else np.asarray(_load_json(args.map), dtype=int)
    prof = qs_profile(f, src, dst, budget=args.budget, seed=args.seed)
    report = {"profile": prof.to_json(), "bilip": bilip_constant(f, src, dst)}
    ok = True
    if args.eta_linear is not None:
        t, H = prof.t, prof.H
        ok = bool(np.all(H <= args.eta_linear * t * (1.0 + args.tol) + 1e-300))
        report["eta_linear"] = args.eta_linear
    report["ok"] = ok
    _emit(report, args.out, "distortion.json")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_glue(args) -> int:
    from .finite_metric import FiniteMetric
    from .glue import glue, verify_glue

    base = FiniteMetric.from_json(_load_json(args.base))
    from .finite_metric import InputError

    sub = _load_json(args.subset)
    if not isinstance(sub, dict) or "S" not in sub or "d_S" not in sub:
        raise InputError("subset JSON needs keys S and d_S")
    g = glue(base, sub["S"], sub["d_S"], tol=args.tol)
    rep = verify_glue(g, tol=max(args.tol, 1e-9))
    report = {"report": rep.to_json(), "result": g.result.to_json()}
    _emit(report, args.out, "glued.json")
    return EXIT_PASS if rep.ok else EXIT_FAIL


def cmd_export_obj(args) -> int:
    c = _load_complex(args.complex)
    text = c.to_obj()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh-level", type=int, default=4, help="subdivisions per edge of the Steiner mesh")
    p.add_argument("--alpha", default="auto", help="scale factor for target distances, or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--out", default=None, help="output directory (file for export-obj)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasisphere", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("snowsphere", help="build a snowsphere stage and write JSON + OBJ")
    p.add_argument("stage", type=int)
    _common(p)
    p.set_defaults(func=cmd_snowsphere)

    p = sub.add_parser("approximate", help="run the gluing pipeline and certificates")
    p.add_argument("--base", help="complex JSON of the base surface")
    p.add_argument("--target", help="metric JSON of target distances on the base vertices")
    p.add_argument("--snowsphere", type=int, nargs=2, metavar=("BASE", "TARGET"), help="built-in snowsphere input")
    p.add_argument("--sample", choices=["vertices", "mesh"], default="vertices")
    p.add_argument("--distortion", choices=["bilip", "qs", "both", "none"], default="bilip")
    p.add_argument("--no-axioms", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_approximate)

    p = sub.add_parser("verify", help="check approximation axioms")
    p.add_argument("--complex", required=True)
    p.add_argument("--approximation", help="approximation JSON on the complex's mesh; default skeleton")
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--star-K", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_verify, tol=1e-9)

    p = sub.add_parser("modulus", help="discrete 2-modulus of a curve family")
    p.add_argument("--fixture", choices=["annulus", "rectangle", "square"])
    p.add_argument("--complex")
    p.add_argument("--family", help='family JSON {"E": [...], "F": [...], "G": [...] | "all"}')
    p.add_argument("--annulus-L", type=float, default=None)
    p.add_argument("--bound", type=float, default=None, help="fail if the annulus maximum exceeds this")
    p.add_argument("--dump-rho", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_modulus, mesh_level=16)

    p = sub.add_parser("distortion", help="quasisymmetric profile and bi-Lipschitz constant of a point map")
    p.add_argument("--src", required=True)
    p.add_argument("--dst")
    p.add_argument("--map", help="JSON list: image index of each source point; default identity")
    p.add_argument("--budget", type=int, default=200_000)
    p.add_argument("--eta-linear", type=float, default=None, help="fail unless H(t) <= C t (1 + tol)")
    _common(p)
    p.set_defaults(func=cmd_distortion)

    p = sub.add_parser("glue", help="glue a metric on a subset into a base metric")
    p.add_argument("--base", required=True)
    p.add_argument("--subset", required=True, help='JSON {"S": [...], "d_S": [[...]]}')
    _common(p)
    p.set_defaults(func=cmd_glue, tol=1e-12)

    p = sub.add_parser("export-obj", help="write a complex as Wavefront OBJ")
    p.add_argument("complex")
    _common(p)
    p.set_defaults(func=cmd_export_obj)
    return parser


def main(argv=None) -> int:
    from .finite_metric import InputError
    from .modulus import NonConvergenceError

    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        print(f"no convergence: {exc} (bounds {exc.lower}, {exc.upper})", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
