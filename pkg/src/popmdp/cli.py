"""Command-line front end.

Subcommands: solve-mv, solve-lq, figure1, simulate, engine.  Human-readable
tables go to stdout by default; --json emits a machine report, --csv emits
rows for plotting.  Reports are byte-reproducible given identical inputs and
seed: wall-clock timings are only included when --timings is passed.

Exit codes: 0 success, 2 input error, 3 numeric/domain error, 4 size cap.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from dataclasses import dataclass

import click
import numpy as np

from popmdp import __version__
from popmdp.errors import (
    DomainError,
    InputError,
    PopmdpError,
    ResourceCapError,
)
from popmdp.lq_solver import lq_from_dict, lq_to_dict, solve_lq
from popmdp.market import market_from_dict, market_to_dict
from popmdp.measures import (
    make_measure,
    mean,
    rule_from_dict,
    variance,
)
from popmdp.montecarlo import (
    SimConfig,
    estimate_mv_objective,
    samples_to_csv,
    simulate_general,
    simulate_mv,
)
from popmdp.mv_solver import (
    MVProblem,
    population_backward,
    solution_to_dict,
    solve_mv,
    stationary_gap_series,
)
from popmdp.population_engine import engine_backward, spec_from_dict


def _fmt(value: float) -> str:
    """Floats are printed with 12 significant digits in human output."""
    return f"{value:.12g}"


@dataclass
class RunReport:
    command: str
    inputs: dict
    outputs: dict
    tool_version: str
    timings: dict | None = None

    def as_json(self) -> str:
        doc = {
            "command": self.command,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": self.tool_version,
        }
        if self.timings is not None:
            doc["timings"] = self.timings
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as exc:
            _fail(2, str(exc))
        except (json.JSONDecodeError, OSError, KeyError, TypeError) as exc:
            _fail(2, f"bad input: {exc}")
        except ResourceCapError as exc:
            _fail(4, str(exc))
        except (DomainError, np.linalg.LinAlgError) as exc:
            _fail(3, str(exc))
        except PopmdpError as exc:
            _fail(3, str(exc))

    return wrapper


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_scalar(text: str) -> float:
    """Accept plain floats and fractions like "1/26"."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _report(command: str, inputs: dict, outputs: dict,
            elapsed: float | None) -> RunReport:
    timings = {"wall_seconds": elapsed} if elapsed is not None else None
    return RunReport(command=command, inputs=inputs, outputs=outputs,
                     tool_version=f"popmdp {__version__}", timings=timings)


@click.group()
@click.version_option(version=__version__, prog_name="popmdp")
def main():
    """Solvers for measure-lifted dynamic portfolio and regulator problems."""


@main.command("solve-mv")
@click.option("--model", "model_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="market model JSON")
@click.option("--lambda", "lam", required=True, type=float,
              help="risk weight in Var - 2*lambda*mean")
@click.option("--x0", type=float, default=None, help="point-mass initial wealth")
@click.option("--mu0", "mu0_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="initial wealth law JSON (points/weights)")
@click.option("--method", required=True,
              type=click.Choice(["precommit", "equilibrium", "population"]))
@click.option("--json", "as_json", is_flag=True)
@click.option("--csv", "as_csv", is_flag=True, help="emit per-stage rule rows")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--timings", "with_timings", is_flag=True,
              help="include wall-clock time (breaks byte reproducibility)")
@_guarded
def cmd_solve_mv(model_file, lam, x0, mu0_file, method, as_json, as_csv, out,
                 with_timings):
    """Solve a mean-variance instance and print value and per-stage rules."""
    started = time.perf_counter()
    model_doc = _load_json(model_file)
    model = market_from_dict(model_doc)
    mu0_doc = None
    if mu0_file is not None:
        mu0_doc = _load_json(mu0_file)
        mu0 = make_measure(mu0_doc["points"], mu0_doc["weights"])
        problem = MVProblem.from_market(model, lam, mu0=mu0)
    else:
        if x0 is None:
            raise InputError("give --x0 or --mu0")
        problem = MVProblem.from_market(model, lam, x0=x0)
    solution = solve_mv(problem, method)
    elapsed = time.perf_counter() - started

    outputs: dict = {"solution": solution_to_dict(solution)}
    if solution.measures is not None:
        outputs["measure_summaries"] = [
            {"stage": n, "mean": mean(m), "variance": variance(m),
             "support_size": m.support_size}
            for n, m in enumerate(solution.measures)
        ]
    inputs = {"model": model_to_echo(model_doc, model), "lambda": lam,
              "x0": x0, "mu0": mu0_doc, "method": method}
    report = _report("solve-mv", inputs, outputs,
                     elapsed if with_timings else None)
    if as_json:
        _emit(report.as_json(), out)
        return
    if as_csv:
        _emit(_rules_csv(outputs["solution"]["rules"]), out)
        return
    lines = [f"method: {method}", f"value: {_fmt(solution.value)}"]
    for n, rule in enumerate(solution.rules):
        d = rule.as_dict()
        if d["form"] == "mv":
            dir_txt = ", ".join(_fmt(v) for v in d["direction"])
            lines.append(f"stage {n}: rule (kappa - x) * v, "
                         f"kappa={_fmt(d['kappa'])}, v=[{dir_txt}]")
        elif d["form"] == "constant":
            if d["direction"] is not None:
                dir_txt = ", ".join(_fmt(v) for v in d["direction"])
                lines.append(f"stage {n}: constant action [{dir_txt}]")
            else:
                lines.append(f"stage {n}: constant action {_fmt(d['intercept'])}")
        else:
            lines.append(f"stage {n}: rule {_fmt(d['slope'])}*x "
                         f"+ {_fmt(d['intercept'])}")
    if "measure_summaries" in outputs:
        lines.append("stage laws (mean, variance, support):")
        for row in outputs["measure_summaries"]:
            lines.append(f"  n={row['stage']}: {_fmt(row['mean'])}, "
                         f"{_fmt(row['variance'])}, {row['support_size']}")
    if with_timings:
        lines.append(f"wall seconds: {elapsed:.6f}")
    _emit("\n".join(lines) + "\n", out)


def model_to_echo(doc: dict, model) -> dict:
    """Echo the resolved model (canonical form, not the raw file)."""
    return market_to_dict(model) if "rates" in doc else doc


def _rules_csv(rule_rows: list[dict]) -> str:
    lines = ["stage,form,kappa,slope,intercept,direction"]
    for row in rule_rows:
        direction = ("" if row["direction"] is None
                     else ";".join(_fmt(v) for v in row["direction"]))
        cells = [str(row["stage"]), row["form"]]
        for key in ("kappa", "slope", "intercept"):
            cells.append("" if row[key] is None else _fmt(row[key]))
        cells.append(direction)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@main.command("solve-lq")
@click.option("--model", "model_file", required=True,
              type=click.Path(exists=True, dir_okay=False), help="LQ model JSON")
@click.option("--json", "as_json", is_flag=True)
@click.option("--csv", "as_csv", is_flag=True,
              help="emit per-stage coefficient rows")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--timings", "with_timings", is_flag=True)
@_guarded
def cmd_solve_lq(model_file, as_json, as_csv, out, with_timings):
    """Solve a scalar LQ instance; prints the optimal and equilibrium values."""
    started = time.perf_counter()
    model = lq_from_dict(_load_json(model_file))
    sol = solve_lq(model)
    elapsed = time.perf_counter() - started

    outputs = {
        "solution": {
            "kind": "lq",
            "value": sol.value_opt,
            "beta": sol.beta.tolist(),
            "means": sol.means.tolist(),
            "rules": [dict(stage=n, **r.as_dict()) for n, r in enumerate(sol.rules)],
            "value_equilibrium": sol.value_eq,
            "alpha": None if sol.alpha is None else sol.alpha.tolist(),
            "gamma": None if sol.gamma is None else sol.gamma.tolist(),
        }
    }
    report = _report("solve-lq", {"model": lq_to_dict(model)}, outputs,
                     elapsed if with_timings else None)
    if as_json:
        _emit(report.as_json(), out)
        return
    if as_csv:
        lines = ["n,beta,mean,action"]
        for n in range(model.horizon + 1):
            action = "" if n == model.horizon else _fmt(sol.rules[n].offset)
            lines.append(f"{n},{_fmt(sol.beta[n])},{_fmt(sol.means[n])},{action}")
        _emit("\n".join(lines) + "\n", out)
        return
    lines = [f"value: {_fmt(sol.value_opt)}"]
    if sol.value_eq is not None:
        lines.append(f"equilibrium value: {_fmt(sol.value_eq)}")
    lines.append("beta: " + ", ".join(_fmt(v) for v in sol.beta))
    lines.append("means: " + ", ".join(_fmt(v) for v in sol.means))
    for n, rule in enumerate(sol.rules):
        lines.append(f"stage {n}: constant action {_fmt(rule.offset)}")
    if with_timings:
        lines.append(f"wall seconds: {elapsed:.6f}")
    _emit("\n".join(lines) + "\n", out)


@main.command("figure1")
@click.option("--ell", required=True, type=str,
              help="stationary per-period trade-off, e.g. 1/26 or 0.0384")
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--Nmax", "--nmax", "n_max", required=True, type=int,
              help="largest horizon to tabulate")
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guarded
def cmd_figure1(ell, lam, n_max, as_json, out):
    """Tabulate optimal vs equilibrium values by horizon (CSV by default).

    The gap depends only on the per-period trade-off and the risk weight,
    not on the interest rate, so no rate is taken.
    """
    ell_value = _parse_scalar(ell)
    rows = stationary_gap_series(ell_value, lam, n_max)
    if as_json:
        outputs = {"rows": [
            {"N": n, "value_precommit": vo, "value_equilibrium": ve, "gap": gap}
            for n, vo, ve, gap in rows
        ]}
        report = _report("figure1", {"ell": ell_value, "lambda": lam,
                                     "Nmax": n_max}, outputs, None)
        _emit(report.as_json(), out)
        return
    lines = ["N,value_precommit,value_equilibrium,gap"]
    for n, vo, ve, gap in rows:
        lines.append(f"{n},{_fmt(vo)},{_fmt(ve)},{_fmt(gap)}")
    _emit("\n".join(lines) + "\n", out)


def _policy_rules(doc: dict) -> tuple[dict, list]:
    """Accept either a bare solution dict or a full solve-* JSON report."""
    if "rules" in doc:
        sol = doc
    elif "outputs" in doc and "solution" in doc["outputs"]:
        sol = doc["outputs"]["solution"]
    else:
        raise InputError("policy file has no rules")
    rules = [rule_from_dict(r) for r in sorted(sol["rules"], key=lambda r: r["stage"])]
    return sol, rules


@main.command("simulate")
@click.option("--model", "model_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="market or LQ model JSON")
@click.option("--policy", "policy_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="solution JSON from solve-mv/solve-lq --json")
@click.option("--lambda", "lam", type=float, default=None,
              help="risk weight for the portfolio objective")
@click.option("--x0", type=float, default=None,
              help="point-mass initial wealth (market models)")
@click.option("--mu0", "mu0_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="initial wealth law JSON (market models)")
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--antithetic", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--csv", "as_csv", is_flag=True,
              help="emit raw terminal samples, one per row (market models)")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--timings", "with_timings", is_flag=True)
@_guarded
def cmd_simulate(model_file, policy_file, lam, x0, mu0_file, paths, seed,
                 antithetic, as_json, as_csv, out, with_timings):
    """Simulate a stored policy and compare against its closed-form value."""
    started = time.perf_counter()
    model_doc = _load_json(model_file)
    policy_doc = _load_json(policy_file)
    sol_doc, rules = _policy_rules(policy_doc)
    cfg = SimConfig(n_paths=paths, seed=seed, antithetic=antithetic)
    reference = sol_doc.get("value")

    if "rates" in model_doc:
        if lam is None:
            raise InputError("--lambda is required for market models")
        model = market_from_dict(model_doc)
        if mu0_file is not None:
            mu0_doc = _load_json(mu0_file)
            mu0 = make_measure(mu0_doc["points"], mu0_doc["weights"])
        else:
            mu0 = make_measure([0.0 if x0 is None else x0], [1.0])
        samples = simulate_mv(model, rules, mu0, cfg)
        if as_csv:
            _emit(samples_to_csv(samples), out)
            return
        est = estimate_mv_objective(samples, lam)
        inputs = {"model": market_to_dict(model), "policy": sol_doc,
                  "lambda": lam, "x0": x0, "paths": paths, "seed": seed,
                  "antithetic": antithetic}
    elif "b" in model_doc:
        if as_csv:
            raise InputError("--csv sample export applies to market models only")
        from popmdp.population_engine import lq_spec

        lq_model = lq_from_dict(model_doc)
        est = simulate_general(lq_spec(lq_model), rules, lq_model.mu0, cfg)
        inputs = {"model": lq_to_dict(lq_model), "policy": sol_doc,
                  "paths": paths, "seed": seed, "antithetic": antithetic}
    else:
        raise InputError("model file is neither a market nor an LQ document")
    elapsed = time.perf_counter() - started

    outputs = {"estimate": {"value": est.value, "stderr": est.stderr, "n": est.n},
               "closed_form": reference}
    report = _report("simulate", inputs, outputs,
                     elapsed if with_timings else None)
    if as_json:
        _emit(report.as_json(), out)
        return
    lines = [f"estimate: {_fmt(est.value)} (stderr {_fmt(est.stderr)}, "
             f"n={est.n})"]
    if reference is not None:
        lines.append(f"closed form: {_fmt(reference)}")
        if est.stderr > 0:
            lines.append(f"deviation: {_fmt((est.value - reference) / est.stderr)}"
                         " stderr")
    if with_timings:
        lines.append(f"wall seconds: {elapsed:.6f}")
    _emit("\n".join(lines) + "\n", out)


@main.command("engine")
@click.option("--spec", "spec_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='named spec JSON with "kind": "mean-variance" or "lq"')
@click.option("--perturb", type=int, default=0, show_default=True,
              help="extra perturbed candidate rules per stage")
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guarded
def cmd_engine(spec_file, perturb, as_json, out):
    """Exhaustive backward-forward search over finite rule families.

    Families contain the closed-form optimal generator per stage plus
    --perturb deterministically shifted variants; the search value is then
    cross-checked against the closed form.
    """
    from popmdp.lq_solver import MeanActionRule, lq_backward, lq_rule_generators
    from popmdp.measures import MeasureRule
    from popmdp.mv_solver import population_value

    doc = _load_json(spec_file)
    spec, problem = spec_from_dict(doc)
    offsets = [0.01 * ((k // 2) + 1) * (1 if k % 2 == 0 else -1)
               for k in range(perturb)]
    if doc["kind"] == "mean-variance":
        exact = population_backward(problem)
        families = [
            [gen] + [MeasureRule(gen.stage, gen.kappa_const + off, gen.add_mean,
                                 gen.direction) for off in offsets]
            for gen in exact
        ]
        mu0 = problem.mu0
        closed_form = population_value(problem)
    else:
        back = lq_backward(problem)
        exact_gens = lq_rule_generators(back)
        families = [
            [gen] + [MeanActionRule(gen.stage, gen.coef + off) for off in offsets]
            for gen in exact_gens
        ]
        mu0 = problem.mu0
        closed_form = float(back.beta[0]) * mean(mu0) ** 2
    result = engine_backward(spec, families, mu0)

    outputs = {"value": result.value, "closed_form": closed_form,
               "indices": list(result.indices),
               "values": result.values.tolist(), "caveat": result.caveat}
    report = _report("engine", {"spec": doc, "perturb": perturb}, outputs, None)
    if as_json:
        _emit(report.as_json(), out)
        return
    lines = [
        f"value: {_fmt(result.value)}",
        f"closed form: {_fmt(closed_form)}",
        f"chosen indices: {list(result.indices)}",
        f"note: {result.caveat}",
    ]
    _emit("\n".join(lines) + "\n", out)


if __name__ == "__main__":
    main()
