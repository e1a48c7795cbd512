"""Python bindings for the tmkt library."""

import json

from ._tmkt import (
    GradientModel,
    MixMode,
    TmktError,
    analytic_cov_bm,
    analytic_cov_tsm,
    analytic_mean,
    conditional_lower_bound,
    cov_difference,
    expected_replaced,
    linear_cka,
    random_model,
    run_cli,
    solve_p,
    t_star_histogram,
    t_star_pmf,
)


def cli(*args):
    """Run a tmkt subcommand and return (exit_code, parsed_json_or_None)."""
    code, out, _ = run_cli([str(a) for a in args])
    try:
        return code, json.loads(out)
    except ValueError:
        return code, None
