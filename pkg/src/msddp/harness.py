"""Run instances through the drivers and sweep instance families.

Artifacts:

* trace CSV, header ``iter,lb,ub,gap,cuts,ms``, one row per iteration
* result JSON (status, root decision, objective shifted and unshifted, ...)
* optional cut export, one array of cut records per approximation
* sweep ``summary.csv`` with one row per (parameters, eps) cell

Every file is written to a temporary sibling first and moved into place.
"""
import itertools
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import config
from .algorithms import (SolveResult, Status, StochasticConfig, TraceRow, ddp_deterministic, ddp_stochastic,
                         estimate_policy_cost, nested_decomposition)
from .bounds import BoundParams, BoundReport, evaluate_bounds
from .errors import BadParams, HarnessError, MsddpError, UnsupportedAlgorithm
from .instance_io import InstanceDescription, parse_instance
from .instances import describe
from .model import ScenarioTree, build_tree, recombine
from .oracles import OracleSet, make_analytic_oracles, make_grid_oracles

logger = logging.getLogger(__name__)

ALGORITHMS = ('nbd', 'ddp-det', 'ddp-stoch')
TRACE_COLUMNS = ['iter', 'lb', 'ub', 'gap', 'cuts', 'ms']
SWEEP_FAMILIES = {
    # family: (default algorithm, generator takes eps)
    'lipschitz_chain': ('nbd', True),
    'convex_worstcase': ('ddp-det', True),
    'finite_state': ('ddp-det', False),
}
EXIT_CODES = {
    Status.CONVERGED: 0,
    Status.STOPPED: 0,
    Status.ITERATION_CAP: 2,
    Status.ORACLE_ERROR: 1,
}

PathLike = Union[str, os.PathLike]


def _finite(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def write_atomic(path: PathLike, text: str):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_frame(rows: Sequence[TraceRow]) -> pd.DataFrame:
    return pd.DataFrame([[r.iteration, r.lower, r.upper, r.gap, r.cuts, r.millis] for r in rows],
                        columns=TRACE_COLUMNS)


def load_instance(path: PathLike) -> InstanceDescription:
    try:
        text = Path(path).read_bytes()
    except OSError as e:
        raise HarnessError(f"cannot read instance {path}: {e.strerror}") from None
    return parse_instance(text)


def make_oracles(description: InstanceDescription, tree: ScenarioTree,
                 adversarial: Optional[bool] = None) -> OracleSet:
    """Oracles as the instance's oracle section asks for, with CLI overrides."""
    spec = description.oracle
    adversarial = spec.adversarial if adversarial is None else adversarial
    if spec.analytic:
        return make_analytic_oracles(tree, spec.analytic, spec.resolution, adversarial)
    return make_grid_oracles(tree, spec.resolution, adversarial)


def instance_bound_params(tree: ScenarioTree, eps: float, samples: int = 1) -> BoundParams:
    """Complexity parameters read off a tree: horizon, largest dimension, diameter and sigma."""
    non_root = [n for n in tree if n.parent is not None] or list(tree)
    spaces = [n.data.state_space for n in tree]
    K = None
    if all(s.is_finite for s in spaces):
        K = max(s.cardinality for s in spaces)
    try:
        N = max(recombine(tree).counts)
    except MsddpError:
        N = 1
    return BoundParams(eps=eps, T=max(tree.horizon, 1), d=max(1, max(s.dim for s in spaces)),
                       D=max(max(s.diameter for s in spaces), 1e-12),
                       L=max(n.data.penalty.sigma for n in non_root), K=K, M=samples, N=N)


@dataclass
class RunOutcome:
    exit_code: int
    result: Optional[SolveResult] = None
    document: Optional[dict] = None
    error: Optional[str] = None


def _result_document(description: InstanceDescription, algorithm: str, eps: float,
                     result: SolveResult, estimate=None) -> dict:
    meta = description.meta
    objective = result.objective
    doc = {
        'version': config.INSTANCE_VERSION,
        'instance': meta.name,
        'algorithm': algorithm,
        'status': result.status.value,
        'message': result.message,
        'eps': eps,
        'x': np.asarray(result.x, dtype=float).tolist(),
        'y': np.asarray(result.y, dtype=float).tolist(),
        'objective': _finite(objective),
        'objective_unshifted': _finite(objective - meta.shift),
        'shift': meta.shift,
        'lower_bound': _finite(result.lower_bound),
        'upper_bound': _finite(result.upper_bound),
        'gap': _finite(result.gap),
        'iterations': result.iterations,
        'oracle_calls': result.oracle_calls,
        'sigma_certified': meta.sigma_certified,
    }
    if estimate is not None:
        doc['policy_estimate'] = {'mean': estimate.mean, 'stderr': estimate.stderr,
                                  'samples': estimate.samples, 'certified': False}
    return doc


def run(description: Union[InstanceDescription, PathLike], algorithm: str = 'nbd', eps: float = 1e-3, *,
        samples: int = 1, seed: Optional[int] = None, max_iters: Optional[int] = None,
        trace: Optional[PathLike] = None, result: Optional[PathLike] = None, cuts: Optional[PathLike] = None,
        adversarial: Optional[bool] = None, eps_per_stage: Optional[float] = None,
        threads: Optional[int] = None, estimate_samples: int = 100) -> RunOutcome:
    """Solve one instance and write its artifacts.

    ``eps_per_stage`` replaces ``eps`` by T times its value. ``seed`` defaults
    to the sampling seed of the instance's oracle section. Exit codes are 0
    on Converged or Stopped, 2 on IterationCap and 1 on any error.
    """
    try:
        if not isinstance(description, InstanceDescription):
            description = load_instance(description)
        if algorithm not in ALGORITHMS:
            raise UnsupportedAlgorithm(f"unknown algorithm {algorithm!r}; choose from {list(ALGORITHMS)}")
        tree = build_tree(description)
        if eps_per_stage is not None:
            eps = tree.horizon * eps_per_stage
        threads = threads if threads is not None else config.THREADS
        rtree = recombine(tree) if algorithm != 'nbd' else None
        oracles = make_oracles(description, tree, adversarial)
        seed = description.oracle.seed if seed is None else seed
        trace_rows: List[TraceRow] = []

        logger.info(f"Running {algorithm} on {description.meta.name!r} with eps={eps}")
        if algorithm == 'nbd':
            solved = nested_decomposition(tree, oracles, eps, max_iters, trace_rows.append, threads)
        elif algorithm == 'ddp-det':
            solved = ddp_deterministic(rtree, oracles, eps, max_iters, trace_rows.append, threads)
        else:
            cap = config.ITERATION_CAP if max_iters is None else max_iters
            cfg = StochasticConfig(samples=samples, seed=seed, max_iters=cap)
            solved = ddp_stochastic(rtree, oracles, cfg, trace_rows.append, threads)

        estimate = None
        if algorithm == 'ddp-stoch' and estimate_samples > 0 and solved.status is not Status.ORACLE_ERROR:
            estimate = estimate_policy_cost(rtree, oracles, solved, estimate_samples, seed)
        document = _result_document(description, algorithm, eps, solved, estimate)

        if trace is not None:
            write_atomic(trace, trace_frame(trace_rows).to_csv(index=False))
        if result is not None:
            write_atomic(result, json.dumps(document, indent=2) + "\n")
        if cuts is not None:
            records = {str(key): under.to_records() for key, under in solved.approximations.items()}
            write_atomic(cuts, json.dumps(records, indent=2) + "\n")
        return RunOutcome(EXIT_CODES[solved.status], solved, document, solved.message or None)
    except MsddpError as e:
        logger.error(f"Run failed: {type(e).__name__}: {e}")
        return RunOutcome(1, error=f"{type(e).__name__}: {e}")


def run_bounds(description: Union[InstanceDescription, PathLike], eps: float, samples: int = 1,
               result: Optional[PathLike] = None) -> BoundReport:
    """Bound report for the parameters of an instance."""
    if not isinstance(description, InstanceDescription):
        description = load_instance(description)
    report = evaluate_bounds(instance_bound_params(build_tree(description), eps, samples))
    if result is not None:
        write_atomic(result, json.dumps(report.to_record(), indent=2) + "\n")
    return report


# Sweeps

def expand_grid(grid: Union[Mapping[str, Sequence], Sequence[Mapping], None]) -> List[Dict]:
    """Cells of a parameter grid: the product of a mapping of lists, or an explicit list."""
    if not grid:
        return []
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    return [dict(cell) for cell in grid]


def _bound_columns(family: str, params: Dict, eps: float) -> Dict:
    columns = {'bound_upper': np.nan, 'bound_upper_log10': np.nan,
               'bound_lower': np.nan, 'bound_lower_log10': np.nan}
    if family == 'finite_state':
        columns['bound_upper'] = float(params['T'] * params['K'])
        columns['bound_upper_log10'] = math.log10(columns['bound_upper'])
        return columns
    report = evaluate_bounds(BoundParams(eps=eps, T=params['T'], d=params['d'], D=params['D'], L=params['L']))
    lower = report.lipschitz_lower if family == 'lipschitz_chain' else report.convex_lower
    for name, bound in (('upper', report.absolute_gap), ('lower', lower)):
        if bound is not None:
            columns[f'bound_{name}'] = np.nan if bound.value is None else bound.value
            columns[f'bound_{name}_log10'] = bound.log10
    return columns


def _sweep_cell(index: int, family: str, params: Dict, eps: float, algorithm: str,
                max_iters: Optional[int], output_dir: Path) -> Dict:
    row = {'cell': index, 'family': family, **params, 'eps': eps, 'algorithm': algorithm}
    trace_path = output_dir / f"{family}_{index:04d}.csv"
    try:
        generator_params = dict(params, eps=eps) if SWEEP_FAMILIES[family][1] else dict(params)
        description = describe(family, **generator_params)
        outcome = run(description, algorithm, eps, max_iters=max_iters, trace=trace_path, threads=1,
                      estimate_samples=0)
        row.update(_bound_columns(family, params, eps))
    except MsddpError as e:
        outcome = RunOutcome(1, error=f"{type(e).__name__}: {e}")
    if outcome.result is None:
        logger.warning(f"Sweep cell {index} failed: {outcome.error}")
        row.update(status='Error', iterations=np.nan, error=outcome.error, trace='')
        return row
    solved = outcome.result
    row.update(status=solved.status.value, iterations=solved.iterations, lower_bound=solved.lower_bound,
               upper_bound=solved.upper_bound, gap=solved.gap, oracle_calls=solved.oracle_calls,
               error=solved.message, trace=trace_path.name)
    row['ratio_upper'] = solved.iterations / row['bound_upper'] if row['bound_upper'] > 0 else np.nan
    row['ratio_lower'] = solved.iterations / row['bound_lower'] if row['bound_lower'] > 0 else np.nan
    return row


def experiment_sweep(family: str, grid, eps_list: Sequence[float], output_dir: PathLike,
                     algorithm: Optional[str] = None, max_iters: Optional[int] = None,
                     threads: Optional[int] = None, progress: bool = True) -> pd.DataFrame:
    """Run every (cell, eps) combination of a family and write ``summary.csv``.

    Failed cells become rows with status ``Error``; the sweep continues.
    """
    if family not in SWEEP_FAMILIES:
        raise BadParams(f"unknown sweep family {family!r}; choose from {sorted(SWEEP_FAMILIES)}")
    algorithm = algorithm or SWEEP_FAMILIES[family][0]
    if algorithm not in ALGORITHMS:
        raise UnsupportedAlgorithm(f"unknown algorithm {algorithm!r}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(params, eps) for params in expand_grid(grid) for eps in eps_list]
    logger.info(f"Sweeping {family} over {len(jobs)} cells with {algorithm}")

    rows = []
    workers = max(1, threads if threads is not None else config.THREADS)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_cell, i, family, params, eps, algorithm, max_iters, output_dir)
                   for i, (params, eps) in enumerate(jobs)]
        for future in tqdm(as_completed(futures), total=len(futures), desc=family, disable=not progress):
            rows.append(future.result())

    summary = pd.DataFrame(rows)
    if not summary.empty:
        summary = summary.sort_values('cell').reset_index(drop=True)
    write_atomic(output_dir / 'summary.csv', summary.to_csv(index=False))
    failed = int((summary['status'] == 'Error').sum()) if not summary.empty else 0
    logger.info(f"Sweep finished: {len(summary)} cells, {failed} failed")
    return summary
