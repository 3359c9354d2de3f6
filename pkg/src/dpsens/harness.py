"""Empirical cross-examination of the checker's privacy claim.

The differential-privacy guarantee says: for adjacent inputs and any set
of outcomes S, Pr[left run lands in S] ≤ e^ε · Pr[right run lands in S]
(+ δ).  The harness attacks that inequality head-on:

  1. build a canonical adjacent input pair (one row added to or removed
     from the sensitive bag, or one scalar nudged by its declared bound),
  2. run the program many times on each side with independent noise,
  3. project the final stores onto the observed variables, pool both
     sides' samples into a shared equal-width binning, and
  4. report the worst observed log-probability ratio across bins.

A program whose true ε exceeds the claimed one by a visible margin (a
missing noise statement, a miscalibrated width) shows up as a bin whose
counts differ by more than e^(claim + slack).  The estimate is a *lower*
bound witness, not a certificate: passing the test never proves the
claim, it only fails to refute it.

Failed runs (divergence, crashes) are kept as a distinguished ⊥ outcome
— a program that crashes on one neighbor but not the other leaks exactly
like any other observable difference.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .interpreter import Crashed, Diverged, Final, RunConfig, exec_cmd
from .syntax import Cmd, ExtInvoke, Hinted, If, Laplace, ParsedProgram, Seq, While, param_cmd
from .values import (
    BOOL,
    FLOAT,
    INT,
    BagShape,
    ExtReal,
    ProgramState,
    Shape,
    VectorShape,
    default_value,
)

__all__ = [
    "NeighborSpec",
    "EpsilonEstimate",
    "generate_neighbors",
    "laplace_targets",
    "estimate_epsilon",
    "run_neighbor_test",
    "spec_for_program",
    "violates",
]

_BOTTOM = "⊥"


# ============================================================
# Adjacent-input generation
# ============================================================


@dataclass(frozen=True)
class NeighborSpec:
    """How to fabricate one adjacent input pair.

    `target` is the variable the two sides disagree on.  Bags get one row
    added (`op="add-row"`) or removed (`op="remove-row"`), the canonical
    distance-1 pair; numeric scalars get nudged by `distance` (the
    target's declared bound); a vector gets one slot nudged by it.
    `size`, `scale` and `row_len` shape the randomly drawn base value.
    """

    target: str
    decls: Mapping[str, Shape]
    distance: float = 1.0
    size: int = 5
    scale: float = 1.0
    op: str = "add-row"
    row_len: int = 3

    def __post_init__(self):
        if self.target not in self.decls:
            raise ValueError(f"unknown neighbor target {self.target!r}")
        if self.op not in ("add-row", "remove-row"):
            raise ValueError(f"unknown neighbor op {self.op!r}")
        if self.size < 1:
            raise ValueError("base size must be at least 1")


def _sample_value(rng: np.random.Generator, shape: Shape, scale: float, row_len: int):
    if shape == INT:
        hi = max(1, int(scale))
        return int(rng.integers(-hi, hi + 1))
    if shape == FLOAT:
        return float(rng.uniform(-scale, scale))
    if shape == BOOL:
        return bool(rng.integers(0, 2))
    if isinstance(shape, VectorShape):
        return tuple(_sample_value(rng, shape.elem, scale, row_len) for _ in range(row_len))
    if isinstance(shape, BagShape):
        return tuple(_sample_value(rng, shape.elem, scale, row_len) for _ in range(row_len))
    raise ValueError(f"cannot sample a value of shape {shape}")


def generate_neighbors(
    spec: NeighborSpec, seed: int = 0
) -> tuple[ProgramState, ProgramState]:
    """Two initial stores differing only at `spec.target`, by exactly one
    bag row or one `spec.distance` nudge."""
    rng = np.random.default_rng([seed, 2])
    shape = spec.decls[spec.target]

    if isinstance(shape, BagShape):
        rows = tuple(
            _sample_value(rng, shape.elem, spec.scale, spec.row_len)
            for _ in range(spec.size)
        )
        extra = _sample_value(rng, shape.elem, spec.scale, spec.row_len)
        if spec.op == "add-row":
            left_v, right_v = rows, rows + (extra,)
        else:
            left_v, right_v = rows, rows[:-1]
    elif shape == FLOAT:
        base = float(rng.uniform(-spec.scale, spec.scale))
        left_v, right_v = base, base + spec.distance
    elif shape == INT:
        base = int(rng.integers(-max(1, int(spec.scale)), max(1, int(spec.scale)) + 1))
        left_v, right_v = base, base + max(1, round(spec.distance))
    elif isinstance(shape, VectorShape) and shape.elem == FLOAT:
        base = tuple(
            float(rng.uniform(-spec.scale, spec.scale)) for _ in range(spec.size)
        )
        bumped = (base[0] + spec.distance,) + base[1:]
        left_v, right_v = base, bumped
    else:
        raise ValueError(f"cannot build a neighbor pair for shape {shape}")

    left = ProgramState.initial(spec.decls, {spec.target: left_v})
    right = ProgramState.initial(spec.decls, {spec.target: right_v})
    return left, right


def spec_for_program(
    program: ParsedProgram,
    *,
    target: Optional[str] = None,
    size: int = 5,
    scale: float = 1.0,
    op: str = "add-row",
    row_len: int = 3,
) -> NeighborSpec:
    """Derive the neighbor spec from the program's declarations: the
    (unique, unless named) positively-annotated variable is the input the
    adjacency regime varies."""
    if target is None:
        marked = [x for x, s in program.sensitivities.items() if s > ExtReal.of(0)]
        if not marked:
            raise ValueError(
                "no declaration carries a positive sensitivity; "
                "name the input to vary with target=..."
            )
        if len(marked) > 1:
            raise ValueError(
                f"several declarations carry positive sensitivity ({', '.join(marked)}); "
                "name the input to vary with target=..."
            )
        target = marked[0]
    s = program.sensitivities.get(target, ExtReal.of(0))
    distance = 1.0 if s.is_inf else (float(s.frac) if s > ExtReal.of(0) else 1.0)
    return NeighborSpec(
        target=target,
        decls=program.decls,
        distance=distance,
        size=size,
        scale=scale,
        op=op,
        row_len=row_len,
    )


# ============================================================
# Observation collection
# ============================================================


def laplace_targets(c: Cmd) -> tuple[str, ...]:
    """Noise-assigned variables in first-occurrence order — the natural
    things to observe, since they are what the program releases."""
    out: list[str] = []
    seen: set[str] = set()

    def walk(node: Cmd) -> None:
        if isinstance(node, Seq):
            walk(node.first)
            walk(node.second)
        elif isinstance(node, Laplace):
            if node.target not in seen:
                seen.add(node.target)
                out.append(node.target)
        elif isinstance(node, If):
            walk(node.then_branch)
            walk(node.else_branch)
        elif isinstance(node, While):
            walk(node.body)
        elif isinstance(node, Hinted):
            walk(node.body)
        elif isinstance(node, ExtInvoke):
            for p in node.params:
                cp = param_cmd(p)
                if cp is not None:
                    walk(cp)

    walk(c)
    return tuple(out)


def _collect(
    cmd: Cmd,
    state: ProgramState,
    project: Sequence[str],
    trials: int,
    seed_key: list,
    fuel: int,
) -> tuple[list, int]:
    """Run `trials` executions continuing one generator, projecting each
    final store onto `project`.  Returns (samples, failure count); failed
    runs appear as the ⊥ sentinel."""
    rng = np.random.default_rng(seed_key)
    cfg = RunConfig(seed=0, fuel=fuel)
    samples: list = []
    failures = 0
    for _ in range(trials):
        outcome = exec_cmd(state, cmd, cfg, rng=rng)
        if isinstance(outcome, Final):
            samples.append(tuple(outcome.state.store[x] for x in project))
        else:
            samples.append(_BOTTOM)
            failures += 1
    return samples, failures


# ============================================================
# Epsilon estimation
# ============================================================


@dataclass(frozen=True)
class EpsilonEstimate:
    """Worst observed log-ratio between the two sides' outcome counts."""

    epsilon_hat: float
    trials: int
    buckets: int
    project: tuple[str, ...]
    support: int
    failed: tuple[int, int]
    worst: Optional[dict] = field(default=None)

    def to_json(self) -> dict:
        return {
            "epsilon_hat": "inf" if math.isinf(self.epsilon_hat) else self.epsilon_hat,
            "trials_per_side": self.trials,
            "buckets": self.buckets,
            "project": list(self.project),
            "supported_events": self.support,
            "failed_runs": list(self.failed),
            "worst_event": self.worst,
        }


def _bin_component(v, lo: float, width: float, buckets: int):
    if isinstance(v, bool):
        return int(v)
    f = float(v)
    if not math.isfinite(f):
        return "nan" if math.isnan(f) else ("+inf" if f > 0 else "-inf")
    if width <= 0.0:
        return 0
    idx = int((f - lo) / width)
    return min(max(idx, 0), buckets - 1)


def _bin_samples(
    left: list, right: list, arity: int, buckets: int
) -> tuple[Counter, Counter]:
    """Shared equal-width binning per projected coordinate, ranges pooled
    over both sides so the two histograms are comparable."""
    ranges: list[tuple[float, float]] = []
    for k in range(arity):
        finite = [
            float(s[k])
            for s in left + right
            if s is not _BOTTOM and math.isfinite(float(s[k]))
        ]
        if finite:
            lo, hi = min(finite), max(finite)
        else:
            lo, hi = 0.0, 0.0
        ranges.append((lo, (hi - lo) / buckets))

    def key(sample):
        if sample is _BOTTOM:
            return _BOTTOM
        return tuple(
            _bin_component(sample[k], ranges[k][0], ranges[k][1], buckets)
            for k in range(arity)
        )

    return Counter(map(key, left)), Counter(map(key, right))


# Each bin's log-ratio is shrunk toward zero by this many standard errors
# (delta method: Var[ln(cl/cr)] ≈ 1/cl + 1/cr).  Bins with thousands of
# hits are barely touched; bins hovering at the support threshold — whose
# raw ratio is mostly Poisson noise — stop inflating the maximum.
_RATIO_Z = 2.0

# An event is unbounded evidence only when one side never produces it and
# the other produces it at least this often: at any ratio remotely near a
# plausible claim, 0-of-100 is a e^-30-grade fluke, while 0-of-21 would
# fire spuriously about once per thousand honest runs.
_INF_EVIDENCE = 100


def estimate_epsilon(
    cmd: Cmd,
    left: ProgramState,
    right: ProgramState,
    *,
    project: Sequence[str],
    trials: int = 100_000,
    buckets: int = 40,
    seed: int = 0,
    fuel: int = 10**6,
    threshold: int = 20,
) -> EpsilonEstimate:
    """Estimate the realized ε of `cmd` across the given adjacent pair.

    Only events both sides support with more than `threshold` hits
    contribute a finite ratio (shrunk by `_RATIO_Z` standard errors so
    threshold-grade bins don't inflate the maximum); an event one side
    hits at least `_INF_EVIDENCE` times while the other never does is
    unbounded evidence and reports ∞.  Sparse disagreements in between
    are noise and are ignored.
    """
    project = tuple(project)
    if not project:
        raise ValueError("nothing to observe: the projection is empty")
    for x in project:
        sh = left.decls.get(x)
        if sh is None:
            raise ValueError(f"cannot observe undeclared variable {x!r}")
        if sh not in (INT, FLOAT, BOOL):
            raise ValueError(f"can only observe scalar variables, and {x} : {sh}")

    left_samples, left_failed = _collect(cmd, left, project, trials, [seed, 0], fuel)
    right_samples, right_failed = _collect(cmd, right, project, trials, [seed, 1], fuel)
    counts_l, counts_r = _bin_samples(left_samples, right_samples, len(project), buckets)

    best = 0.0
    support = 0
    worst: Optional[dict] = None
    for event in counts_l.keys() | counts_r.keys():
        cl, cr = counts_l.get(event, 0), counts_r.get(event, 0)
        if cl > threshold and cr > threshold:
            support += 1
            ratio = abs(math.log(cl / cr)) - _RATIO_Z * math.sqrt(1 / cl + 1 / cr)
            ratio = max(0.0, ratio)
            if ratio > best:
                best = ratio
                worst = {"event": _event_json(event), "left": cl, "right": cr}
        elif (cl >= _INF_EVIDENCE and cr == 0) or (cr >= _INF_EVIDENCE and cl == 0):
            support += 1
            best = math.inf
            worst = {"event": _event_json(event), "left": cl, "right": cr}
    return EpsilonEstimate(
        epsilon_hat=best,
        trials=trials,
        buckets=buckets,
        project=project,
        support=support,
        failed=(left_failed, right_failed),
        worst=worst,
    )


def _event_json(event):
    if event is _BOTTOM:
        return "⊥"
    return list(event)


def violates(estimate, claimed_epsilon: float, slack: float = 0.15) -> bool:
    """Decide whether a measured lower bound contradicts the claimed budget.

    A violation is declared when the estimate exceeds the claim by more
    than ``slack``; the slack absorbs the sampling noise left after the
    estimator's own shrinkage.  Accepts an `EpsilonEstimate` or a bare
    float.
    """
    hat = estimate.epsilon_hat if isinstance(estimate, EpsilonEstimate) else float(estimate)
    return hat > claimed_epsilon + slack


# ============================================================
# End-to-end convenience
# ============================================================


def run_neighbor_test(
    source: str,
    *,
    target: Optional[str] = None,
    project: Optional[Sequence[str]] = None,
    trials: int = 100_000,
    buckets: int = 40,
    seed: int = 0,
    fuel: int = 10**6,
    size: int = 5,
    scale: float = 1.0,
    op: str = "add-row",
    row_len: int = 3,
    threshold: int = 20,
):
    """Check the program, fabricate an adjacent pair, and estimate the
    realized ε.  Returns (typing report, estimate).  Raises `CheckError`
    if the program does not type, `ValueError` if no observation or
    neighbor target can be derived."""
    from .checker import check_program

    report = check_program(source)
    spec = spec_for_program(
        report.program, target=target, size=size, scale=scale, op=op, row_len=row_len
    )
    left, right = generate_neighbors(spec, seed)
    proj = tuple(project) if project else laplace_targets(report.expanded)
    if not proj:
        raise ValueError(
            "the program never draws noise; name the variables to observe "
            "with project=..."
        )
    estimate = estimate_epsilon(
        report.expanded,
        left,
        right,
        project=proj,
        trials=trials,
        buckets=buckets,
        seed=seed,
        fuel=fuel,
        threshold=threshold,
    )
    return report, estimate
