"""Stage timings for the group lifecycle, emitted as ``stage,m,n,median_ns`` CSV."""

import csv
import io
import statistics
import time
from dataclasses import dataclass

from .ffield import M61, PrimeField
from .gkm import GroupState
from .ortholin import gen_orthogonal_system
from .wire import encode_frame, rekey_to_frame

STAGES = (
    "Orthogonalization",
    "Key Refreshment",
    "Generator Coder",
    "Client's setup",
    "Bcast",
    "Client removal + refresh",
)
CSV_HEADER = ("stage", "m", "n", "median_ns")


@dataclass(frozen=True)
class BenchRow:
    stage: str
    m: int
    n: int
    median_ns: int


def _median_ns(fn, reps):
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples))


def make_state(m: int, n: int, rng, field=None) -> GroupState:
    """A full group of n members over a fresh m-dimensional system."""
    if n > m:
        raise ValueError(f"users {n} exceed dimension {m}")
    field = field if field is not None else PrimeField(M61, strict=False)
    system = gen_orthogonal_system(field, m, n, rng)
    scalars = [field.rand_nonzero(rng) for _ in range(n)]
    return GroupState(system, scalars, rng, members=[f"m{i}" for i in range(n)])


def time_setup(state: GroupState, reps: int) -> int:
    """Median join time; each join follows an untimed leave of the same member."""
    members = sorted(state.members)
    samples = []
    for i in range(reps):
        who = members[i % len(members)]
        state.leave(who)
        t0 = time.perf_counter_ns()
        state.join(who)
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples))


def time_removal(state: GroupState, reps: int) -> int:
    """Median incremental leave; the member rejoins untimed."""
    members = sorted(state.members)
    samples = []
    for i in range(reps):
        who = members[i % len(members)]
        t0 = time.perf_counter_ns()
        state.leave(who)
        samples.append(time.perf_counter_ns() - t0)
        state.join(who)
    return int(statistics.median(samples))


def time_refresh(state: GroupState, reps: int) -> int:
    return _median_ns(state.rotate_all, reps)


def bench_pair(m: int, n: int, reps: int, rng, field=None, stages=STAGES, ortho_reps=None) -> list:
    """Time each requested stage for one (m, n) pair.

    Key Refreshment redraws every scalar and rebuilds the aggregate, O(nm).
    Generator Coder is c = s*u alone. Removal is the incremental leave.
    """
    if n > m:
        raise ValueError(f"users {n} exceed dimension {m}")
    field = field if field is not None else PrimeField(M61, strict=False)
    times = {}
    if "Orthogonalization" in stages:
        times["Orthogonalization"] = _median_ns(
            lambda: gen_orthogonal_system(field, m, n, rng), ortho_reps or reps)
    state = make_state(m, n, rng, field)
    if "Key Refreshment" in stages:
        times["Key Refreshment"] = time_refresh(state, reps)
    if "Generator Coder" in stages:
        times["Generator Coder"] = _median_ns(state.build_rekey, reps)
    if "Client's setup" in stages:
        times["Client's setup"] = time_setup(state, reps)
    if "Bcast" in stages:
        msg = state.build_rekey()
        times["Bcast"] = _median_ns(lambda: encode_frame(rekey_to_frame(msg)), reps)
    if "Client removal + refresh" in stages:
        times["Client removal + refresh"] = time_removal(state, reps)
    return [BenchRow(stage, m, n, times[stage]) for stage in STAGES if stage in times]


def run_bench(dims, users, reps: int, rng, field=None) -> list:
    """Every (m, n) pair with n <= m."""
    rows = []
    for m in dims:
        for n in users:
            if n <= m:
                rows.extend(bench_pair(m, n, reps, rng, field))
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow((row.stage, row.m, row.n, row.median_ns))
    return buf.getvalue()
