"""Problem registry, manufactured forcing, and refinement-study driver.

Each registered problem carries a closed-form solution with analytic time
derivative, gradient, and Laplacian; the forcing is always synthesized from
those handles so the PDE holds exactly.  Pumped 2D problems run in
*reference mode*: the forcing (and initial datum) are reused from the damped
problem, the solver sees the full reaction including pumping, and errors are
measured against a trajectory computed on a nested fine grid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from dpfem.analysis import (
    ConvergenceReport,
    ExactSolution,
    FacetBatch,
    SpaceTimeError,
    StabilityAccumulator,
)
from dpfem.io import write_report_csv
from dpfem.mesh import unit_cube_mesh, unit_square_mesh
from dpfem.nonlinear import ReactionSpec
from dpfem.projections import set_initial
from dpfem.solver import LinearConfig, NewtonConfig, TimeIntegrator
from dpfem.spaces import SCHEMES, make_space

# relative nudge used to take one-sided traces of discontinuous reference
# fields: facet points are moved this fraction of the way toward the
# adjacent coarse cell's barycenter, which stays inside that cell
_TRACE_NUDGE = 1e-8


# ----------------------------------------------------------------------
# separable manufactured solutions
# ----------------------------------------------------------------------


class SeparableExact(ExactSolution):
    """u(x, t) = T(t) * g_1(x_1) * ... * g_d(x_d) with analytic handles.

    ``factors`` is one (g, g', g'') triple of callables per coordinate.
    """

    def __init__(self, time_value, time_deriv, factors):
        self.time_value = time_value
        self.time_deriv = time_deriv
        self.factors = tuple(factors)
        self.dim = len(self.factors)

    def _parts(self, X, order: int):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = []
        for i, triple in enumerate(self.factors):
            cols.append([triple[k](X[:, i]) for k in range(order + 1)])
        return X, cols

    def value(self, X, t: float) -> np.ndarray:
        X, cols = self._parts(X, 0)
        out = np.full(X.shape[0], self.time_value(t))
        for (g,) in cols:
            out *= g
        return out

    def time_derivative(self, X, t: float) -> np.ndarray:
        X, cols = self._parts(X, 0)
        out = np.full(X.shape[0], self.time_deriv(t))
        for (g,) in cols:
            out *= g
        return out

    def gradient(self, X, t: float) -> np.ndarray:
        X, cols = self._parts(X, 1)
        out = np.empty_like(X)
        for i in range(self.dim):
            term = cols[i][1].copy()
            for j in range(self.dim):
                if j != i:
                    term *= cols[j][0]
            out[:, i] = term
        return self.time_value(t) * out

    def laplacian(self, X, t: float) -> np.ndarray:
        X, cols = self._parts(X, 2)
        out = np.zeros(X.shape[0])
        for i in range(self.dim):
            term = cols[i][2].copy()
            for j in range(self.dim):
                if j != i:
                    term *= cols[j][0]
            out += term
        return self.time_value(t) * out


def _sin_shift(freq: float, shift: float):
    """g(s) = sin(freq*s) * (s - shift)."""

    def g(s):
        return np.sin(freq * s) * (s - shift)

    def dg(s):
        return freq * np.cos(freq * s) * (s - shift) + np.sin(freq * s)

    def ddg(s):
        return -freq**2 * np.sin(freq * s) * (s - shift) + 2.0 * freq * np.cos(freq * s)

    return g, dg, ddg


def _sine(freq: float):
    """g(s) = sin(freq*s)."""
    return (
        lambda s: np.sin(freq * s),
        lambda s: freq * np.cos(freq * s),
        lambda s: -freq**2 * np.sin(freq * s),
    )


def _cos_bubble(freq: float):
    """g(s) = cos(freq*s) * s * (1 - s)."""

    def g(s):
        return np.cos(freq * s) * s * (1.0 - s)

    def dg(s):
        return -freq * np.sin(freq * s) * s * (1.0 - s) + np.cos(freq * s) * (1.0 - 2.0 * s)

    def ddg(s):
        return (
            -freq**2 * np.cos(freq * s) * s * (1.0 - s)
            - 2.0 * freq * np.sin(freq * s) * (1.0 - 2.0 * s)
            - 2.0 * np.cos(freq * s)
        )

    return g, dg, ddg


def synthesize_forcing(exact, nu: float, reaction: ReactionSpec | None):
    """Forcing f(x,t) = u_t - nu*Lap(u) + phi(u) from the solution's handles.

    ``reaction`` is the reaction the forcing accounts for (pass the damped
    part only to leave pumping active in a reference-mode run, or None for a
    reaction-free balance).
    """
    for handle in ("value", "time_derivative", "laplacian"):
        if not callable(getattr(exact, handle, None)):
            raise ValueError(f"exact solution is missing the {handle} handle")

    def forcing(X, t):
        out = exact.time_derivative(X, t) - nu * exact.laplacian(X, t)
        if reaction is not None:
            out = out + reaction.phi(exact.value(X, t))
        return out

    return forcing


# ----------------------------------------------------------------------
# problem specifications
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class DtPolicy:
    """Time-step selection: a fixed dt, or dt proportional to h."""

    kind: str  # "fixed" | "proportional"
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "proportional"):
            raise ValueError(f"unknown dt policy {self.kind!r}")
        if self.value <= 0:
            raise ValueError("dt policy needs a positive value")

    @classmethod
    def fixed(cls, dt: float) -> "DtPolicy":
        return cls("fixed", float(dt))

    @classmethod
    def proportional(cls, c: float) -> "DtPolicy":
        """dt ~ c*h, snapped so that an integer number of steps reaches T."""
        return cls("proportional", float(c))

    def resolve(self, T: float, h: float) -> float:
        if self.kind == "fixed":
            return self.value
        N = max(1, int(round(T / (self.value * h))))
        return T / N


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to reproduce one experiment family."""

    name: str
    dim: int
    schemes: tuple
    nu: float
    reaction: ReactionSpec  # what the solver integrates
    forcing_reaction: ReactionSpec | None  # what the forcing balances
    exact: SeparableExact
    T: float
    dt_policy: DtPolicy
    gamma: float | None = None
    reference_mode: bool = False
    ref_factor: int = 4
    default_grids: tuple = (4, 8, 16, 32, 64)

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("diffusion coefficient nu must be positive")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if "dg" in self.schemes and (self.gamma is None or self.gamma <= 0):
            raise ValueError("dg problems need a positive penalty gamma")

    def forcing(self):
        return synthesize_forcing(self.exact, self.nu, self.forcing_reaction)

    def initial(self):
        """(u0, grad u0) callables at t = 0."""
        return (
            lambda X: self.exact.value(X, 0.0),
            lambda X: self.exact.gradient(X, 0.0),
        )

    def mesh(self, n: int):
        return unit_square_mesh(n) if self.dim == 2 else unit_cube_mesh(n)


def _build_registry() -> dict:
    exp_decay = (lambda t: float(np.exp(-t)), lambda t: float(-np.exp(-t)))
    quad_time = (lambda t: t - t * t + 1.0, lambda t: 1.0 - 2.0 * t)
    cos_plus_one = (lambda t: float(np.cos(t)) + 1.0, lambda t: float(-np.sin(t)))
    pi = np.pi

    damped_p5 = ReactionSpec(alpha=1.0, p=5.0)

    ex_square = SeparableExact(*exp_decay, [_sin_shift(pi, 0.5), _sin_shift(pi, 2.0 / 3.0)])
    ex_cube = SeparableExact(
        *exp_decay, [_sin_shift(pi, 0.50), _sin_shift(pi, 0.56), _sin_shift(pi, 0.48)]
    )
    ex_cr = SeparableExact(*quad_time, [_cos_bubble(pi), _cos_bubble(pi)])
    ex_dg = SeparableExact(*cos_plus_one, [_sine(3 * pi), _cos_bubble(2 * pi)])
    ex_ac = SeparableExact(*exp_decay, [_sine(2 * pi), _sine(3 * pi)])

    reaction_3d = ReactionSpec(alpha=1.0, p=11.0, pumping=((2.5, 3.0), (2.0, 6.0), (3.0, 9.0)))
    reaction_ac = ReactionSpec(alpha=1.0, p=4.0, pumping=((1.0, 2.0),))
    pump_cfem = ReactionSpec(alpha=1.0, p=5.0, pumping=((2.0, 3.0), (4.0, 4.0)))
    pump_small = ReactionSpec(alpha=1.0, p=5.0, pumping=((1.0, 3.0), (3.0, 4.0)))

    dt001 = DtPolicy.fixed(0.01)

    problems = [
        ProblemSpec(
            name="cfem_damped_2d",
            dim=2,
            schemes=("cfem",),
            nu=1.0,
            reaction=damped_p5,
            forcing_reaction=damped_p5,
            exact=ex_square,
            T=1.0,
            dt_policy=dt001,
            default_grids=(4, 8, 16, 32, 64, 128),
        ),
        ProblemSpec(
            name="cfem_pumped_2d",
            dim=2,
            schemes=("cfem",),
            nu=1.0,
            reaction=pump_cfem,
            forcing_reaction=damped_p5,
            exact=ex_square,
            T=1.0,
            dt_policy=dt001,
            reference_mode=True,
            default_grids=(4, 8, 16, 32, 64, 128),
        ),
        ProblemSpec(
            name="cfem_pumped_3d",
            dim=3,
            schemes=("cfem",),
            nu=1.0,
            reaction=reaction_3d,
            forcing_reaction=reaction_3d,
            exact=ex_cube,
            T=1.0,
            dt_policy=DtPolicy.fixed(0.1),
            default_grids=(5, 10, 15, 20, 25),
        ),
        ProblemSpec(
            name="ncfem_damped_2d",
            dim=2,
            schemes=("ncfem",),
            nu=1.0,
            reaction=damped_p5,
            forcing_reaction=damped_p5,
            exact=ex_cr,
            T=1.0,
            dt_policy=dt001,
        ),
        ProblemSpec(
            name="ncfem_pumped_2d",
            dim=2,
            schemes=("ncfem",),
            nu=1.0,
            reaction=pump_small,
            forcing_reaction=damped_p5,
            exact=ex_cr,
            T=1.0,
            dt_policy=dt001,
            reference_mode=True,
        ),
        ProblemSpec(
            name="dg_damped_2d",
            dim=2,
            schemes=("dg",),
            nu=1.0,
            reaction=damped_p5,
            forcing_reaction=damped_p5,
            exact=ex_dg,
            T=1.0,
            dt_policy=dt001,
            gamma=10.0,
        ),
        ProblemSpec(
            name="dg_pumped_2d",
            dim=2,
            schemes=("dg",),
            nu=1.0,
            reaction=pump_small,
            forcing_reaction=damped_p5,
            exact=ex_dg,
            T=1.0,
            dt_policy=dt001,
            gamma=10.0,
            reference_mode=True,
        ),
        ProblemSpec(
            name="allen_cahn_3way",
            dim=2,
            schemes=("cfem", "ncfem", "dg"),
            nu=1.0,
            reaction=reaction_ac,
            forcing_reaction=reaction_ac,
            exact=ex_ac,
            T=1.0,
            dt_policy=dt001,
            gamma=10.0,
            default_grids=(4, 8, 16, 32, 64, 128),
        ),
    ]
    return {spec.name: spec for spec in problems}


REGISTRY: dict = _build_registry()


def get_problem(name: str) -> ProblemSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise ValueError(f"unknown problem {name!r}; available: {known}") from None


# ----------------------------------------------------------------------
# single runs
# ----------------------------------------------------------------------


@dataclass
class RunResult:
    """One time integration on one grid."""

    problem: str
    scheme: str
    n: int
    h: float
    dt: float
    space: object
    states: list
    stability: tuple  # (lhs, rhs) of the discrete stability bound
    newton_max: int
    elapsed: float
    error: float | None = None


def run_single(
    problem,
    n: int,
    scheme: str | None = None,
    dt: float | None = None,
    gamma: float | None = None,
    extra_observers=(),
    newton: NewtonConfig | None = None,
    linear: LinearConfig | None = None,
) -> RunResult:
    """Integrate one registered problem on an n-grid with one scheme."""
    spec = get_problem(problem) if isinstance(problem, str) else problem
    scheme = scheme or spec.schemes[0]
    if scheme not in spec.schemes:
        raise ValueError(f"problem {spec.name!r} is not set up for scheme {scheme!r}")
    mesh = spec.mesh(n)
    space = make_space(mesh, scheme)
    if dt is None:
        dt = spec.dt_policy.resolve(spec.T, mesh.h)
    if gamma is None:
        gamma = spec.gamma

    u0, u0_grad = spec.initial()
    coeffs0 = set_initial(space, u0, spec.reaction.p, u0_grad=u0_grad)

    integrator = TimeIntegrator(
        space,
        spec.reaction,
        spec.nu,
        forcing=spec.forcing(),
        gamma=gamma if scheme == "dg" else None,
        newton=newton,
        linear=linear,
    )
    stab = StabilityAccumulator(space, spec.reaction, spec.nu, dt)
    tic = time.perf_counter()
    _, states = integrator.run(coeffs0, spec.T, dt, observers=(stab, *extra_observers))
    elapsed = time.perf_counter() - tic
    newton_max = max((s.newton_iterations for s in states), default=0)
    return RunResult(
        problem=spec.name,
        scheme=scheme,
        n=n,
        h=mesh.h,
        dt=dt,
        space=space,
        states=states,
        stability=stab.bound(),
        newton_max=newton_max,
        elapsed=elapsed,
    )


def measure_error(spec: ProblemSpec, result: RunResult, exact=None) -> float:
    """Space-time error of a finished run against the exact/reference field."""
    exact = exact if exact is not None else spec.exact
    acc = SpaceTimeError(
        result.space,
        exact,
        spec.nu,
        result.dt,
        spec.T,
        gamma=spec.gamma if result.scheme == "dg" else None,
        quad_degree=spec.reaction.quad_degree + 2,
    )
    for state in result.states:
        acc.on_step(state)
    return acc.result()


# ----------------------------------------------------------------------
# reference mode
# ----------------------------------------------------------------------


class ReferenceSolution(ExactSolution):
    """A fine-grid trajectory standing in for an unavailable exact solution.

    Stores the per-step coefficient snapshots (the time grid is shared with
    the coarse runs) and evaluates values/gradients at arbitrary points via
    structured point location.  One-sided facet traces nudge the evaluation
    points off the facet toward the requesting side's cell barycenter, which
    keeps them on the correct side of any nested fine-grid facet.
    """

    def __init__(self, space, states, dt: float):
        self.space = space
        self.dt = float(dt)
        self.n_ref = space.mesh.n
        self._snapshots = {state.step: state.coeffs for state in states}

    def _coeffs_at(self, t: float) -> np.ndarray:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)) or k not in self._snapshots:
            raise ValueError(f"reference trajectory has no snapshot at t={t!r}")
        return self._snapshots[k]

    def check_nested(self, n: int):
        if n >= self.n_ref:
            raise ValueError(f"study grid n={n} must be coarser than the reference n={self.n_ref}")
        if self.n_ref % n != 0:
            raise ValueError(f"study grid n={n} is not nested in the reference n={self.n_ref}")

    def value(self, X, t: float) -> np.ndarray:
        return self.space.eval(self._coeffs_at(t), X)

    def gradient(self, X, t: float) -> np.ndarray:
        return self.space.eval_grad(self._coeffs_at(t), X)

    def facet_trace(self, batch: FacetBatch, t: float) -> np.ndarray:
        X = batch.points + _TRACE_NUDGE * (batch.toward - batch.points)
        return self.space.eval(self._coeffs_at(t), X)


def build_reference(problem, n_ref: int, scheme: str | None = None) -> ReferenceSolution:
    """Run the problem on the fine grid and wrap the trajectory."""
    spec = get_problem(problem) if isinstance(problem, str) else problem
    if spec.dt_policy.kind != "fixed":
        raise ValueError("reference mode needs a fixed time step shared across grids")
    result = run_single(spec, n_ref, scheme=scheme)
    return ReferenceSolution(result.space, result.states, result.dt)


def reference_error(spec: ProblemSpec, result: RunResult, ref: ReferenceSolution) -> float:
    """Scheme-norm error of a coarse run measured against the reference."""
    ref.check_nested(result.n)
    if abs(ref.dt - result.dt) > 1e-12:
        raise ValueError("reference and study runs must share the time step")
    return measure_error(spec, result, exact=ref)


# ----------------------------------------------------------------------
# refinement studies
# ----------------------------------------------------------------------


def run_study(
    problem,
    grids=None,
    out_dir=None,
    ref_factor: int | None = None,
    dt: float | None = None,
    gamma: float | None = None,
    verbose: bool = True,
) -> list[ConvergenceReport]:
    """Run a refinement study; one report (and CSV) per scheme.

    In reference mode a fine-grid trajectory on ref_factor * max(grids) is
    computed once per scheme and errors are measured against it.
    """
    spec = get_problem(problem) if isinstance(problem, str) else problem
    grids = tuple(int(n) for n in (grids if grids is not None else spec.default_grids))
    if len(grids) == 0:
        raise ValueError("need at least one grid")
    if any(b <= a for a, b in zip(grids, grids[1:])):
        raise ValueError(f"grids must be strictly increasing, got {grids}")

    reports = []
    for scheme in spec.schemes:
        ref = None
        if spec.reference_mode:
            n_ref = (ref_factor or spec.ref_factor) * grids[-1]
            for n in grids:
                if n_ref % n != 0:
                    raise ValueError(f"grid n={n} is not nested in the reference n={n_ref}")
            if verbose:
                print(f"[{spec.name}/{scheme}] reference run on n={n_ref} ...", flush=True)
            tic = time.perf_counter()
            ref = build_reference(spec, n_ref, scheme=scheme)
            if verbose:
                print(
                    f"[{spec.name}/{scheme}] reference ready ({time.perf_counter() - tic:.1f}s)",
                    flush=True,
                )

        hs, errors, stability = [], [], []
        for n in grids:
            try:
                result = run_single(spec, n, scheme=scheme, dt=dt, gamma=gamma)
                err = (
                    reference_error(spec, result, ref)
                    if ref is not None
                    else measure_error(spec, result)
                )
            except Exception as exc:
                raise RuntimeError(
                    f"study {spec.name!r} [{scheme}] failed on grid n={n}: {exc}"
                ) from exc
            hs.append(result.h)
            errors.append(err)
            stability.append(result.stability)
            if verbose:
                rate = (
                    "  N/A"
                    if len(errors) < 2
                    else f"{np.log(errors[-2] / errors[-1]) / np.log(hs[-2] / hs[-1]):5.2f}"
                )
                print(
                    f"[{spec.name}/{scheme}] n={n:>4}  h={result.h:.4e}  "
                    f"error={err:.6e}  rate={rate}  "
                    f"({result.elapsed:.1f}s, newton<={result.newton_max})",
                    flush=True,
                )
        report = ConvergenceReport.from_errors(spec.name, scheme, grids, hs, errors)
        report.stability = stability
        if out_dir is not None:
            suffix = f"_{scheme}" if len(spec.schemes) > 1 else ""
            write_report_csv(report, f"{out_dir}/{spec.name}{suffix}.csv")
        reports.append(report)
    return reports
