"""Gap filling of missing measurements through the diffusion coordinates.

A missing sample destroys every library anchor whose window covers it, so
the per-time state sequence has holes much wider than the data gap itself,
plus stubs at block edges where full histories do not exist. Filling works
in state space: a linear transition operator fitted on all valid
consecutive state pairs is iterated forward from the last state before a
hole and backward from the first state after it, each step optionally
pulled toward the measurements that do exist at that time by a
norm-constrained least-squares refinement, and the two passes are blended
linearly across the hole. Per-source linear observation maps translate
refined states back into measurement values.

The conservative two-pass procedure first fills only time indices that
have complete data but no state (edge stubs and gap-adjacent indices),
extends the state proximity matrix with the new states, recomputes the
diffusion transform on it, and only then predicts the truly missing
samples in the updated coordinate space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .diffmap import (DiffusionConfig, DiffusionEmbedding, diffusion_operator,
                      spectral_decompose)
from .errors import ValidationError
from .series import Block, MultiSeries, SequenceLibrary, REAL

# ridge on the normal equations of the transition fit, for conditioning only
TRANSITION_RIDGE = 1e-10
# singular values below max/COND_LIMIT are truncated when inverting the
# transition operator for backward iteration
COND_LIMIT = 1e8


@dataclass
class GapfillConfig:
    """epsilon is the relative trust radius of the refinement step."""

    epsilon: float = 0.1
    max_passes: int = 2

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValidationError("epsilon must lie in (0, 1)")
        if self.max_passes < 1:
            raise ValidationError("max_passes must be >= 1")


@dataclass
class TransitionOperator:
    """One-step linear map on diffusion coordinates, with its fit residual."""

    matrix: np.ndarray
    rmse: float = 0.0
    _pinv: np.ndarray = field(default=None, repr=False)
    rank_deficient: bool = field(default=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("transition operator must be square")
        self.matrix = m
        sv = np.linalg.svd(m, compute_uv=False)
        top = sv[0] if len(sv) else 0.0
        self.rank_deficient = bool(top == 0.0 or sv[-1] < top * 1e-12)
        self._pinv = np.linalg.pinv(m, rcond=1.0 / COND_LIMIT)

    def forward(self, state: np.ndarray) -> np.ndarray:
        return self.matrix @ state

    def backward(self, state: np.ndarray) -> np.ndarray:
        """One backward step, a truncated-SVD solve against the operator."""
        return self._pinv @ state


def fit_transition(states: list[np.ndarray]) -> TransitionOperator:
    """Least-squares one-step operator over all valid consecutive pairs.

    `states` lists one (length, M) array per block with NaN rows where no
    state is known; pairs straddling unknown rows or block boundaries are
    skipped. Solved by ridge-stabilized normal equations.
    """
    xs, ys = [], []
    for table in states:
        known = np.isfinite(table).all(axis=1)
        ok = known[:-1] & known[1:]
        idx = np.nonzero(ok)[0]
        if idx.size:
            xs.append(table[idx])
            ys.append(table[idx + 1])
    if not xs:
        raise ValidationError("no valid consecutive state pairs to fit the transition")
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    m = x.shape[1]
    if x.shape[0] < m:
        raise ValidationError(
            f"only {x.shape[0]} state pairs for {m} coordinates; cannot fit the transition"
        )
    h = x.T @ x + TRANSITION_RIDGE * np.eye(m)
    gamma = np.linalg.solve(h, x.T @ y).T
    rmse = float(np.sqrt(np.mean((y - x @ gamma.T) ** 2)))
    return TransitionOperator(matrix=gamma, rmse=rmse)


@dataclass
class ObservationMaps:
    """Per-source linear maps from coordinates to measurement values."""

    weights: list[np.ndarray]      # (dim_d, M) each
    intercepts: list[np.ndarray]   # (dim_d,) each
    residuals: list[float]

    def predict(self, d: int, state: np.ndarray) -> np.ndarray:
        return self.weights[d] @ state + self.intercepts[d]


def fit_observation_maps(states: list[np.ndarray], series: MultiSeries) -> ObservationMaps:
    """Least-squares recovery of each source from the coordinates.

    Fitted over times with both a known state and a valid sample; an
    intercept column absorbs the source mean. Symbolic sources are skipped
    (no linear map applies) and get zero-size maps.
    """
    m = states[0].shape[1]
    weights, intercepts, residuals = [], [], []
    for d, meta in enumerate(series.sources):
        if meta.kind != REAL:
            weights.append(np.zeros((0, m)))
            intercepts.append(np.zeros(0))
            residuals.append(0.0)
            continue
        zs, vs = [], []
        for table, block in zip(states, series.blocks):
            ok = np.isfinite(table).all(axis=1) & block.valid[d]
            if ok.any():
                zs.append(table[ok])
                vs.append(block.values[d][ok])
        if not zs:
            raise ValidationError(f"source {meta.name!r} has no valid samples to fit")
        z = np.concatenate(zs)
        v = np.concatenate(vs)
        design = np.hstack([z, np.ones((len(z), 1))])
        coef, *_ = np.linalg.lstsq(design, v, rcond=None)
        weights.append(coef[:m].T)
        intercepts.append(coef[m])
        residuals.append(float(np.sqrt(np.mean((design @ coef - v) ** 2))))
    return ObservationMaps(weights=weights, intercepts=intercepts, residuals=residuals)


# ---------------------------------------------------------------------------
# Norm-constrained refinement (exact trust-region subproblem)
# ---------------------------------------------------------------------------

def constrain_to_observations(predicted: np.ndarray, observed: list,
                              maps: ObservationMaps, source_weights: np.ndarray,
                              epsilon: float) -> np.ndarray:
    """Pull a predicted state toward the valid measurements at its time.

    Minimizes the weighted squared misfit of the observation maps subject
    to staying within a relative-radius ball around the prediction. Solved
    exactly: the unconstrained minimizer closest to the prediction when it
    lies inside the ball, otherwise the unique boundary solution found by
    monotone root finding on the multiplier of the ball constraint.
    `observed` lists one value array per source, None where invalid.
    """
    s_hat = np.asarray(predicted, dtype=float)
    live = [d for d, v in enumerate(observed) if v is not None and maps.weights[d].shape[0]]
    if not live:
        return s_hat.copy()
    radius = epsilon * float(np.linalg.norm(s_hat))
    if radius == 0.0:
        return s_hat.copy()

    o = np.vstack([maps.weights[d] for d in live])
    b = np.concatenate([maps.intercepts[d] for d in live])
    target = np.concatenate([np.atleast_1d(np.asarray(observed[d], float)) for d in live])
    w = np.concatenate([
        np.full(maps.weights[d].shape[0], source_weights[d]) for d in live
    ])

    ow = o * w[:, None]
    h = ow.T @ o
    g = ow.T @ (o @ s_hat + b - target)
    lam, v = np.linalg.eigh(h)
    g_rot = v.T @ g
    cutoff = max(lam[-1], 0.0) * 1e-14

    step = np.where(lam > cutoff, -g_rot / np.where(lam > cutoff, lam, 1.0), 0.0)
    if np.linalg.norm(step) <= radius:
        return s_hat + v @ step

    def step_norm(mu):
        return float(np.linalg.norm(g_rot / (lam + mu)))

    hi = max(float(np.linalg.norm(g)) / radius, 1e-300)
    while step_norm(hi) > radius:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if step_norm(mid) > radius:
            lo = mid
        else:
            hi = mid
    mu = hi
    step = -g_rot / (lam + mu)
    return s_hat + v @ step


# ---------------------------------------------------------------------------
# Gap interpolation
# ---------------------------------------------------------------------------

@dataclass
class GapDescriptor:
    """A contiguous run of time indices without a state estimate."""

    block: int
    start: int                    # first stateless time index
    length: int                   # G
    left: int | None              # time of the last known state before, if any
    right: int | None             # time of the first known state after, if any
    affected_sources: tuple[int, ...] = ()


def find_gaps(state_known: list[np.ndarray], series: MultiSeries) -> list[GapDescriptor]:
    """Stateless runs per block, with boundary times and affected sources."""
    gaps = []
    for k, known in enumerate(state_known):
        L = len(known)
        t = 0
        while t < L:
            if known[t]:
                t += 1
                continue
            start = t
            while t < L and not known[t]:
                t += 1
            affected = tuple(
                d for d in range(series.n_sources)
                if not series.blocks[k].valid[d][start:t].all()
            )
            gaps.append(GapDescriptor(
                block=k, start=start, length=t - start,
                left=start - 1 if start > 0 else None,
                right=t if t < L else None,
                affected_sources=affected,
            ))
    return gaps


def blend_forward_backward(forward: np.ndarray, backward: np.ndarray) -> np.ndarray:
    """Linear blend across a gap; index g runs 0..G+1 on both inputs.

    The endpoints are taken verbatim from the forward (g = 0) and backward
    (g = G + 1) paths, so boundary states are reproduced exactly.
    """
    if forward.shape != backward.shape:
        raise ValidationError("forward and backward paths must have the same shape")
    n = forward.shape[0]
    if n < 2:
        raise ValidationError("paths must include both boundary positions")
    g = np.arange(n, dtype=float) / (n - 1)
    out = (1.0 - g)[:, None] * forward + g[:, None] * backward
    out[0] = forward[0]
    out[-1] = backward[-1]
    return out


def interpolate_gap(gap: GapDescriptor, transition: TransitionOperator,
                    left_state: np.ndarray | None, right_state: np.ndarray | None,
                    refine=None) -> np.ndarray:
    """Predicted coordinates for the G interior positions of a gap.

    Iterates the transition operator forward from the left boundary state
    and backward from the right one, then blends the two paths. `refine`,
    when given, is called as refine(time_index, raw_state) after each
    propagation step and its result feeds the next step. With only one
    boundary available (block edges) the single available direction is
    used; the same happens, with a warning, when the operator is too rank
    deficient to iterate backward.
    """
    G = gap.length
    m = transition.matrix.shape[0]
    use_backward = right_state is not None
    if use_backward and transition.rank_deficient:
        if left_state is not None:
            warnings.warn("transition operator is singular; using the forward pass only",
                          stacklevel=2)
            use_backward = False
        # with no left boundary the backward pass is still the only option

    fwd = np.full((G + 2, m), np.nan)
    if left_state is not None:
        s = np.asarray(left_state, float)
        fwd[0] = s
        for g in range(1, G + 2):
            s = transition.forward(s)
            if refine is not None and g <= G:
                s = refine(gap.start + g - 1, s)
            fwd[g] = s

    bwd = np.full((G + 2, m), np.nan)
    if use_backward:
        s = np.asarray(right_state, float)
        bwd[G + 1] = s
        for g in range(G, -1, -1):
            s = transition.backward(s)
            if refine is not None and g >= 1:
                s = refine(gap.start + g - 1, s)
            bwd[g] = s

    if left_state is not None and use_backward:
        return blend_forward_backward(fwd, bwd)[1 : G + 1]
    if left_state is not None:
        return fwd[1 : G + 1]
    if use_backward:
        return bwd[1 : G + 1]
    raise ValidationError("gap has no boundary state on either side")


# ---------------------------------------------------------------------------
# Two-pass refill
# ---------------------------------------------------------------------------

@dataclass
class GapfillResult:
    series: MultiSeries
    imputed: list[list[np.ndarray]]        # [block][source] bool mask
    states: list[np.ndarray]               # final per-block coordinate tables
    state_kind: list[np.ndarray]           # 0 anchor, 1 pass-1 fill, 2 pass-2 fill, -1 none
    embedding: DiffusionEmbedding          # embedding the final states live in
    updated_gram: np.ndarray               # proximity matrix over all states
    transition: TransitionOperator
    observation_maps: ObservationMaps
    n_pass1: int = 0
    n_pass2: int = 0


def _state_tables(series: MultiSeries, library: SequenceLibrary,
                  coords: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    m = coords.shape[1]
    tables = [np.full((b.length, m), np.nan) for b in series.blocks]
    kinds = [np.full(b.length, -1, dtype=int) for b in series.blocks]
    for i, (k, t) in enumerate(library.entries):
        tables[k][t] = coords[i]
        kinds[k][t] = 0
    return tables, kinds


def _lift_to_library_span(embedding: DiffusionEmbedding, new_coords: np.ndarray) -> np.ndarray:
    """Coefficients over library states reproducing given coordinates.

    New states produced by the linear transition model live in the span of
    the library states; the minimum-norm affine combination matching the
    retained coordinates (and the constant component) realizes them as
    explicit combinations, which keeps the extended proximity matrix
    consistent and rank-preserving.
    """
    n = embedding.n
    basis = np.vstack([np.ones((1, n)), embedding.coordinates.T])
    targets = np.vstack([np.ones((1, len(new_coords))), new_coords.T])
    lift, *_ = np.linalg.lstsq(basis, targets, rcond=None)
    return lift  # (n, n_new)


def extend_state_gram(gcs: np.ndarray, lift: np.ndarray) -> np.ndarray:
    """Proximity matrix over original plus lifted states."""
    cross = gcs @ lift
    corner = lift.T @ cross
    out = np.block([[gcs, cross], [cross.T, corner]])
    return (out + out.T) / 2.0


def _full_data_mask(series: MultiSeries) -> list[np.ndarray]:
    masks = []
    for block in series.blocks:
        ok = np.ones(block.length, dtype=bool)
        for flags in block.valid:
            ok &= flags
        masks.append(ok)
    return masks


def _observations_at(series: MultiSeries, k: int, t: int) -> list:
    obs = []
    for d, meta in enumerate(series.sources):
        block = series.blocks[k]
        if meta.kind == REAL and block.valid[d][t]:
            obs.append(block.values[d][t])
        else:
            obs.append(None)
    return obs


def _fill_pass(series, tables, kinds, config, source_weights, commit_mask, kind_code,
               constrain_missing):
    """One refill sweep over all stateless runs; returns committed states.

    commit_mask[k] marks, per block, which time indices may be committed in
    this pass. constrain_missing controls whether the refinement also runs
    at indices with partial data (pass 2) or only where data is complete
    (pass 1, the conservative choice).
    """
    transition = fit_transition(tables)
    maps = fit_observation_maps(tables, series)
    full_data = _full_data_mask(series)
    known = [np.isfinite(tab).all(axis=1) for tab in tables]
    gaps = find_gaps(known, series)

    committed = []  # (block, time, state)
    for gap in gaps:
        k = gap.block
        if gap.left is None and gap.right is None:
            warnings.warn(f"block {k} has no state at all; leaving it unfilled",
                          stacklevel=2)
            continue

        def refine(t, raw, k=k):
            if not constrain_missing and not full_data[k][t]:
                return raw
            obs = _observations_at(series, k, t)
            return constrain_to_observations(raw, obs, maps, source_weights, config.epsilon)

        left = tables[k][gap.left] if gap.left is not None else None
        right = tables[k][gap.right] if gap.right is not None else None
        predicted = interpolate_gap(gap, transition, left, right, refine=refine)
        for offset in range(gap.length):
            t = gap.start + offset
            if commit_mask[k][t]:
                committed.append((k, t, predicted[offset]))

    for k, t, state in committed:
        tables[k][t] = state
        kinds[k][t] = kind_code
    return committed, transition, maps


def two_pass_refill(series: MultiSeries, library: SequenceLibrary,
                    embedding: DiffusionEmbedding, gcs: np.ndarray,
                    diffusion_config: DiffusionConfig,
                    config: GapfillConfig,
                    source_weights: np.ndarray | None = None) -> GapfillResult:
    """Fill stateless time indices and write predictions for missing samples.

    Pass 1 fills indices that have complete measurements but no state
    (block-edge stubs and gap-adjacent indices). When truly missing samples
    exist, the proximity matrix is extended with the pass-1 states, the
    diffusion transform is recomputed on it, and pass 2 predicts the
    missing indices in the updated coordinate space. Predicted measurement
    values are written only into invalid cells, flagged as imputed; valid
    measurements are never touched. With max_passes = 1 everything is
    filled in a single sweep without the recomputation.
    """
    if source_weights is None:
        source_weights = np.ones(series.n_sources)
    source_weights = np.asarray(source_weights, dtype=float)

    coords = embedding.coordinates
    tables, kinds = _state_tables(series, library, coords)
    full_data = _full_data_mask(series)
    missing_any = [~m for m in full_data]
    have_missing = any(m.any() for m in missing_any)

    current_embedding = embedding
    current_gram = gcs
    n_pass1 = n_pass2 = 0

    if config.max_passes == 1 or not have_missing:
        commit_all = [np.ones_like(m) for m in full_data]
        committed, transition, maps = _fill_pass(
            series, tables, kinds, config, source_weights,
            commit_all, 1, constrain_missing=True)
        n_pass1 = len(committed)
        if committed:
            lift = _lift_to_library_span(current_embedding, np.array([c[2] for c in committed]))
            current_gram = extend_state_gram(current_gram, lift)
    else:
        committed, _, _ = _fill_pass(
            series, tables, kinds, config, source_weights,
            full_data, 1, constrain_missing=False)
        n_pass1 = len(committed)

        if committed:
            lift = _lift_to_library_span(current_embedding, np.array([c[2] for c in committed]))
            current_gram = extend_state_gram(current_gram, lift)
        # recompute the diffusion transform on the enlarged state set; the
        # lifted states sit slightly outside the library hull, so modest
        # negative similarity mass is expected there and not worth a warning
        op = diffusion_operator(current_gram, warn_clamp=False)
        current_embedding = spectral_decompose(op, diffusion_config)
        order = list(library.entries) + [(k, t) for k, t, _ in committed]
        m2 = current_embedding.n_components
        tables = [np.full((b.length, m2), np.nan) for b in series.blocks]
        kinds2 = [np.full(b.length, -1, dtype=int) for b in series.blocks]
        for row, (k, t) in enumerate(order):
            tables[k][t] = current_embedding.coordinates[row]
            kinds2[k][t] = kinds[k][t]
        kinds = kinds2

        commit_rest = [np.ones_like(m) for m in full_data]
        committed2, transition, maps = _fill_pass(
            series, tables, kinds, config, source_weights,
            commit_rest, 2, constrain_missing=True)
        n_pass2 = len(committed2)
        if committed2:
            lift = _lift_to_library_span(current_embedding, np.array([c[2] for c in committed2]))
            current_gram = extend_state_gram(current_gram, lift)

    # write predictions into invalid cells only
    new_blocks = []
    imputed_masks = []
    for k, block in enumerate(series.blocks):
        values = [v.copy() for v in block.values]
        valid = [f.copy() for f in block.valid]
        masks = []
        for d, meta in enumerate(series.sources):
            mask = np.zeros(block.length, dtype=bool)
            if meta.kind == REAL:
                for t in np.nonzero(~block.valid[d])[0]:
                    state = tables[k][t]
                    if np.isfinite(state).all():
                        values[d][t] = maps.predict(d, state)
                        valid[d][t] = True
                        mask[t] = True
            masks.append(mask)
        imputed_masks.append(masks)
        new_blocks.append(Block(values, valid))

    filled = MultiSeries(series.sources, new_blocks, block_ids=series.block_ids)
    return GapfillResult(
        series=filled,
        imputed=imputed_masks,
        states=tables,
        state_kind=kinds,
        embedding=current_embedding,
        updated_gram=current_gram,
        transition=transition,
        observation_maps=maps,
        n_pass1=n_pass1,
        n_pass2=n_pass2,
    )
