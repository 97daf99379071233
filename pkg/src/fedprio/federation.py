"""Round orchestration: cohort selection, local training, criteria collection,
weight computation, and weighted model aggregation.

Determinism rules, enforced here so identical configs give bit-identical
parameter trajectories:

  * every random draw comes from a stream derived from (master seed, purpose
    tag, round, client index), never from global state;
  * the cohort for a round depends only on (seed, round), so sweeps that vary
    the weighting scheme share an identical cohort schedule;
  * aggregation accumulates client models in ascending client-id order.

Client training inside a round is embarrassingly parallel (pure functions over
immutable inputs); this simulator runs it sequentially in id order, which is
also the deterministic join order a parallel scheduler would have to restore.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .criteria import ClientObservation, measure_cohort
from .data import ClientShard
from .errors import ConfigurationError, FederationError
from .learner import (
    ModelSpec,
    Parameters,
    TrainerConfig,
    init_params,
    local_train,
    loss_and_gradient,
    predict,
)
from .metrics import devices_needed, global_accuracy
from .scoring import compute_weights

logger = logging.getLogger("fedprio")

AGGREGATION_MODES = ("model_avg", "gradient")

# Purpose tags for derived seed streams.
_SEED_INIT = 0
_SEED_COHORT = 1
_SEED_TRAIN = 2


def derived_rng(master_seed: int, *tags: int) -> np.random.Generator:
    """Independent deterministic stream for (seed, *tags)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, *tags]))


@dataclass
class RoundRecord:
    """Everything one communication round produced."""

    round_index: int  # 1-based
    cohort_ids: tuple[str, ...]
    weights: dict[str, float]
    z: float
    criteria_raw: dict[str, dict[str, float]]  # client -> criterion -> value
    criteria_normalized: dict[str, dict[str, float]]
    device_accuracy: np.ndarray  # aligned with the state's evaluated client ids
    global_accuracy: float
    local_params: dict[str, np.ndarray] | None = None  # only when captured


@dataclass
class RoundPlan:
    """Cohort for one round: sorted positions into the state's client list."""

    round_index: int
    cohort_indices: np.ndarray
    client_fraction: float


@dataclass
class FederationState:
    """Server-side state: the global model plus the (immutable) federation."""

    model: ModelSpec
    trainer: TrainerConfig
    clients: list[ClientShard]
    master_seed: int
    global_params: Parameters
    round_index: int = 0
    # setup-time caches
    train_arrays: list[tuple[np.ndarray, np.ndarray]] = field(repr=False, default_factory=list)
    eval_ids: tuple[str, ...] = ()
    eval_sizes: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    pooled_test_x: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    pooled_test_y: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    _eval_bounds: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(1, dtype=np.int64))

    @classmethod
    def create(
        cls,
        shards: list[ClientShard],
        model: ModelSpec,
        trainer: TrainerConfig,
        master_seed: int,
        initial_params: Parameters | None = None,
    ) -> "FederationState":
        """Sort clients, drop empty-train shards, precompute arrays, init the model."""
        admitted = sorted((s for s in shards if s.n_train > 0), key=lambda s: s.client_id)
        dropped = len(shards) - len(admitted)
        if dropped:
            logger.warning("excluded %d client(s) with empty train splits at setup", dropped)
        if not admitted:
            raise ConfigurationError("federation: no clients with training data")
        if initial_params is None:
            initial_params = init_params(model, derived_rng(master_seed, _SEED_INIT))

        state = cls(
            model=model,
            trainer=trainer,
            clients=admitted,
            master_seed=master_seed,
            global_params=initial_params,
        )
        state.train_arrays = [s.train_arrays() for s in admitted]

        with_tests = [s for s in admitted if s.test]
        if not with_tests:
            raise ConfigurationError("federation: no client has a test set to evaluate")
        state.eval_ids = tuple(s.client_id for s in with_tests)
        state.eval_sizes = np.array([len(s.test) for s in with_tests], dtype=np.int64)
        xs, ys = zip(*(s.test_arrays() for s in with_tests))
        state.pooled_test_x = np.concatenate(xs)
        state.pooled_test_y = np.concatenate(ys)
        state._eval_bounds = np.concatenate([[0], np.cumsum(state.eval_sizes)])
        return state

    def evaluate_devices(self, params: Parameters) -> tuple[np.ndarray, np.ndarray]:
        """(per-device accuracy, pooled predictions) over every non-empty test set."""
        preds = predict(params, self.model, self.pooled_test_x)
        correct = preds == self.pooled_test_y
        accs = np.array(
            [
                correct[self._eval_bounds[i] : self._eval_bounds[i + 1]].mean()
                for i in range(len(self.eval_ids))
            ]
        )
        return accs, preds


def select_cohort(state: FederationState, fraction: float, round_index: int) -> RoundPlan:
    """Uniform sample without replacement of max(1, floor(fraction * |A|)) clients."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"client_fraction must be in (0, 1], got {fraction}")
    n = len(state.clients)
    if n == 0:
        raise ConfigurationError("federation has no clients")
    size = max(1, int(fraction * n + 1e-9))  # epsilon guards floor against float fuzz
    rng = derived_rng(state.master_seed, _SEED_COHORT, round_index)
    indices = np.sort(rng.choice(n, size=size, replace=False))
    return RoundPlan(round_index=round_index, cohort_indices=indices, client_fraction=fraction)


def run_round(
    state: FederationState,
    plan: RoundPlan,
    ordering,
    score_kind: str = "prioritized",
    aggregation: str = "model_avg",
    capture_locals: bool = False,
) -> tuple[Parameters, RoundRecord]:
    """Execute one communication round and return (new global model, record).

    Cohort clients train locally and report their criteria measurements; the
    server normalizes them, computes weights, and blends:

        model_avg:  theta <- sum_a w_a * theta_a          (executed default)
        gradient:   theta <- theta - lr * sum_a w_a * g_a (single full-batch
                    gradient at the received model; equivalent for one local
                    epoch at full batch)
    """
    if aggregation not in AGGREGATION_MODES:
        raise ConfigurationError(f"unknown aggregation mode {aggregation!r}")
    received = state.global_params
    observations = []
    payloads = []  # theta_a or gradient, in ascending client-id order
    local_models = []  # theta_a either way (gradient mode implies it via one step)
    for i in plan.cohort_indices:
        i = int(i)
        shard = state.clients[i]
        x, y = state.train_arrays[i]
        if aggregation == "model_avg":
            seed = np.random.SeedSequence(
                [state.master_seed, _SEED_TRAIN, plan.round_index, i]
            )
            try:
                trained = local_train(received, state.model, x, y, state.trainer, seed)
            except FloatingPointError as exc:
                raise FederationError(
                    f"round {plan.round_index}: client {shard.client_id}: {exc}"
                ) from exc
            payloads.append(trained.values)
        else:
            _, grad = loss_and_gradient(received, state.model, x, y)
            trained = Parameters(received.values - state.trainer.learning_rate * grad)
            payloads.append(grad)
        if not np.isfinite(trained.values).all():
            raise FederationError(
                f"round {plan.round_index}: client {shard.client_id} produced "
                "non-finite parameters"
            )
        local_models.append(trained.values)
        observations.append(ClientObservation.from_shard(shard, received, trained))

    cohort = measure_cohort(observations, ordering)
    weights, z = compute_weights(cohort, score_kind, ordering)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise FederationError(f"round {plan.round_index}: weights sum to {weights.sum()!r}")

    blended = np.zeros_like(received.values)
    for w, payload in zip(weights, payloads):
        blended += w * payload
    if aggregation == "model_avg":
        new_values = blended
    else:
        new_values = received.values - state.trainer.learning_rate * blended
    if not np.isfinite(new_values).all():
        raise FederationError(f"round {plan.round_index}: aggregated model is non-finite")
    new_params = Parameters(new_values)

    accs, _ = state.evaluate_devices(new_params)
    record = RoundRecord(
        round_index=plan.round_index,
        cohort_ids=cohort.client_ids,
        weights={cid: float(w) for cid, w in zip(cohort.client_ids, weights)},
        z=z,
        criteria_raw={
            cid: {name: float(cohort.raw[i, j]) for j, name in enumerate(cohort.names)}
            for i, cid in enumerate(cohort.client_ids)
        },
        criteria_normalized={
            cid: {name: float(cohort.normalized[i, j]) for j, name in enumerate(cohort.names)}
            for i, cid in enumerate(cohort.client_ids)
        },
        device_accuracy=accs,
        global_accuracy=global_accuracy(accs, state.eval_sizes),
        local_params={cid: p.copy() for cid, p in zip(cohort.client_ids, local_models)}
        if capture_locals
        else None,
    )
    return new_params, record


@dataclass
class ExperimentResult:
    """Full output of one experiment run."""

    records: list[RoundRecord]
    client_ids: tuple[str, ...]  # devices with non-empty test sets, ascending
    test_sizes: np.ndarray
    pooled_labels: np.ndarray
    initial_params: Parameters
    final_params: Parameters
    best_round: int  # 1-based; 0 when no rounds ran
    best_global_accuracy: float
    best_predictions: np.ndarray  # pooled test predictions at the best round


def run_experiment(
    state: FederationState,
    *,
    ordering,
    score_kind: str = "prioritized",
    client_fraction: float = 0.1,
    max_rounds: int = 100,
    aggregation: str = "model_avg",
    targets=(),
    device_fractions=(),
    early_stop: bool = False,
    capture_locals: bool = False,
    on_round=None,
) -> ExperimentResult:
    """Drive `max_rounds` communication rounds (mutating `state`).

    After every round each device with a test set is evaluated, so the
    rounds-to-target protocol can look at the whole federation rather than
    the cohort. With `early_stop`, the run ends once every (target, fraction)
    pair has been reached. `on_round` is called with each RoundRecord.
    """
    if max_rounds < 0:
        raise ConfigurationError("max_rounds must be >= 0")
    initial = state.global_params.copy()
    records: list[RoundRecord] = []
    best_round, best_acc = 0, -1.0
    best_preds = np.zeros(0, dtype=np.int64)
    pending = {
        (t, f): True for t in targets for f in device_fractions
    }  # cells not yet reached, for early stopping
    n_devices = len(state.eval_ids)

    for round_index in range(1, max_rounds + 1):
        plan = select_cohort(state, client_fraction, round_index)
        try:
            new_params, record = run_round(
                state, plan, ordering, score_kind, aggregation, capture_locals
            )
        except (FederationError, ConfigurationError):
            raise
        except Exception as exc:
            raise FederationError(f"round {round_index}: {exc}") from exc
        state.global_params = new_params
        state.round_index = round_index
        records.append(record)
        if record.global_accuracy > best_acc:
            best_acc = record.global_accuracy
            best_round = round_index
            _, best_preds = state.evaluate_devices(new_params)
        logger.info(
            "round=%d cohort=%d z=%.6f global_acc=%.6f",
            round_index,
            len(record.cohort_ids),
            record.z,
            record.global_accuracy,
        )
        if on_round is not None:
            on_round(record)
        if early_stop and pending:
            reached = [
                (t, f)
                for (t, f) in pending
                if int((record.device_accuracy >= t).sum()) >= devices_needed(f, n_devices)
            ]
            for cell in reached:
                del pending[cell]
            if not pending:
                logger.info("early stop: every target/fraction pair reached at round %d", round_index)
                break

    return ExperimentResult(
        records=records,
        client_ids=state.eval_ids,
        test_sizes=state.eval_sizes.copy(),
        pooled_labels=state.pooled_test_y.copy(),
        initial_params=initial,
        final_params=state.global_params.copy(),
        best_round=best_round,
        best_global_accuracy=best_acc if records else 0.0,
        best_predictions=best_preds,
    )
