"""Predictive distributions and entropy-based uncertainty estimates.

Three sampling schemes over a trained classifier stack:

* MC dropout: T stochastic forward passes of one network with fresh
  dropout masks each pass.
* Deep ensemble: one deterministic pass per independently trained member
  (all members see the identical training table, no bootstrapping).
* Ensemble MC dropout: T stochastic passes per member, M*T samples.

The summary of any sample set is the mean distribution, its predictive
entropy in nats, and the entropy normalized by ln(num classes) so the
certainty threshold lives on a [0, 1] axis.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, ShapeError, ValidationError
from .network import Network, NetworkConfig, forward, sample_dropout_mask, train
from .seeding import STREAM_MEMBER, STREAM_PREDICT, derive_seed, substream

METHOD_MCD = "mcd"
METHOD_ENSEMBLE = "ensemble"
METHOD_EMCD = "emcd"
METHODS = (METHOD_MCD, METHOD_ENSEMBLE, METHOD_EMCD)


@dataclass
class PredictiveSamples:
    """Stochastic softmax outputs for one input.

    ``samples`` is (num_samples, num_classes); ``member_index`` and
    ``pass_index`` record which ensemble member and which stochastic pass
    produced each row.
    """

    samples: np.ndarray
    method: str
    member_index: np.ndarray
    pass_index: np.ndarray


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Mean distribution plus entropy for one input; ``certain`` is set by
    thresholding afterwards."""

    mean_probs: np.ndarray
    predicted_class: int
    entropy_raw: float
    entropy_norm: float
    certain: bool | None = None


@dataclass(frozen=True)
class EnsembleSpec:
    """How to build an ensemble: member count, per-layer width ranges
    (inclusive), the shared base config, and the master seed."""

    members: int
    width_ranges: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    base: NetworkConfig
    master_seed: int = 0

    def validate(self) -> "EnsembleSpec":
        if self.members < 2:
            raise ValidationError(f"an ensemble needs at least 2 members, got {self.members}")
        if len(self.width_ranges) != 3:
            raise ValidationError("width_ranges must cover the 3 hidden layers")
        for lo, hi in self.width_ranges:
            if not 1 <= lo < hi:
                raise ValidationError(f"width range ({lo}, {hi}) must satisfy 1 <= low < high")
        return self


def mcd_predict(net: Network, x: np.ndarray, passes: int, rng: np.random.Generator) -> PredictiveSamples:
    """MC-dropout samples: ``passes`` forward passes, fresh mask per pass."""
    if passes < 1:
        raise ValidationError(f"number of MC passes must be >= 1, got {passes}")
    x = np.asarray(x, dtype=np.float64)
    rows = np.empty((passes, net.config.output_units))
    for t in range(passes):
        mask = sample_dropout_mask(net.config, rng)
        rows[t] = forward(net, x, mask)
    return PredictiveSamples(
        samples=rows,
        method=METHOD_MCD,
        member_index=np.zeros(passes, dtype=np.int64),
        pass_index=np.arange(passes, dtype=np.int64),
    )


def ensemble_predict(members: list[Network], x: np.ndarray) -> PredictiveSamples:
    """One deterministic (mask-free) forward pass per member."""
    if len(members) < 2:
        raise ValidationError(f"ensemble prediction needs >= 2 members, got {len(members)}")
    x = np.asarray(x, dtype=np.float64)
    widths = {m.config.input_units for m in members}
    if len(widths) != 1 or x.shape[-1] not in widths:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match member input widths {sorted(widths)}"
        )
    rows = np.stack([forward(m, x) for m in members])
    n = len(members)
    return PredictiveSamples(
        samples=rows,
        method=METHOD_ENSEMBLE,
        member_index=np.arange(n, dtype=np.int64),
        pass_index=np.zeros(n, dtype=np.int64),
    )


def emcd_predict(members: list[Network], x: np.ndarray, passes: int,
                 rng: np.random.Generator) -> PredictiveSamples:
    """MC dropout over every ensemble member: M*T sample rows."""
    if len(members) < 2:
        raise ValidationError(f"ensemble prediction needs >= 2 members, got {len(members)}")
    if passes < 1:
        raise ValidationError(f"number of MC passes must be >= 1, got {passes}")
    x = np.asarray(x, dtype=np.float64)
    member_rngs = rng.spawn(len(members))
    blocks, member_idx, pass_idx = [], [], []
    for i, (member, member_rng) in enumerate(zip(members, member_rngs)):
        block = mcd_predict(member, x, passes, member_rng)
        blocks.append(block.samples)
        member_idx.append(np.full(passes, i, dtype=np.int64))
        pass_idx.append(np.arange(passes, dtype=np.int64))
    return PredictiveSamples(
        samples=np.vstack(blocks),
        method=METHOD_EMCD,
        member_index=np.concatenate(member_idx),
        pass_index=np.concatenate(pass_idx),
    )


def _centered_mean(rows: np.ndarray) -> np.ndarray:
    # Offsetting by the first row keeps the mean of bitwise-identical rows
    # exact, so zero-dropout sampling collapses to the single forward pass
    # with no rounding drift.
    return rows[0] + (rows - rows[0]).mean(axis=0)


def mean_probabilities(samples: PredictiveSamples) -> np.ndarray:
    """Grand mean distribution: per-member mean over passes, then across members.

    Rows are first put in canonical (member, pass) order, which makes the
    result invariant to row permutations and, for equal passes per member,
    equal to the flat mean over all rows.
    """
    rows, members, passes = samples.samples, samples.member_index, samples.pass_index
    if rows.shape[0] == 0:
        raise DataError("cannot summarize an empty sample set")
    order = np.lexsort((passes, members))
    if not np.array_equal(order, np.arange(len(order))):
        rows, members = rows[order], members[order]
    boundaries = np.flatnonzero(np.diff(members)) + 1
    groups = np.split(rows, boundaries)
    member_means = np.stack([_centered_mean(g) for g in groups])
    return _centered_mean(member_means)


def predictive_entropy(mean_probs: np.ndarray) -> tuple[float, float]:
    """Shannon entropy of the mean distribution, raw nats and ln(C)-normalized.

    Uses the 0*ln(0) := 0 convention; the normalized value is clamped to
    [0, 1] against last-ulp rounding. Rejects vectors that are not a
    probability distribution rather than returning a meaningless number.
    """
    p = np.asarray(mean_probs, dtype=np.float64)
    if p.min() < -1e-9 or abs(p.sum() - 1.0) > 1e-6:
        raise DataError(f"not a probability distribution: {p.tolist()}")
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    raw = float(-terms.sum() + 0.0)  # +0.0 normalizes -0.0
    raw = max(raw, 0.0)
    norm = min(max(raw / math.log(p.shape[-1]), 0.0), 1.0)
    return raw, norm


def summarize(samples: PredictiveSamples) -> UncertaintyEstimate:
    """Collapse a sample set into its mean distribution and entropy.

    Argmax ties resolve to the lower class index (genuine).
    """
    mean_probs = mean_probabilities(samples)
    raw, norm = predictive_entropy(mean_probs)
    return UncertaintyEstimate(
        mean_probs=mean_probs,
        predicted_class=int(np.argmax(mean_probs)),
        entropy_raw=raw,
        entropy_norm=norm,
    )


def flag_certainty(est: UncertaintyEstimate, threshold: float) -> UncertaintyEstimate:
    """Mark the estimate certain iff entropy_norm <= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"certainty threshold must be in [0, 1], got {threshold}")
    return replace(est, certain=bool(est.entropy_norm <= threshold))


def member_config(spec: EnsembleSpec, index: int) -> tuple[NetworkConfig, int]:
    """Config and training seed of ensemble member ``index``.

    Widths are drawn uniformly (inclusive) from the spec ranges and the
    training seed is derived from (master_seed, index), so members are
    reproducible independently of training order.
    """
    width_rng = substream(spec.master_seed, STREAM_MEMBER, index, 0)
    widths = tuple(int(width_rng.integers(lo, hi, endpoint=True)) for lo, hi in spec.width_ranges)
    train_seed = derive_seed(spec.master_seed, STREAM_MEMBER, index, 1)
    config = replace(spec.base, hidden_units=widths, seed=train_seed)
    return config, train_seed


def train_ensemble(spec: EnsembleSpec, data, log=None) -> list[Network]:
    """Train all members independently on the identical training table."""
    spec.validate()
    members = []
    for i in range(spec.members):
        config, train_seed = member_config(spec, i)
        net, history = train(config, data, train_seed)
        if log is not None:
            log(i, config, history)
        members.append(net)
    return members


# Input rows are processed in chunks sized so one chunk's sample tensor
# stays near this many floats; a constant keeps chunking (and therefore
# the dropout mask streams) reproducible across machines.
_CHUNK_BUDGET_FLOATS = 16_000_000


def predict_table(method: str, models: list[Network], features: np.ndarray,
                  passes: int, seed: int = 0) -> list[UncertaintyEstimate]:
    """Uncertainty estimates for every row of a feature matrix.

    Runs whole-table forward passes per (member, pass) with a fresh
    per-row dropout mask each pass, then summarizes each input through
    the same path as the single-input API. Mask streams are keyed by
    (seed, member, pass, chunk), so results are reproducible and
    independent of how many other rows are predicted alongside.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown UQ method {method!r}")
    if method == METHOD_MCD:
        if len(models) != 1:
            raise ValidationError("mcd predicts with exactly one network")
        if passes < 1:
            raise ValidationError(f"number of MC passes must be >= 1, got {passes}")
    else:
        if len(models) < 2:
            raise ValidationError(f"ensemble prediction needs >= 2 members, got {len(models)}")
        if method == METHOD_EMCD and passes < 1:
            raise ValidationError(f"number of MC passes must be >= 1, got {passes}")

    features = np.asarray(features, dtype=np.float64)
    for m in models:
        if features.shape[1] != m.config.input_units:
            raise ShapeError(
                f"data has {features.shape[1]} features but the model expects "
                f"{m.config.input_units}"
            )
    n = features.shape[0]
    n_members = len(models)
    per_member = 1 if method == METHOD_ENSEMBLE else passes
    stochastic = method != METHOD_ENSEMBLE
    total = n_members * per_member
    n_classes = models[0].config.output_units

    member_idx = np.repeat(np.arange(n_members, dtype=np.int64), per_member)
    pass_idx = np.tile(np.arange(per_member, dtype=np.int64), n_members)

    chunk_rows = max(1, min(n, _CHUNK_BUDGET_FLOATS // max(total * n_classes, 1)))
    estimates: list[UncertaintyEstimate] = []
    for chunk_no, start in enumerate(range(0, n, chunk_rows)):
        block = features[start : start + chunk_rows]
        tensor = np.empty((block.shape[0], total, n_classes))
        slot = 0
        for m, net in enumerate(models):
            for t in range(per_member):
                mask = None
                if stochastic:
                    rng = substream(seed, STREAM_PREDICT, m, t, chunk_no)
                    mask = sample_dropout_mask(net.config, rng, n_rows=block.shape[0])
                tensor[:, slot, :] = forward(net, block, mask)
                slot += 1
        for i in range(block.shape[0]):
            estimates.append(summarize(PredictiveSamples(
                samples=tensor[i], method=method,
                member_index=member_idx, pass_index=pass_idx,
            )))
    return estimates


DUMP_FORMAT = "frauduq-predictions"
DUMP_VERSION = 1
DUMP_COLUMNS = ("index", "method", "mean_prob_genuine", "mean_prob_fraud",
                "predicted_class", "entropy_raw", "entropy_norm", "label")


def write_dump(path_jsonl, path_csv, method: str, estimates: list[UncertaintyEstimate],
               labels, meta: dict | None = None) -> None:
    """Write the per-input prediction dump as JSON lines and CSV.

    The first JSONL line and a leading ``#`` CSV line carry the metadata
    (format version, method, seed, config digest). Column order follows
    DUMP_COLUMNS; floats use shortest round-trip formatting.
    """
    import json

    header = {"format": DUMP_FORMAT, "version": DUMP_VERSION, "method": method,
              "n": len(estimates), **(meta or {})}
    labels = list(labels) if labels is not None else [None] * len(estimates)
    if len(labels) != len(estimates):
        raise DataError("labels and estimates are misaligned")

    with open(path_jsonl, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, (est, label) in enumerate(zip(estimates, labels)):
            fh.write(json.dumps({
                "index": i,
                "mean_probs": [float(p) for p in est.mean_probs],
                "predicted_class": est.predicted_class,
                "entropy_raw": est.entropy_raw,
                "entropy_norm": est.entropy_norm,
                "label": None if label is None else int(label),
            }, sort_keys=True) + "\n")

    meta_bits = " ".join(f"{k}={v}" for k, v in sorted(header.items()))
    with open(path_csv, "w", encoding="utf-8") as fh:
        fh.write(f"# {meta_bits}\n")
        fh.write(",".join(DUMP_COLUMNS) + "\n")
        for i, (est, label) in enumerate(zip(estimates, labels)):
            fh.write(",".join([
                str(i), method,
                repr(float(est.mean_probs[0])), repr(float(est.mean_probs[1])),
                str(est.predicted_class),
                repr(est.entropy_raw), repr(est.entropy_norm),
                "" if label is None else str(int(label)),
            ]) + "\n")


def read_dump(path_jsonl) -> tuple[dict, list[UncertaintyEstimate], list]:
    """Read a JSONL prediction dump back; labels may contain None."""
    import json

    from .errors import FormatError

    estimates, labels = [], []
    with open(path_jsonl, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path_jsonl}: invalid JSONL header at offset {exc.pos}") from exc
        if header.get("format") != DUMP_FORMAT or header.get("version") != DUMP_VERSION:
            raise FormatError(f"{path_jsonl}: not a {DUMP_FORMAT} v{DUMP_VERSION} file")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                probs = np.array([float(p) for p in rec["mean_probs"]])
                est = UncertaintyEstimate(
                    mean_probs=probs,
                    predicted_class=int(rec["predicted_class"]),
                    entropy_raw=float(rec["entropy_raw"]),
                    entropy_norm=float(rec["entropy_norm"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path_jsonl}: bad record on line {line_no} ({exc})") from exc
            estimates.append(est)
            labels.append(None if rec.get("label") is None else int(rec["label"]))
    return header, estimates, labels
