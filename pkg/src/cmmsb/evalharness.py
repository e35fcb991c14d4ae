"""Cross-validation folds, posterior predictive and link-prediction metrics."""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .inference import run_chain
from .mathkernel import DomainError, rng_stream

METRICS = ("train_error", "test_error", "test_loglik", "auc")


@dataclass
class CvSplit:
    """``fold_of[i, j]`` is the test fold of observed entry (i, j), -1 elsewhere."""

    fold_count: int
    fold_of: np.ndarray

    def test_mask(self, fold):
        return self.fold_of == fold

    def train_mask(self, fold):
        return (self.fold_of >= 0) & (self.fold_of != fold)


def make_folds(data, fold_count=10, rng=None):
    """Split each node's observed outgoing entries evenly across folds.

    Within a row the entries are shuffled and dealt round-robin; the deal
    continues from row to row so fold sizes also stay balanced overall.
    """
    if fold_count < 2:
        raise DomainError("fold_count must be at least 2")
    rng = rng if rng is not None else rng_stream(0)
    obs = data.observed_mask()
    fold_of = np.full(obs.shape, -1, dtype=np.int64)
    nxt = int(rng.integers(fold_count))
    for i in range(data.n):
        cols = np.nonzero(obs[i])[0]
        cols = cols[rng.permutation(cols.shape[0])]
        fold_of[i, cols] = (nxt + np.arange(cols.shape[0])) % fold_count
        nxt = (nxt + cols.shape[0]) % fold_count
    return CvSplit(fold_count, fold_of)


def posterior_predictive(trace):
    """Mean predictive edge probability over the post-burn-in iterations."""
    if trace.n_samples < 1:
        raise DomainError("trace has no post-burn-in samples")
    return trace.pred_sum / trace.n_samples


def _select(pred, truth, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("metric mask selects no entries")
    p = np.asarray(pred, dtype=np.float64)[mask]
    t = np.asarray(truth)[mask]
    if not np.isin(t, (0, 1)).all():
        raise DomainError("masked truth entries must be observed (0 or 1)")
    return p, t


def zero_one_error(pred, truth, mask):
    """Fraction of masked entries misclassified at threshold 0.5 (ties predict 1)."""
    p, t = _select(pred, truth, mask)
    return float(np.mean((p >= 0.5).astype(np.int8) != t))


def test_log_likelihood(pred, truth, mask):
    """Sum over masked entries of e ln p + (1 - e) ln(1 - p)."""
    p, t = _select(pred, truth, mask)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.where(t == 1, np.log(p), np.log1p(-p))))


def auc(pred, truth, mask):
    """Mann-Whitney AUC with average ranks for ties; NaN when one class is absent."""
    p, t = _select(pred, truth, mask)
    n1 = int(t.sum())
    n0 = t.shape[0] - n1
    if n1 == 0 or n0 == 0:
        return math.nan
    ranks = rankdata(p)
    return float((ranks[t == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass
class MetricsReport:
    per_fold: dict
    n_test: list

    def summary(self):
        out = {}
        for name in METRICS:
            vals = np.array(self.per_fold[name], dtype=np.float64)
            ok = vals[~np.isnan(vals)]
            out[name] = {
                "mean": float(ok.mean()) if ok.size else None,
                "std": float(ok.std(ddof=1)) if ok.size > 1 else None,
            }
        return out

    def to_dict(self):
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "folds": len(self.n_test),
            "per_fold": {k: [clean(float(x)) for x in self.per_fold[k]] for k in METRICS},
            "n_test": [int(x) for x in self.n_test],
            "summary": self.summary(),
        }


def evaluate_fold(data, subgroups, cfg, split, fold):
    """Fit on every fold but ``fold`` and score it; returns a metrics dict."""
    test = split.test_mask(fold)
    train = split.train_mask(fold)
    trace = run_chain(data.without(test), subgroups, cfg, rng=rng_stream(cfg.seed, fold + 1))
    pred = posterior_predictive(trace)
    truth = data.values
    return {
        "train_error": zero_one_error(pred, truth, train),
        "test_error": zero_one_error(pred, truth, test),
        "test_loglik": test_log_likelihood(pred, truth, test),
        "auc": auc(pred, truth, test),
        "n_test": int(test.sum()),
    }


def _fold_job(args):
    return evaluate_fold(*args)


def default_workers(fold_count):
    env = os.environ.get("CMMSB_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise DomainError(f"CMMSB_WORKERS must be an integer, got {env!r}") from None
        if w < 1:
            raise DomainError("CMMSB_WORKERS must be at least 1")
        return w
    return fold_count


def cross_validate(data, subgroups, cfg, fold_count=10, workers=None):
    """Independent chains per fold; results do not depend on ``workers``."""
    split = make_folds(data, fold_count, rng_stream(cfg.seed, 0))
    workers = default_workers(fold_count) if workers is None else workers
    jobs = [(data, subgroups, cfg, split, f) for f in range(fold_count)]
    if workers <= 1:
        results = [_fold_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, fold_count)) as ex:
            results = list(ex.map(_fold_job, jobs))
    per_fold = {k: [r[k] for r in results] for k in METRICS}
    return MetricsReport(per_fold, [r["n_test"] for r in results])
