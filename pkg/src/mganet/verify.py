"""Self-check suite: gradient checks, index and loop oracles, shape pipeline, metric fixtures."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterator, Sequence

import numpy as np

from . import functional as F
from . import oracles
from .config import ConvBlockVariant, EvalConfig, ModelConfig
from .conv_blocks import ConvBlock
from .events import read_annotations
from .features import log_mel
from .gradcheck import grad_check, weighted_sum
from .mga import LDSA, FrameContext, RelativeSelfAttention
from .metric_fixtures import CASES
from .metrics import event_based_f1
from .model import MGANet
from .spatial_shift import SpatialShift, shift1, shift2
from .tensor import Tensor, _record, concat, no_grad, reshape

GRAD_TOL = 1e-3
LDSA_TOL = 1e-9


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}\t{self.suite}\t{self.name}\t{self.detail}"


@contextlib.contextmanager
def corrupted_ldsa_backward(scale: float = 1.5) -> Iterator[None]:
    """Negative control: swap in a window-sum kernel whose weight gradient is off by ``scale``."""
    original = F.local_window_sum

    def broken(weights: Tensor, values: Tensor) -> Tensor:
        out = original(weights, values)
        if out._backward is None:
            return out
        inner = out._backward
        return _record(out.data, (weights, values), lambda g: (scale * inner(g)[0], inner(g)[1]), "local_window_sum")

    F.local_window_sum = broken
    try:
        yield
    finally:
        F.local_window_sum = original


def _module_check(name: str, module, run: Callable[[Tensor], Tensor], x: Tensor) -> CheckResult:
    params = module.parameters()
    err = grad_check(lambda x, *_: weighted_sum(run(x)), [x] + params)
    return CheckResult("grad", name, err <= GRAD_TOL, f"max rel err {err:.2e}")


def tiny_gradcheck_config(**overrides) -> ModelConfig:
    """TINY-shaped network on an 8x8 map with channels 2 -> 4, small enough for exhaustive finite differences."""
    base = dict(
        n_classes=2,
        channels=(2, 4),
        pools=((2, 2), (1, 4)),
        n_frames=8,
        n_mels=8,
        dropout=0.0,
        mga={"d": 4, "heads": 2, "gru_hidden": 3, "max_len": 8},
    )
    base.update(overrides)
    return ModelConfig.tiny(**base)


def gradient_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for variant in ConvBlockVariant:
        block = ConvBlock(rng, 2, 4, variant)
        x = Tensor(rng.standard_normal((2, 2, 5, 5)))
        results.append(
            _module_check(f"conv block {variant.value}", block, lambda x: block(x, train=True, update_stats=False), x)
        )
    ss = SpatialShift(rng, 4)
    results.append(_module_check("spatial shift", ss, ss, Tensor(rng.standard_normal((2, 4, 3, 3)))))
    ra = RelativeSelfAttention(rng, 6, 2, 8)
    ra.u.data[:] = 0.1 * rng.standard_normal(ra.u.shape)
    ra.v.data[:] = 0.1 * rng.standard_normal(ra.v.shape)
    results.append(_module_check("relative attention", ra, ra, Tensor(rng.standard_normal((2, 5, 6)))))
    ldsa = LDSA(rng, 6, 3)
    results.append(_module_check("ldsa", ldsa, ldsa, Tensor(rng.standard_normal((2, 5, 6)))))
    frame = FrameContext(rng, 6, 5)
    results.append(_module_check("bigru stage", frame, frame, Tensor(rng.standard_normal((2, 4, 6)))))
    model = MGANet(tiny_gradcheck_config(), seed=seed)
    results.append(
        _module_check(
            "tiny model",
            model,
            lambda x: _both_heads(model(x, train=True, update_stats=False)),
            Tensor(rng.standard_normal((2, 8, 8))),
        )
    )
    return results


def _both_heads(out) -> Tensor:
    n = out.weak.shape[0]
    return concat([reshape(out.strong, (n, -1)), out.weak], axis=1)


def shift_suite(n_tensors: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(n_tensors):
        c = int(rng.choice([4, 8]))
        t, f = (int(v) for v in rng.integers(1, 7, size=2))
        # the first draws pin the degenerate extents: 1x1 must come back unchanged
        t, f = ((1, 1), (1, f), (t, 1))[i] if i < 3 else (t, f)
        x = rng.standard_normal((c, t, f))
        for name, fast, slow in (("shift1", shift1, oracles.shift1), ("shift2", shift2, oracles.shift2)):
            out = fast(Tensor(x)).data
            if not np.array_equal(out, slow(x)) or (t == f == 1 and not np.array_equal(out, x)):
                bad.append(f"{name} C={c} T={t} F={f}")
    detail = f"{2 * n_tensors} comparisons incl. T=1/F=1" + (f", mismatches: {bad[:3]}" if bad else "")
    return [CheckResult("shift", "index oracle, bit-exact", not bad, detail)]


def ldsa_suite(n_draws: int = 60, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_draws):
        t, d = (int(v) for v in rng.integers(1, 9, size=2))
        c = (1, 3, 5)[i % 3]
        layer = LDSA(rng, d, c)
        x = rng.standard_normal((t, d))
        with no_grad():
            fast = layer(Tensor(x)).data
        slow = oracles.ldsa(x, layer.W1.data, layer.W2.data, layer.W3.data, layer.Wo.data)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    return [CheckResult("ldsa", "loop oracle", worst <= LDSA_TOL, f"max abs diff {worst:.1e} over {n_draws} draws")]


def shape_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    feats = log_mel(0.1 * rng.standard_normal(160000)).values
    results.append(CheckResult("shape", "10 s clip -> 496x64 features", feats.shape == (496, 64), str(feats.shape)))
    model = MGANet(ModelConfig.tiny(), seed=seed)
    with no_grad():
        out = model(feats)
        h = model.mga[0].global_ctx.ln(model.embed(feats))
        weights, _ = model.mga[0].global_ctx.attention(h)
    results.append(
        CheckResult(
            "shape",
            "strong [124, 10], weak [10]",
            out.strong.shape == (124, 10) and out.weak.shape == (10,),
            f"{out.strong.shape} {out.weak.shape}",
        )
    )
    row_err = float(np.max(np.abs(weights.data.sum(axis=-1) - 1.0)))
    results.append(CheckResult("shape", "attention rows sum to 1", row_err <= 1e-9, f"max dev {row_err:.1e}"))
    probs = np.concatenate([out.strong.data.ravel(), out.weak.data.ravel()])
    results.append(
        CheckResult("shape", "head outputs in (0, 1)", bool(np.all((probs > 0) & (probs < 1))), f"{probs.size} values")
    )
    return results


def fixture_paths() -> tuple:
    root = resources.files("mganet") / "data"
    return root / "fixture_refs.tsv", root / "fixture_preds.tsv", root / "fixture_expected.tsv"


def metric_suite() -> list[CheckResult]:
    results = []
    for case in CASES:
        report = event_based_f1(case.refs, case.preds, EvalConfig(), case.classes)
        got = {c: (s.tp, s.fp, s.fn) for c, s in report.per_class.items()}
        ok = got == case.counts and abs(report.macro_f1 - case.macro_f1) <= 1e-12
        results.append(CheckResult("metric", case.name, ok, f"{got} macro {report.macro_f1:.4f}"))
    refs_path, preds_path, expected_path = fixture_paths()
    report = event_based_f1(read_annotations(refs_path), read_annotations(preds_path), EvalConfig())
    expected = expected_path.read_text().splitlines()
    results.append(CheckResult("metric", "shipped TSV fixture", report.lines() == expected, f"macro {report.macro_f1:.4f}"))
    return results


SUITES = {
    "grad": gradient_suite,
    "shift": shift_suite,
    "ldsa": ldsa_suite,
    "shape": shape_suite,
    "metric": metric_suite,
}


def run_all(
    seed: int = 0,
    corrupt_ldsa: bool = False,
    echo: Callable[[str], None] | None = None,
    suites: Sequence[str] | None = None,
) -> list[CheckResult]:
    """Run the named suites (all by default); with ``corrupt_ldsa`` the window-sum backward is deliberately broken."""
    results = []
    guard = corrupted_ldsa_backward() if corrupt_ldsa else contextlib.nullcontext()
    with guard:
        for name, suite in SUITES.items():
            if suites and name not in suites:
                continue
            rows = suite(seed=seed) if name != "metric" else suite()
            if echo:
                for row in rows:
                    echo(row.line())
            results.extend(rows)
    return results
