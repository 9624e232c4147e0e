"""
Named verification checks: finite-difference gradient comparisons, analytic
identities and the monotonicity of the uncertainty-modulated similarity.

Each check returns (passed, detail). `run_checks` executes them in float64.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dusss.app.losses import contrastive, segmentation, uncertainty
from dusss.app.metrics import dice, miou
from dusss.app.nets import GaussianHead, GroundingDecoder, ImageEncoder, SegNetwork, TextEncoder
from dusss.app.tensor import Tensor, functional as F, gradcheck, precision
from dusss.app.training import TeacherStudent, ema_update
from dusss.models import CheckResult, GaussianEmbedding, PseudoLabel, PseudoLabelSource, SSSConfig

logger = logging.getLogger(__name__)

CheckFn = Callable[[], Tuple[bool, str]]
Builder = Callable[[np.random.Generator], Tuple[Callable[..., Tensor], Sequence[Tensor]]]

REGISTRY: Dict[str, CheckFn] = {}

GRAD_POINTS = 10
GRAD_TOL = 1e-5
EXACT_TOL = 1e-12


def check(name: str) -> Callable[[CheckFn], CheckFn]:
    def register(fn: CheckFn) -> CheckFn:
        if name in REGISTRY:
            raise ValueError(f"duplicate check name {name!r}")
        REGISTRY[name] = fn
        return fn

    return register


def select(pattern: Optional[str] = None) -> List[str]:
    names = sorted(REGISTRY)
    if not pattern:
        return names
    return [n for n in names if pattern.lower() in n.lower()]


def run_checks(pattern: Optional[str] = None) -> List[CheckResult]:
    results = []
    for name in select(pattern):
        start = time.perf_counter()
        try:
            with precision("float64"):
                passed, detail = REGISTRY[name]()
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name=name, passed=passed, detail=detail, seconds=time.perf_counter() - start))
        logger.debug("check %s: %s (%s)", name, "pass" if passed else "FAIL", detail)
    return results


def _param(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _grad_points(build: Builder, points: int = GRAD_POINTS, max_entries: Optional[int] = None) -> Tuple[bool, str]:
    worst, entries = 0.0, 0
    for point in range(points):
        rng = np.random.default_rng(1000 + point)
        fn, inputs = build(rng)
        result = gradcheck(fn, inputs, tol=GRAD_TOL, seed=point, max_entries=max_entries)
        worst = max(worst, result.max_error)
        entries += result.checked_entries
    return worst <= GRAD_TOL, f"max rel err {worst:.2e} over {points} points / {entries} entries"


def _exact(pairs: Sequence[Tuple[str, float, float]]) -> Tuple[bool, str]:
    errors = [(label, abs(got - want)) for label, got, want in pairs]
    label, worst = max(errors, key=lambda e: e[1])
    return worst <= EXACT_TOL, f"max abs err {worst:.1e} ({label})"


# -- primitive ops -------------------------------------------------------------


def _unary(op: Callable[[Tensor], Tensor], low: float = -2.0, high: float = 2.0) -> Builder:
    return lambda rng: (op, [_param(rng, 3, 4, low=low, high=high)])


def _binary(op: Callable[[Tensor, Tensor], Tensor], low: float = -2.0, high: float = 2.0) -> Builder:
    # second operand broadcasts along the first axis
    return lambda rng: (op, [_param(rng, 3, 4, low=low, high=high), _param(rng, 4, low=low, high=high)])


_PRIMITIVES: Dict[str, Builder] = {
    "add": _binary(F.add),
    "sub": _binary(F.sub),
    "mul": _binary(F.mul),
    "div": _binary(F.div, low=0.5, high=2.0),
    "exp": _unary(F.exp),
    "log": _unary(F.log, low=0.2, high=3.0),
    "sqrt": _unary(F.sqrt, low=0.2, high=3.0),
    "sigmoid": _unary(F.sigmoid, low=-4.0, high=4.0),
    "tanh": _unary(F.tanh),
    "power": _unary(lambda a: F.power(a, 3.0)),
    "sum": _unary(lambda a: F.sum(a, axis=1)),
    "mean": _unary(lambda a: F.mean(a, axis=0)),
    "max": _unary(lambda a: F.max(a, axis=1)),
    "logsumexp": _unary(lambda a: F.logsumexp(a, axis=1)),
    "l2_norm": _unary(lambda a: F.l2_norm(a, axis=1), low=0.2, high=2.0),
    "softmax": _unary(lambda a: F.softmax(a, axis=-1)),
    "reshape_transpose": _unary(lambda a: F.transpose(F.reshape(a, (2, 6)), None)),
    "getitem": _unary(lambda a: a[1:, ::2]),
    "matmul": lambda rng: (F.matmul, [_param(rng, 3, 4), _param(rng, 4, 2)]),
    "concat": lambda rng: (lambda a, b: F.concat([a, b], axis=1), [_param(rng, 2, 3), _param(rng, 2, 2)]),
    "embedding": lambda rng: (
        lambda w: F.embedding(w, np.array([[0, 2, 2], [1, 4, 0]])),
        [_param(rng, 5, 3)],
    ),
    "conv2d": lambda rng: (
        lambda x, w, b: F.conv2d(x, w, b, stride=1, padding=1),
        [_param(rng, 2, 2, 5, 5), _param(rng, 3, 2, 3, 3), _param(rng, 3)],
    ),
    "conv2d_strided": lambda rng: (
        lambda x, w: F.conv2d(x, w, None, stride=2, padding=0),
        [_param(rng, 1, 2, 6, 6), _param(rng, 2, 2, 2, 2)],
    ),
    "avg_pool2d": lambda rng: (F.avg_pool2d, [_param(rng, 2, 2, 4, 4)]),
    "upsample_bilinear2x": lambda rng: (F.upsample_bilinear2x, [_param(rng, 1, 2, 3, 4)]),
}


def _clamp_builder(rng: np.random.Generator):
    # keep every entry at least 0.05 away from the clamp bounds
    values = rng.uniform(-2.0, 2.0, size=(3, 4))
    values = np.where(np.abs(np.abs(values) - 1.0) < 0.05, values * 1.2, values)
    return (lambda a: F.clamp(a, lo=-1.0, hi=1.0)), [Tensor(values, requires_grad=True)]


_PRIMITIVES["clamp"] = _clamp_builder

for _name, _builder in _PRIMITIVES.items():
    check(f"grad.op.{_name}")(lambda b=_builder: _grad_points(b))


# -- SSS math ------------------------------------------------------------------

_SSS = SSSConfig(a=1.5, b=0.2, lam=0.8)


@check("grad.semantic_distance")
def _grad_semantic_distance() -> Tuple[bool, str]:
    return _grad_points(lambda rng: (uncertainty.semantic_distance, [_param(rng, 5), _param(rng, 5)]))


@check("grad.wasserstein2_sq")
def _grad_wasserstein() -> Tuple[bool, str]:
    def build(rng):
        def fn(mu1, sd1, mu2, sd2):
            return uncertainty.wasserstein2_sq(GaussianEmbedding(mu=mu1, sigma=sd1), GaussianEmbedding(mu=mu2, sigma=sd2))

        return fn, [_param(rng, 4), _param(rng, 4, low=0.2, high=2.0), _param(rng, 4), _param(rng, 4, low=0.2, high=2.0)]

    return _grad_points(build)


@check("grad.sim_hat_pairwise")
def _grad_sim_hat() -> Tuple[bool, str]:
    def build(rng):
        def fn(sa, sb, mu_a, sd_a, mu_b, sd_b):
            scores = uncertainty.pairwise_scores(
                sa, sb, GaussianEmbedding(mu=mu_a, sigma=sd_a), GaussianEmbedding(mu=mu_b, sigma=sd_b), _SSS
            )
            return scores.sim_hat

        n, d_s, d_u = 3, 4, 3
        return fn, [
            _param(rng, n, d_s),
            _param(rng, n, d_s),
            _param(rng, n, d_u, low=-0.3, high=0.3),
            _param(rng, n, d_u, low=0.5, high=1.5),
            _param(rng, n, d_u, low=-0.3, high=0.3),
            _param(rng, n, d_u, low=0.5, high=1.5),
        ]

    return _grad_points(build)


@check("grad.gaussian_head_d2w")
def _grad_head_d2w() -> Tuple[bool, str]:
    """encode -> Gaussian head -> squared 2-Wasserstein, differentiated w.r.t. every parameter"""

    def build(rng):
        encoder = ImageEncoder(8, 4, 4, 3, rng)
        head = GaussianHead(4, 3, rng)
        images = rng.uniform(0.0, 1.0, size=(2, 8, 8))
        params = encoder.parameters() + head.parameters()

        def fn(*_):
            g = head(encoder(images).cls)
            first = GaussianEmbedding(mu=g.mu[0], sigma=g.sigma[0])
            second = GaussianEmbedding(mu=g.mu[1], sigma=g.sigma[1])
            return uncertainty.wasserstein2_sq(first, second)

        return fn, params

    return _grad_points(build, points=20, max_entries=6)


# -- contrastive losses ----------------------------------------------------------


@check("grad.info_nce")
def _grad_info_nce() -> Tuple[bool, str]:
    def build(rng):
        return (lambda s, log_tau: contrastive.info_nce(s, F.exp(log_tau))), [
            _param(rng, 4, 4),
            Tensor(np.array(math.log(rng.uniform(0.3, 1.0))), requires_grad=True),
        ]

    return _grad_points(build)


@check("grad.cmc_loss")
def _grad_cmc() -> Tuple[bool, str]:
    return _grad_points(lambda rng: ((lambda a, b: contrastive.cmc_loss(a, b, 0.5)), [_param(rng, 4, 4), _param(rng, 4, 4)]))


@check("grad.imc_loss")
def _grad_imc() -> Tuple[bool, str]:
    return _grad_points(lambda rng: ((lambda a, b: contrastive.imc_loss(a, b, 0.7)), [_param(rng, 3, 3), _param(rng, 3, 3)]))


@check("grad.tg_loss")
def _grad_tg() -> Tuple[bool, str]:
    """text mask -> mask pooling -> bidirectional InfoNCE"""

    def build(rng):
        def fn(v_f, t_f):
            y = segmentation.text_mask_probs(v_f, t_f)
            return contrastive.tg_loss(contrastive.mask_pooled_features(v_f, y), t_f, 0.5)

        return fn, [_param(rng, 3, 4, 4, 4), _param(rng, 3, 4)]

    return _grad_points(build)


@check("grad.grounding_decoder")
def _grad_grounding() -> Tuple[bool, str]:
    def build(rng):
        decoder = GroundingDecoder(3, 2, 8, rng)
        grid = _param(rng, 1, 3, 2, 2)
        return (lambda x, *_: decoder(x)), [grid] + decoder.parameters()

    return _grad_points(build, max_entries=12)


@check("grad.text_encoder")
def _grad_text_encoder() -> Tuple[bool, str]:
    def build(rng):
        encoder = TextEncoder(vocab_size=6, pad_id=0, l_max=5, d=4, d_s=3, rng=rng)
        ids = np.array([[1, 3, 4, 0, 0], [1, 2, 5, 3, 0]])

        def fn(*_):
            out = encoder(ids)
            return F.sum(out.semantic) + F.sum(F.tanh(out.t_f))

        return fn, encoder.parameters()

    return _grad_points(build, max_entries=8)


# -- segmentation losses -------------------------------------------------------


@check("grad.sup_loss")
def _grad_sup() -> Tuple[bool, str]:
    def build(rng):
        gt = (rng.random((2, 4, 4)) < 0.5).astype(np.float64)
        return (lambda z: segmentation.sup_loss(F.sigmoid(z), gt)), [_param(rng, 2, 4, 4, low=-3.0, high=3.0)]

    return _grad_points(build)


@check("grad.semi_losses")
def _grad_semi() -> Tuple[bool, str]:
    def build(rng):
        teacher = PseudoLabel(map=rng.uniform(0.0, 1.0, size=(2, 4, 4)), source=PseudoLabelSource.TEACHER)
        text = PseudoLabel(map=rng.uniform(0.0, 1.0, size=(2, 4, 4)), source=PseudoLabelSource.TEXT)
        merged = segmentation.merge_pseudo(teacher, text)
        return (lambda z: segmentation.semi_losses(F.sigmoid(z), merged, text)["l_semi"]), [
            _param(rng, 2, 4, 4, low=-3.0, high=3.0)
        ]

    return _grad_points(build)


@check("grad.seg_network")
def _grad_seg() -> Tuple[bool, str]:
    def build(rng):
        net = SegNetwork(2, rng)
        images = rng.uniform(0.0, 1.0, size=(1, 4, 4))
        gt = (rng.random((1, 4, 4)) < 0.5).astype(np.float64)
        return (lambda *_: segmentation.sup_loss(F.sigmoid(net(images)), gt)), net.parameters()

    return _grad_points(build, points=10, max_entries=4)


# -- analytic identities -------------------------------------------------------


@check("identity.wasserstein_self_zero")
def _wasserstein_self() -> Tuple[bool, str]:
    rng = np.random.default_rng(1)
    pairs = []
    for i in range(10):
        g = GaussianEmbedding(mu=rng.normal(size=6), sigma=rng.uniform(0.1, 2.0, size=6))
        pairs.append((f"draw {i}", uncertainty.wasserstein2_sq(g, g).item(), 0.0))
    return _exact(pairs)


@check("identity.sss_factor_unit")
def _sss_unit() -> Tuple[bool, str]:
    pairs = [(f"lambda={lam}", uncertainty.sss_factor(0.0, SSSConfig(lam=lam)).item(), 1.0) for lam in (0.1, 1.0, 7.5)]
    d_u = uncertainty.uncertainty_level(0.0, SSSConfig(a=2.0, b=0.0))
    pairs.append(("zero uncertainty", uncertainty.sss_factor(uncertainty.relative_uncertainty(d_u, 0.7), _SSS).item(), 1.0))
    return _exact(pairs)


@check("identity.uncertain_sim_fixed_points")
def _sim_hat_fixed() -> Tuple[bool, str]:
    rng = np.random.default_rng(2)
    pairs = []
    for sim in rng.uniform(-1.0, 1.0, size=10):
        pairs.append((f"D=1 sim={sim:.3f}", uncertainty.uncertain_sim(sim, 1.0).item(), float(sim)))
    for d in rng.uniform(1e-3, 1.0, size=10):
        pairs.append((f"sim=1 D={d:.3f}", uncertainty.uncertain_sim(1.0, d).item(), 1.0))
    return _exact(pairs)


@check("identity.info_nce_uniform")
def _info_nce_uniform() -> Tuple[bool, str]:
    pairs = []
    for n in (2, 4, 8):
        for value in (-0.5, 0.0, 0.9):
            scores = Tensor(np.full((n, n), value))
            pairs.append((f"N={n} s={value}", contrastive.info_nce(scores, 0.07).item(), math.log(n)))
    return _exact(pairs)


@check("identity.cmc_recomposition")
def _cmc_recompose() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    pairs = []
    for i in range(5):
        a, b = Tensor(rng.uniform(-1, 1, (5, 5))), Tensor(rng.uniform(-1, 1, (5, 5)))
        whole = contrastive.cmc_loss(a, b, 0.1).item()
        parts = 0.5 * (contrastive.info_nce(a, 0.1).item() + contrastive.info_nce(b, 0.1).item())
        pairs.append((f"batch {i}", whole, parts))
    return _exact(pairs)


@check("identity.semi_recomposition")
def _semi_recompose() -> Tuple[bool, str]:
    rng = np.random.default_rng(4)
    pairs = []
    for i in range(5):
        y_s = Tensor(rng.uniform(0.05, 0.95, (2, 4, 4)))
        text = PseudoLabel(map=rng.uniform(0, 1, (2, 4, 4)), source=PseudoLabelSource.TEXT)
        merged = PseudoLabel(map=rng.uniform(0.5, 0.88, (2, 4, 4)), source=PseudoLabelSource.MERGED)
        out = segmentation.semi_losses(y_s, merged, text)
        pairs.append((f"batch {i}", out["l_semi"].item(), 0.5 * (out["l_semi_merged"].item() + out["l_semi_text"].item())))
    return _exact(pairs)


@check("identity.ema_endpoints")
def _ema_endpoints() -> Tuple[bool, str]:
    rng = np.random.default_rng(5)
    student = SegNetwork(2, rng)
    ts = TeacherStudent(student, alpha=0.5, teacher=SegNetwork(2, rng))
    before = {n: p.data.copy() for n, p in ts.teacher.named_parameters()}
    ema_update(ts, alpha=1.0)
    unchanged = max(float(np.max(np.abs(p.data - before[n]))) for n, p in ts.teacher.named_parameters())
    ema_update(ts, alpha=0.0)
    copied = max(
        float(np.max(np.abs(p.data - s.data)))
        for (_, p), (_, s) in zip(ts.teacher.named_parameters(), ts.student.named_parameters())
    )
    return _exact([("alpha=1 keeps teacher", unchanged, 0.0), ("alpha=0 copies student", copied, 0.0)])


# -- properties ------------------------------------------------------------------


@check("monotonicity.uncertain_sim_in_d_u")
def _monotonicity() -> Tuple[bool, str]:
    """With sim < 1 and D_s fixed, the modulated similarity strictly increases with D_u"""
    rng = np.random.default_rng(6)
    n = 1000
    sim = rng.uniform(-1.0, 0.99, n)
    d_s = rng.uniform(0.5, 2.0, n)
    d_u = rng.uniform(0.0, 2.0, n)
    d_u_more = d_u + rng.uniform(0.01, 1.0, n)
    cfg = SSSConfig()

    def sim_hat(level: np.ndarray) -> np.ndarray:
        factor = uncertainty.sss_factor(uncertainty.relative_uncertainty(level, d_s), cfg)
        return uncertainty.uncertain_sim(sim, factor).numpy()

    violations = int(np.sum(~(sim_hat(d_u_more) > sim_hat(d_u))))
    return violations == 0, f"{violations} violations in {n} triples"


@check("metrics.hand_cases")
def _metric_cases() -> Tuple[bool, str]:
    pred = np.array([[1, 1, 0], [0, 0, 0]])
    gt = np.array([[1, 0, 1], [0, 0, 0]])
    empty = np.zeros((2, 3))
    return _exact(
        [
            ("dice overlap", dice(pred, gt), 0.5),
            ("iou overlap", miou(pred, gt), 1.0 / 3.0),
            ("dice both empty", dice(empty, empty), 1.0),
            ("iou both empty", miou(empty, empty), 1.0),
        ]
    )


@check("metrics.dice_ge_miou")
def _dice_ge_miou() -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(1000):
        p, y = rng.random((8, 8)) < rng.random(), rng.random((8, 8)) < rng.random()
        bad += dice(p, y) < miou(p, y)
    return bad == 0, f"{bad} of 1000 random pairs with dice < miou"
