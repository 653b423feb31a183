"""64-bit gradient-check suite behind `diffbev gradcheck`.

Every differentiable primitive, the three losses, the view transformer,
attention, the decoder, the denoiser and the full composed training loss
are compared against central finite differences.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from diffbev.core import functional as F
from diffbev.core.config import TrainConfig
from diffbev.core.gradcheck import GradcheckReport, gradcheck
from diffbev.core.tensor import Tensor, matmul, reduce_sum
from diffbev.core.types import EncoderMode
from diffbev.data.scene import SceneSpec, generate_scene
from diffbev.geometry.camera import BEVGrid, CameraRig, DepthDistribution
from diffbev.geometry.projection import depth_ground_truth
from diffbev.geometry.view_transformer import SemanticFromDepth, lift_splat
from diffbev.model.decoder import SegDecoder
from diffbev.model.denoiser import Denoiser
from diffbev.model.fusion import CrossAttention, cross_attend
from diffbev.model.losses import LossWeights, loss_depth, loss_diff, loss_wce
from diffbev.model.pipeline import DiffBEV
from diffbev.nn.module import Module

logger = logging.getLogger(__name__)

# Share of entries checked per tensor in the composed model checks.
MODEL_FRACTION = 0.02

TOY_CONFIG = TrainConfig(
    image_size=16,
    bev_size=4,
    bev_extent=8.0,
    bev_channels=4,
    denoiser_base=4,
    depth_bins=4,
    depth_min=1.0,
    depth_max=9.0,
    timesteps=10,
    n_sample_steps=2,
    train_refine_steps=2,
    iterations=2,
    warmup_iters=1,
)


@dataclass
class GradCase:
    """A scalar computation and the tensors whose gradients are checked."""

    f: Callable[[], Tensor]
    params: dict[str, Tensor]
    shadow: list[Tensor] = field(default_factory=list)
    fraction: float = 1.0


def _t(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale)


def _projection(rng: np.random.Generator, shape: tuple[int, ...]) -> npt.NDArray[np.float64]:
    """Fixed random weights that turn a tensor output into a scalar."""
    return rng.standard_normal(shape)


def _scalar(out: Tensor, weights: npt.NDArray[np.float64]) -> Tensor:
    return reduce_sum(out * Tensor(weights))


def _module_case(module: Module, f: Callable[[], Tensor], inputs: dict[str, Tensor], fraction: float = 1.0) -> GradCase:
    params: dict[str, Tensor] = dict(inputs)
    params.update(module.named_parameters())
    return GradCase(f, params, shadow=[b for _, b in module.named_buffers()], fraction=fraction)


def _toy_rig() -> CameraRig:
    return CameraRig.from_pinhole(16, 90.0, 1.5, 10.0, 1.0, 9.0, 4)


def cases(seed: int = 0) -> Iterator[tuple[str, GradCase]]:
    """Yield (name, case) for every check, each built from its own generator."""
    rng = np.random.default_rng(seed)

    a, b = _t(rng, 3, 4), _t(rng, 4)
    w = _projection(rng, (3, 4))
    yield "elementwise", GradCase(lambda: _scalar(a * b + a - b, w), {"a": a, "b": b})

    m1, m2 = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
    w_mm = _projection(rng, (2, 3, 5))
    yield "matmul", GradCase(lambda: _scalar(matmul(m1, m2), w_mm), {"a": m1, "b": m2})

    x, k, bias = _t(rng, 2, 6, 6), _t(rng, 3, 2, 3, 3), _t(rng, 3)
    w_conv = _projection(rng, (3, 6, 6))
    yield "conv2d", GradCase(lambda: _scalar(F.conv2d(x, k, bias, padding=1), w_conv), {"x": x, "w": k, "bias": bias})

    xn, scale, shift = _t(rng, 3, 4, 4), _t(rng, 3), _t(rng, 3)
    mean, var = Tensor(np.zeros(3)), Tensor(np.ones(3))
    w_norm = _projection(rng, (3, 4, 4))
    yield "norm2d", GradCase(
        lambda: _scalar(F.norm2d(xn, scale, shift, mean, var, training=True), w_norm),
        {"x": xn, "scale": scale, "shift": shift},
        shadow=[mean, var],
    )

    xs = _t(rng, 3, 5)
    w_soft = _projection(rng, (3, 5))
    yield "softmax", GradCase(lambda: _scalar(F.softmax(xs, axis=1), w_soft), {"x": xs})

    xa = Tensor(rng.uniform(0.2, 2.0, size=(4, 4)) * rng.choice([-1.0, 1.0], size=(4, 4)))
    w_act = _projection(rng, (4, 4))
    yield "relu", GradCase(lambda: _scalar(F.relu(xa), w_act), {"x": xa})
    yield "sigmoid", GradCase(lambda: _scalar(F.sigmoid(xa), w_act), {"x": xa})
    xp = Tensor(rng.uniform(0.5, 2.0, size=(4, 4)))
    yield "log", GradCase(lambda: _scalar(F.log(xp), w_act), {"x": xp})

    xb = _t(rng, 2, 3, 3)
    w_bil = _projection(rng, (2, 5, 7))
    yield "bilinear_interpolate", GradCase(lambda: _scalar(F.bilinear_interpolate(xb, (5, 7)), w_bil), {"x": xb})

    xq = _t(rng, 2, 4, 4)
    w_pool = _projection(rng, (2, 2, 2))
    yield "avg_pool2d", GradCase(lambda: _scalar(F.avg_pool2d(xq, 2), w_pool), {"x": xq})

    values = _t(rng, 2, 6)
    index = np.array([0, 2, -1, 2, 1, 0])
    w_scatter = _projection(rng, (2, 3))
    yield "scatter_add", GradCase(lambda: _scalar(F.scatter_add(values, index, 3), w_scatter), {"values": values})

    c1, c2 = _t(rng, 2, 3), _t(rng, 1, 3)
    w_cat = _projection(rng, (3, 3))
    yield "concat", GradCase(lambda: _scalar(F.concat([c1, c2], axis=0), w_cat), {"a": c1, "b": c2})

    xt = _t(rng, 2, 3, 4)
    w_tr = _projection(rng, (4, 2, 3))
    yield "transpose", GradCase(lambda: _scalar(F.transpose(xt, (2, 0, 1)), w_tr), {"x": xt})

    logits = _t(rng, 2, 8, 8)
    labels = (rng.random((2, 8, 8)) < 0.3).astype(np.float64)
    mask = (rng.random((8, 8)) < 0.8).astype(np.float64)
    yield "loss_wce", GradCase(lambda: loss_wce(logits, labels, mask, np.array([1.0, 2.0])), {"logits": logits})

    depth_logits = _t(rng, 3, 4, 4)
    onehot = np.eye(3)[rng.integers(0, 3, size=(8, 8))].transpose(2, 0, 1)
    depth_mask = rng.random((8, 8)) < 0.7
    yield "loss_depth", GradCase(
        lambda: loss_depth(F.softmax(depth_logits, axis=0), onehot, depth_mask),
        {"depth_logits": depth_logits},
    )

    eps_true = rng.standard_normal((2, 4, 4))
    eps_hat = _t(rng, 2, 4, 4)
    yield "loss_diff", GradCase(lambda: loss_diff(eps_true, eps_hat), {"eps_hat": eps_hat})

    rig = _toy_rig()
    grid = BEVGrid.centered(8.0, 4, 3)
    features, depth_logits2 = _t(rng, 3, 2, 2), _t(rng, 4, 2, 2)
    w_splat = _projection(rng, (3, 4, 4))
    yield "lift_splat", GradCase(
        lambda: _scalar(lift_splat(features, DepthDistribution(F.softmax(depth_logits2, axis=0)), rig, grid), w_splat),
        {"features": features, "depth_logits": depth_logits2},
    )

    semantic = SemanticFromDepth(4, 3, rng)
    probs_in = _t(rng, 4, 2, 2)
    yield "semantic_from_depth", _module_case(
        semantic, lambda: _scalar(semantic(F.softmax(probs_in, axis=0), grid), w_splat), {"depth_logits": probs_in}
    )

    attention = CrossAttention(3, rng)
    bev, diff_out = _t(rng, 3, 2, 2), _t(rng, 3, 2, 2)
    w_att = _projection(rng, (3, 2, 2))
    yield "cross_attention", _module_case(
        attention, lambda: _scalar(cross_attend(bev, diff_out, attention), w_att), {"bev": bev, "diff_out": diff_out}
    )

    decoder = SegDecoder(4, 2, rng, n_blocks=2)
    dec_in = _t(rng, 4, 8, 8)
    w_dec = _projection(rng, (2, 8, 8))
    yield "decoder", _module_case(decoder, lambda: _scalar(decoder(dec_in), w_dec), {"x": dec_in})

    for mode in EncoderMode:
        denoiser = Denoiser(3, 2, mode, rng)
        x_noisy, x_cond = _t(rng, 3, 4, 4), _t(rng, 3, 4, 4)
        w_den = _projection(rng, (3, 4, 4))
        yield f"denoiser[{mode.value}]", _module_case(
            denoiser,
            lambda d=denoiser, xn=x_noisy, xc=x_cond, wd=w_den: _scalar(d.denoise(xn, 5, xc), wd),
            {"x_t": x_noisy, "x_cond": x_cond},
            fraction=0.2,
        )

    yield "composed_loss", composed_case(seed)


def composed_case(seed: int = 0) -> GradCase:
    """Full training loss of a toy model on one generated scene."""
    config = TOY_CONFIG
    model = DiffBEV(config, np.random.default_rng(seed))
    scene = generate_scene(seed, SceneSpec.from_config(config))
    target = depth_ground_truth(scene.rig, scene.points)
    weights = LossWeights(lambda1=config.lambda1, lambda2=config.lambda2, class_weights=np.ones(config.n_classes))

    def f() -> Tensor:
        loss, _ = model.training_losses(
            scene.image,
            scene.bev_labels,
            scene.valid_mask,
            target.onehot,
            target.mask,
            weights,
            np.random.default_rng([seed, 1]),
        )
        return loss

    return GradCase(f, dict(model.named_parameters()), shadow=[b for _, b in model.named_buffers()], fraction=MODEL_FRACTION)


def run_gradsuite(seed: int = 0, only: str | None = None) -> list[GradcheckReport]:
    """Run every case (or those whose name contains `only`) and return the reports."""
    reports = []
    for name, case in cases(seed):
        if only is not None and only not in name:
            continue
        report = gradcheck(
            case.f,
            case.params,
            name=name,
            fraction=case.fraction,
            rng=np.random.default_rng(seed),
            shadow=case.shadow,
        )
        logger.info(report.summary())
        reports.append(report)
    return reports
