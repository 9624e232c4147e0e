"""Model construction and checkpoint round trips shared by the services"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from config.config import ModelSettings
from dusss.app.nets import SegNetwork, VisionLanguageModel
from dusss.app.seeding import derive_rng
from dusss.app.tensor import precision
from dusss.errors import CheckpointError
from dusss.models import Vocabulary
from dusss.repository import checkpoint_repo_ins


def build_vlm(model: ModelSettings, vocab: Vocabulary, seed: int) -> VisionLanguageModel:
    return VisionLanguageModel(
        image_size=model.image_size,
        patch=model.patch,
        d=model.d,
        d_s=model.d_s,
        d_u=model.d_u,
        vocab_size=len(vocab),
        pad_id=vocab.pad_id,
        l_max=model.l_max,
        rng=derive_rng(seed, "vlm"),
        tau_init=model.tau_init,
    )


def build_seg(model: ModelSettings, seed: int) -> SegNetwork:
    return SegNetwork(model.seg_channels, derive_rng(seed, "segnet"))


def save_vlm(path: Union[str, Path], vlm: VisionLanguageModel, model: ModelSettings, vocab: Vocabulary, seed: int) -> Path:
    meta = {"kind": "vlm", "model": model.model_dump(mode="json"), "vocab": vocab.tokens, "seed": seed}
    return checkpoint_repo_ins.save(path, vlm.state_dict(), meta)


def load_vlm(path: Union[str, Path]) -> Tuple[VisionLanguageModel, ModelSettings, Vocabulary, Dict[str, Any]]:
    state, meta = checkpoint_repo_ins.load(path)
    if meta.get("kind") != "vlm":
        raise CheckpointError(f"{path}: expected a vision-language checkpoint, found {meta.get('kind')!r}")
    model = ModelSettings.model_validate(meta["model"])
    vocab = Vocabulary(tokens=meta["vocab"])
    with precision(model.dtype):
        vlm = build_vlm(model, vocab, int(meta.get("seed", 0)))
    vlm.load_state_dict(state)
    return vlm, model, vocab, meta


def save_segmenter(
    path: Union[str, Path],
    student: SegNetwork,
    model: ModelSettings,
    seed: int,
    vlm: Optional[VisionLanguageModel] = None,
    vocab: Optional[Vocabulary] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Student weights under "student.", the frozen VLM (if any) under "vlm." """
    state = {f"student.{k}": v for k, v in student.state_dict().items()}
    if vlm is not None:
        state.update({f"vlm.{k}": v for k, v in vlm.state_dict().items()})
    meta = {
        "kind": "seg",
        "model": model.model_dump(mode="json"),
        "seed": seed,
        "vocab": vocab.tokens if vocab is not None else None,
        **(extra or {}),
    }
    return checkpoint_repo_ins.save(path, state, meta)


def load_segmenter(
    path: Union[str, Path],
) -> Tuple[SegNetwork, Optional[VisionLanguageModel], ModelSettings, Optional[Vocabulary], Dict[str, Any]]:
    state, meta = checkpoint_repo_ins.load(path)
    if meta.get("kind") != "seg":
        raise CheckpointError(f"{path}: expected a segmentation checkpoint, found {meta.get('kind')!r}")
    model = ModelSettings.model_validate(meta["model"])
    seed = int(meta.get("seed", 0))
    with precision(model.dtype):
        student = build_seg(model, seed)
    student.load_state_dict({k[len("student."):]: v for k, v in state.items() if k.startswith("student.")})

    vlm, vocab = None, None
    vlm_state = {k[len("vlm."):]: v for k, v in state.items() if k.startswith("vlm.")}
    if vlm_state:
        if not meta.get("vocab"):
            raise CheckpointError(f"{path}: VLM weights without a vocabulary")
        vocab = Vocabulary(tokens=meta["vocab"])
        with precision(model.dtype):
            vlm = build_vlm(model, vocab, seed)
        vlm.load_state_dict(vlm_state)
    return student, vlm, model, vocab, meta
