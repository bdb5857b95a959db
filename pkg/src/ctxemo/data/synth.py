"""Planted-signal synthetic datasets.

Every context renders a per-class binary *cue*.  For an active class the cue
is shown with probability ``q + s (1 - q)``, for an inactive class with
probability ``q``, where ``s`` is the context's signal strength and ``q`` the
false-cue rate.  At ``s = 0`` all inputs are independent of the labels.  The
face, gait and any extra modality of an agent express one shared context-1
cue; contexts 2 and 3 draw their own, so combining contexts adds evidence.

Renderings:

* face: landmark layout plus a class-specific offset pattern per shown cue;
* gait: walking BODY-25 skeleton plus class-specific joint offsets (a linear
  deformation of the pose about the mid-hip);
* masked image: a disc in a class-specific saturated hue at a class-specific grid cell
  (optionally confined to one quadrant), primary agent blanked out;
* depth and agents: a ground-plane scene where each shown cue places a
  left/right pair of agents at a class-specific depth and image column
  around the primary agent.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from ..context2 import compute_mask
from .schema import FACE_DIM, IMAGE_SIZE, N_JOINTS, BoundingBox, Dataset, LabelVocabulary, Sample

# camera model for the ground-plane scene
FOCAL = 160.0
HORIZON = 80.0
CAM_HEIGHT = 1.6
PERSON_HEIGHT = 1.7
PERSON_WIDTH = 0.5
FAR = 30.0
GRID = 7
DISC_RADIUS = 22
CELL = IMAGE_SIZE // GRID

# BODY-25 standing pose, (x, y) in body-height units relative to mid-hip, y down
_POSE = np.array([
    [0.00, -0.52], [0.00, -0.42], [-0.10, -0.41], [-0.13, -0.24], [-0.14, -0.08],
    [0.10, -0.41], [0.13, -0.24], [0.14, -0.08], [0.00, 0.00], [-0.06, 0.00],
    [-0.07, 0.24], [-0.07, 0.46], [0.06, 0.00], [0.07, 0.24], [0.07, 0.46],
    [-0.02, -0.54], [0.02, -0.54], [-0.04, -0.53], [0.04, -0.53], [0.10, 0.49],
    [0.12, 0.48], [0.06, 0.47], [-0.10, 0.49], [-0.12, 0.48], [-0.06, 0.47],
])
_SWING = np.zeros((N_JOINTS, 2))
_SWING[[4, 10, 11, 22, 23, 24], 0] = 1.0
_SWING[[7, 13, 14, 19, 20, 21], 0] = -1.0
_SWING[[3, 6], 0] = [0.5, -0.5]


@dataclass(frozen=True)
class SignalPlan:
    """Per-context signal strengths in [0, 1] plus rendering knobs."""

    context1: float = 1.0
    context2: float = 1.0
    context3: float = 1.0
    false_rate: float = 0.35
    second_label_rate: float = 0.3
    frames: int = 8
    quadrant: int | None = None
    extra_modalities: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        for name in ("context1", "context2", "context3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} signal strength must be in [0, 1], got {v}")
        if not 0.0 <= self.false_rate < 1.0 or not 0.0 <= self.second_label_rate <= 1.0:
            raise ValueError("rates must be probabilities")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.quadrant not in (None, 0, 1, 2, 3):
            raise ValueError("quadrant must be 0..3 (TL, TR, BL, BR) or None")

    @classmethod
    def parse(cls, text: str, **kw) -> "SignalPlan":
        vals = [float(v) for v in text.split(",")]
        if len(vals) != 3:
            raise ValueError("signal plan needs three comma-separated strengths")
        return cls(*vals, **kw)


@dataclass
class _Templates:
    face: np.ndarray
    gait: np.ndarray
    colors: np.ndarray
    cells: np.ndarray
    crowd: np.ndarray
    extras: dict = field(default_factory=dict)


def _face_layout() -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, 72, endpoint=False)
    x = 0.5 + 0.18 * np.cos(t) * (1 + 0.1 * np.cos(3 * t))
    y = 0.5 + 0.22 * np.sin(t) * (1 + 0.1 * np.sin(2 * t))
    return np.stack([x, y], axis=1).reshape(-1)


def quadrant_cells(q: int) -> list[tuple[int, int]]:
    rows = range(0, GRID // 2) if q in (0, 1) else range(GRID // 2 + 1, GRID)
    cols = range(0, GRID // 2) if q in (0, 2) else range(GRID // 2 + 1, GRID)
    return [(r, c) for r in rows for c in cols]


def _templates(rng: np.random.Generator, C: int, plan: SignalPlan) -> _Templates:
    face = rng.normal(0.0, 0.03, size=(C, FACE_DIM))
    # each class deforms the pose linearly about the mid-hip
    deform = rng.normal(0.0, 0.15, size=(C, 2, 2))
    gait = np.einsum("jd,ced->cje", _POSE, deform)
    hues = (np.arange(C) + rng.uniform(-0.15, 0.15, size=C)) / C
    colors = np.array([colorsys.hsv_to_rgb(h % 1.0, 1.0, 1.0) for h in hues])
    if plan.quadrant is None:
        centre = {GRID // 2 - 1, GRID // 2, GRID // 2 + 1}
        pool = [(r, c) for r in range(GRID) for c in range(GRID) if c not in centre]
    else:
        pool = quadrant_cells(plan.quadrant)
    pick = rng.choice(len(pool), size=C, replace=C > len(pool))
    cells = np.array([pool[i] for i in pick])
    # a class places a symmetric pair at a class-specific depth offset and lateral spread
    # distinct image columns and depths keep pairs of different classes from occluding each other
    z = 7.0 + rng.permutation(np.linspace(-2.0, 5.0, C))
    column = rng.permutation(np.linspace(20.0, 100.0, C))
    crowd = np.stack([column * z / FOCAL, z], axis=1)
    extras = {name: rng.normal(0.0, 1.0, size=(C, dim)) for name, dim in plan.extra_modalities}
    return _Templates(face, gait, colors, cells, crowd, extras)


def _cues(rng, labels: np.ndarray, strength: float, q: float) -> np.ndarray:
    p = np.where(labels > 0, q + strength * (1.0 - q), q)
    return (rng.random(labels.shape) < p).astype(np.float64)


def _project(x: float, z: float) -> tuple[float, float, float, float]:
    """Image-space box (u0, v0, u1, v1) of a person standing at ground position (x, z)."""
    u = IMAGE_SIZE / 2 + FOCAL * x / z
    feet = HORIZON + FOCAL * CAM_HEIGHT / z
    h = FOCAL * PERSON_HEIGHT / z
    w = FOCAL * PERSON_WIDTH / z
    return u - w / 2, feet - h, u + w / 2, feet


def _box(u0, v0, u1, v1):
    a = int(np.clip(np.floor(u0), 0, IMAGE_SIZE - 1))
    b = int(np.clip(np.floor(v0), 0, IMAGE_SIZE - 1))
    c = int(np.clip(np.ceil(u1), a + 1, IMAGE_SIZE))
    d = int(np.clip(np.ceil(v1), b + 1, IMAGE_SIZE))
    return a, b, c, d


def _render_scene(rng, agents: np.ndarray, image: np.ndarray) -> tuple[np.ndarray, BoundingBox]:
    rows = np.arange(IMAGE_SIZE, dtype=np.float64)[:, None]
    floor = FOCAL * CAM_HEIGHT / np.maximum(rows - HORIZON, 1e-6)
    depth = np.where(rows > HORIZON, np.minimum(floor, FAR), FAR) * np.ones((1, IMAGE_SIZE))
    order = np.argsort(-agents[:, 1], kind="stable")
    bbox = None
    for i in order:
        x, z = agents[i]
        a, b, c, d = _box(*_project(x, z))
        depth[b:d, a:c] = np.hypot(x, z)
        image[b:d, a:c] = 0.45 + 0.1 * rng.random()
        if i == 0:
            bbox = BoundingBox(a, b, c, d)
    depth += rng.normal(0.0, 0.05, size=depth.shape)
    return np.maximum(depth, 0.0), bbox


def _draw_disc(image, cy, cx, radius, color):
    yy, xx = np.ogrid[:IMAGE_SIZE, :IMAGE_SIZE]
    m = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    image[m] = color


def _sample(rng, tpl: _Templates, labels: np.ndarray, plan: SignalPlan, layout: np.ndarray,
            frames_of_agent: int, agent_tag: str, kind: str) -> list[Sample]:
    C = labels.shape[0]
    q = plan.false_rate
    # one context-1 cue per agent, expressed by every modality of that agent
    agent_cue = _cues(rng, labels, plan.context1, q)
    image_cue = _cues(rng, labels, plan.context2, q)
    crowd_cue = _cues(rng, labels, plan.context3, q)

    # per-agent quantities shared by all frames
    identity = rng.normal(0.0, 0.002, size=FACE_DIM)
    height = rng.uniform(100.0, 120.0)
    root = np.array([IMAGE_SIZE / 2, 150.0]) + rng.normal(0.0, 4.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    primary = np.array([rng.uniform(-0.5, 0.5), rng.uniform(6.5, 7.5)])
    members = [primary]
    for c in np.flatnonzero(crowd_cue):
        for side in (-1.0, 1.0):
            members.append(tpl.crowd[c] * np.array([side, 1.0]) + rng.normal(0.0, 0.15, size=2))
    for _ in range(rng.poisson(1.0)):
        members.append(np.array([rng.uniform(-5, 5), rng.uniform(14, 18)]))
    agents = np.array(members)
    agents[:, 1] = np.maximum(agents[:, 1], 2.5)
    base_color = rng.uniform(0.3, 0.6) + rng.uniform(-0.03, 0.03, size=3)

    out = []
    for k in range(frames_of_agent):
        face = layout + identity + agent_cue @ tpl.face + rng.normal(0.0, 0.002, size=FACE_DIM)
        t = np.arange(plan.frames)[:, None, None]
        swing = 0.06 * np.sin(0.8 * t + phase) * _SWING[None]
        pose = _POSE[None] + swing + np.einsum("c,cjd->jd", agent_cue, tpl.gait)[None]
        gait = root + height * pose + rng.normal(0.0, 0.3, size=(plan.frames, N_JOINTS, 2))

        grad = np.linspace(-0.1, 0.1, IMAGE_SIZE)
        image = base_color[None, None, :] + grad[:, None, None] + rng.normal(0.0, 0.02, size=(IMAGE_SIZE, IMAGE_SIZE, 3))
        for c in np.flatnonzero(image_cue):
            r, col = tpl.cells[c]
            cy = (r + 0.5) * CELL + rng.uniform(-3, 3)
            cx = (col + 0.5) * CELL + rng.uniform(-3, 3)
            _draw_disc(image, cy, cx, DISC_RADIUS, tpl.colors[c])
        jitter = agents + (rng.normal(0.0, 0.05, size=agents.shape) if k else 0.0)
        depth, bbox = _render_scene(rng, jitter, image)
        image = np.clip(image, 0.0, 1.0)
        masked = compute_mask(image, bbox)
        extras = {name: agent_cue @ tpl.extras[name] + rng.normal(0.0, 0.3, size=tpl.extras[name].shape[1])
                  for name in tpl.extras}
        sid = agent_tag if kind == "image" else f"{agent_tag}_f{k:02d}"
        out.append(Sample(
            id=sid,
            face=face.astype(np.float32),
            gait=gait.astype(np.float32),
            masked_image=masked.astype(np.float32),
            depth=depth.astype(np.float32),
            agents=jitter.astype(np.float32),
            labels=labels.astype(np.float32),
            agent_id=agent_tag if kind == "video" else None,
            bbox=bbox,
            extras={n: v.astype(np.float32) for n, v in extras.items()},
        ))
    return out


def synthesize_dataset(seed: int, n_samples: int, vocabulary: LabelVocabulary,
                       signal_plan: SignalPlan | None = None, kind: str = "image",
                       frames_per_agent: int = 3) -> Dataset:
    """Deterministic planted-signal dataset.

    For ``kind="video"``, ``n_samples`` counts agents and each agent gets
    ``frames_per_agent`` frame samples sharing its ``agent_id``.
    """
    plan = signal_plan or SignalPlan()
    if vocabulary.C < 1:
        raise ValueError("vocabulary has zero classes")
    if n_samples < 1 or frames_per_agent < 1:
        raise ValueError("n_samples and frames_per_agent must be >= 1")
    if kind not in ("image", "video"):
        raise ValueError(f"kind must be 'image' or 'video', got {kind!r}")
    C = vocabulary.C
    tpl = _templates(np.random.default_rng([seed, 0]), C, plan)
    rng = np.random.default_rng([seed, 1])
    layout = _face_layout()
    samples: list[Sample] = []
    for i in range(n_samples):
        labels = np.zeros(C)
        labels[rng.integers(C)] = 1
        if C > 1 and rng.random() < plan.second_label_rate:
            labels[rng.integers(C)] = 1
        frames = 1 if kind == "image" else frames_per_agent
        samples.extend(_sample(rng, tpl, labels, plan, layout, frames, f"a{i:05d}", kind))
    return Dataset(vocabulary, tuple(samples), kind)

