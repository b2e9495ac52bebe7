"""
Synthetic speckled PolSAR scenes with known ground truth.

Each pixel draws s = L z with L the lower Cholesky factor of its class
covariance and z a vector of standard circular complex Gaussians, so that
E[s s^H] equals the class covariance. Randomness for pixel p comes from a
Philox stream keyed by the scene seed with its counter set from p, which makes
output independent of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from polgnlm.core import (
    CovGrid,
    HermitianCov3,
    LabelGrid,
    OpticalGrid,
    ScatteringVector,
    SlcGrid,
)


class SceneSpecError(ValueError):
    """Invalid scene specification."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization of a class covariance failed."""


@dataclass(frozen=True)
class Region:
    row: int
    col: int
    height: int
    width: int
    class_id: int
    line: Optional[int] = None

    def describe(self) -> str:
        where = f" (line {self.line})" if self.line is not None else ""
        return (f"rect[row={self.row}, col={self.col}, height={self.height}, "
                f"width={self.width}, class={self.class_id}]{where}")


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    sigma: HermitianCov3
    optical: tuple[float, ...]
    name: str = ""


@dataclass
class SceneSpec:
    height: int
    width: int
    regions: list[Region]
    classes: dict[int, ClassSpec]
    optical_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def bands(self) -> int:
        return len(next(iter(self.classes.values())).optical)

    def validate(self) -> None:
        if self.height < 1 or self.width < 1:
            raise SceneSpecError(f"scene dimensions must be positive, got {self.height}x{self.width}")
        if not 0 <= self.seed < 2 ** 64:
            raise SceneSpecError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not self.optical_noise_sigma >= 0:
            raise SceneSpecError("optical_noise_sigma must be >= 0")
        if not self.classes:
            raise SceneSpecError("scene needs at least one class")
        bands = {len(c.optical) for c in self.classes.values()}
        if len(bands) != 1 or 0 in bands:
            raise SceneSpecError("every class needs the same positive number of optical bands")
        for c in self.classes.values():
            if any(not 0.0 <= v <= 1.0 for v in c.optical):
                raise SceneSpecError(f"class {c.class_id}: optical signature must lie in [0, 1]")
            if not c.sigma.is_positive_definite():
                raise SceneSpecError(f"class {c.class_id}: sigma is not positive definite")
        self.label_map()

    def label_map(self) -> np.ndarray:
        """Rasterize regions; raises on overlap, out-of-bounds or uncovered pixels."""
        owner = np.full((self.height, self.width), -1, dtype=np.int64)
        for k, r in enumerate(self.regions):
            if r.class_id not in self.classes:
                raise SceneSpecError(f"{r.describe()} refers to unknown class {r.class_id}")
            if r.height < 1 or r.width < 1 or r.row < 0 or r.col < 0 \
                    or r.row + r.height > self.height or r.col + r.width > self.width:
                raise SceneSpecError(f"{r.describe()} lies outside the {self.height}x{self.width} grid")
            block = owner[r.row:r.row + r.height, r.col:r.col + r.width]
            taken = block[block >= 0]
            if taken.size:
                other = self.regions[int(taken[0])]
                raise SceneSpecError(f"overlapping regions: {other.describe()} and {r.describe()}")
            block[...] = k
        if np.any(owner < 0):
            i, j = np.argwhere(owner < 0)[0]
            raise SceneSpecError(f"regions do not tile the grid: pixel ({i}, {j}) is uncovered")
        ids = np.array([r.class_id for r in self.regions], dtype=np.int64)
        return ids[owner]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    labels: LabelGrid
    sigma_field: CovGrid


def _stream(seed: int, pixel: int) -> np.random.Generator:
    # counter word 1 holds the pixel index; word 0 is left free for the draws
    return np.random.Generator(np.random.Philox(key=[seed, 0], counter=[0, pixel, 0, 0]))


def _circular_normals(gen: np.random.Generator, n: int) -> np.ndarray:
    g = gen.standard_normal(2 * n)
    return (g[0::2] + 1j * g[1::2]) * np.sqrt(0.5)


def cholesky_lower(sigma: HermitianCov3) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma.to_matrix())
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"covariance is not positive definite: {sigma}") from exc


def sample_scattering(sigma: HermitianCov3, rng: np.random.Generator) -> ScatteringVector:
    """Draw one scattering vector with E[s s^H] = sigma."""
    s = cholesky_lower(sigma) @ _circular_normals(rng, 3)
    return ScatteringVector(complex(s[0]), complex(s[1]), complex(s[2]))


def sample_scattering_many(sigma: HermitianCov3, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized draw of n scattering vectors, shape (n, 3)."""
    L = cholesky_lower(sigma)
    g = rng.standard_normal((n, 6))
    z = (g[:, 0::2] + 1j * g[:, 1::2]) * np.sqrt(0.5)
    return z @ L.T


def generate_scene(spec: SceneSpec) -> tuple[SlcGrid, OpticalGrid, GroundTruth]:
    spec.validate()
    labels = spec.label_map()
    h, w, bands = spec.height, spec.width, spec.bands
    chol = {cid: cholesky_lower(c.sigma) for cid, c in spec.classes.items()}

    z = np.empty((h * w, 3), dtype=np.complex128)
    noise = np.empty((h * w, bands))
    for p in range(h * w):
        gen = _stream(spec.seed, p)
        z[p] = _circular_normals(gen, 3)
        noise[p] = gen.standard_normal(bands)

    flat_labels = labels.reshape(-1)
    slc = np.empty((h * w, 3), dtype=np.complex128)
    optical = np.empty((h * w, bands))
    sigma_field = np.empty((h * w, 9))
    for cid, c in spec.classes.items():
        m = flat_labels == cid
        slc[m] = z[m] @ chol[cid].T
        optical[m] = np.asarray(c.optical) + spec.optical_noise_sigma * noise[m]
        sigma_field[m] = c.sigma.to_scalars()
    np.clip(optical, 0.0, 1.0, out=optical)

    truth = GroundTruth(LabelGrid(labels), CovGrid(sigma_field.reshape(h, w, 9)))
    return (SlcGrid(slc.reshape(h, w, 3)),
            OpticalGrid(optical.reshape(h, w, bands)),
            truth)


def homogeneous_scene(sigma: HermitianCov3, height: int, width: int, seed: int = 0,
                      optical: tuple[float, ...] = (0.1, 0.1, 0.1, 0.3),
                      optical_noise_sigma: float = 0.0) -> SceneSpec:
    return SceneSpec(
        height=height, width=width,
        regions=[Region(0, 0, height, width, 0)],
        classes={0: ClassSpec(0, sigma, tuple(optical), "homogeneous")},
        optical_noise_sigma=optical_noise_sigma, seed=seed,
    )


# ---- config file -------------------------------------------------------------

class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _complex(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise SceneSpecError(f"{where}: expected a number or [re, im], got {v!r}")


def _field(d: dict, key: str, where: str):
    if key not in d:
        raise SceneSpecError(f"{where}: missing field '{key}'")
    return d[key]


def _sigma(d: dict, where: str) -> HermitianCov3:
    where = f"{where} sigma (line {d.get('__line__', '?')})"
    try:
        return HermitianCov3(
            float(_field(d, "d11", where)), float(_field(d, "d22", where)), float(_field(d, "d33", where)),
            _complex(d.get("c12", 0.0), where + " c12"),
            _complex(d.get("c13", 0.0), where + " c13"),
            _complex(d.get("c23", 0.0), where + " c23"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SceneSpecError):
            raise
        raise SceneSpecError(f"{where}: {exc}") from exc


def scene_spec_from_dict(doc: dict) -> SceneSpec:
    """Build a SceneSpec from a parsed config mapping; see README for the schema."""
    if not isinstance(doc, dict):
        raise SceneSpecError("scene config must be a mapping")
    top = f"scene (line {doc.get('__line__', 1)})"
    classes: dict[int, ClassSpec] = {}
    names: dict[str, int] = {}
    for entry in _field(doc, "classes", top):
        where = f"class entry (line {entry.get('__line__', '?')})"
        cid = int(_field(entry, "id", where))
        if cid < 0:
            raise SceneSpecError(f"{where}: class id must be >= 0")
        if cid in classes:
            raise SceneSpecError(f"{where}: duplicate class id {cid}")
        name = str(entry.get("name", cid))
        sigma = _sigma(_field(entry, "sigma", where), where)
        optical = tuple(float(v) for v in _field(entry, "optical", where))
        classes[cid] = ClassSpec(cid, sigma, optical, name)
        names[name] = cid
        if not sigma.is_positive_definite():
            raise SceneSpecError(f"{where}: sigma of class '{name}' is not positive definite")

    regions = []
    for entry in _field(doc, "regions", top):
        where = f"region entry (line {entry.get('__line__', '?')})"
        rect = _field(entry, "rect", where)
        if not (isinstance(rect, list) and len(rect) == 4):
            raise SceneSpecError(f"{where}: rect must be [row, col, height, width]")
        cls = _field(entry, "class", where)
        cid = names[cls] if isinstance(cls, str) and cls in names else cls
        if not isinstance(cid, int) or cid not in classes:
            raise SceneSpecError(f"{where}: unknown class {cls!r}")
        regions.append(Region(*(int(v) for v in rect), class_id=cid, line=entry.get("__line__")))

    try:
        return SceneSpec(
            height=int(_field(doc, "height", top)),
            width=int(_field(doc, "width", top)),
            regions=regions,
            classes=classes,
            optical_noise_sigma=float(doc.get("optical_noise_sigma", 0.0)),
            seed=int(doc.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SceneSpecError):
            raise
        raise SceneSpecError(f"{top}: {exc}") from exc


def load_scene_spec(path, seed: Optional[int] = None) -> SceneSpec:
    text = Path(path).read_text()
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        raise SceneSpecError(f"{path}: {exc}") from exc
    if seed is not None and isinstance(doc, dict):
        doc["seed"] = seed
    try:
        return scene_spec_from_dict(doc)
    except SceneSpecError as exc:
        raise SceneSpecError(f"{path}: {exc}") from exc


def default_scene_path(name: str = "forest_scene.yaml") -> Path:
    return Path(str(resources.files("polgnlm") / "data" / name))


def default_scene_spec(seed: Optional[int] = None) -> SceneSpec:
    """The shipped live/defoliated forest scene."""
    return load_scene_spec(default_scene_path(), seed=seed)
