"""Headless software rasterizer for the agent's first-person view.

The chamber is drawn as six matte white quads plus two textured display
rectangles.  Display textures are themselves off-screen renders of the
stimulus object, so a 3-D object appears on a flat monitor as it does in the
physical rearing chambers.

All raster math is float32.  Pixel centres sit at ``(i + 0.5, j + 0.5)``;
a pixel is covered when its centre lies inside or on the triangle.  Depth is
stored as ``1 / z_camera`` so larger values are nearer.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .world import AgentBody, ChamberSpec, Pose

WIDTH = 96
HEIGHT = 96
WALL_SHADE = 0.9
DISPLAY_INSET = 0.01  # displays sit this far in front of their wall
OBJECT_COLOR = (0.85, 0.3, 0.2)

F32 = np.float32


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    yaw: float  # degrees, counter-clockwise from +x
    fov: float = 60.0
    near: float = 0.1
    pitch: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError("fov must be in (0, 180)")
        if self.near <= 0:
            raise ValueError("near plane must be positive")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        yaw = math.radians(self.yaw % 360.0)
        pitch = math.radians(self.pitch)
        fwd = np.array([math.cos(yaw) * math.cos(pitch), math.sin(yaw) * math.cos(pitch),
                        math.sin(pitch)], dtype=F32)
        right = np.array([math.sin(yaw), -math.cos(yaw), 0.0], dtype=F32)
        up = np.cross(right, fwd).astype(F32)
        return right, up, fwd

    @property
    def focal(self) -> float:
        return (WIDTH / 2.0) / math.tan(math.radians(self.fov) / 2.0)


def agent_camera(pose: Pose, body: AgentBody, fov: float = 60.0, near: float = 0.1) -> Camera:
    return Camera((pose.x, pose.y, body.camera_height), pose.heading, fov, near)


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) vertex indices, counter-clockwise seen from outside
    base_color: tuple[float, float, float]

    def __post_init__(self):
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        tri = self.vertices[self.triangles]
        area = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        if np.any(area <= 0):
            raise ValueError("degenerate triangle in mesh")


# ---------------------------------------------------------------------------
# Procedural stimulus objects

def _rot(axis: str, deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _convex_part(verts: np.ndarray, faces: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Fan-triangulate polygon faces and orient every triangle outwards."""
    centroid = verts.mean(axis=0)
    tris = []
    for face in faces:
        for k in range(1, len(face) - 1):
            a, b, c = face[0], face[k], face[k + 1]
            n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
            if np.dot(n, verts[a] - centroid) < 0:
                b, c = c, b
            tris.append((a, b, c))
    return verts, np.array(tris)


def _box(center, size, rotation=np.eye(3)):
    sx, sy, sz = (s / 2.0 for s in size)
    corners = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    verts = corners @ rotation.T + np.asarray(center, dtype=float)
    faces = [[0, 1, 3, 2], [4, 5, 7, 6], [0, 1, 5, 4], [2, 3, 7, 6], [0, 2, 6, 4], [1, 3, 7, 5]]
    return _convex_part(verts, faces)


def _tube(center, radius, height, sides=8):
    ang = np.arange(sides) * 2 * math.pi / sides
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(sides, -height / 2)])
    hi = np.column_stack([ring, np.full(sides, height / 2)])
    verts = np.vstack([lo, hi]) + np.asarray(center, dtype=float)
    faces = [list(range(sides)), list(range(sides, 2 * sides))]
    faces += [[i, (i + 1) % sides, sides + (i + 1) % sides, sides + i] for i in range(sides)]
    return _convex_part(verts, faces)


def _merge(parts):
    verts, tris, offset = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + offset)
        offset += len(v)
    return np.vstack(verts), np.vstack(tris)


# Both objects are rescaled to exactly this axis-aligned extent (depth, width, height).
OBJECT_EXTENT = (0.7, 2.0, 2.0)


def _normalize_extent(verts: np.ndarray) -> np.ndarray:
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    return (verts - (lo + hi) / 2) / (hi - lo) * np.array(OBJECT_EXTENT)


@functools.lru_cache(maxsize=None)
def object_mesh(object_id: str) -> Mesh:
    """A: upright tube with two oblique fins.  B: flat slab carrying two pegs."""
    if object_id == "A":
        parts = [
            _tube((0, 0, 0), 0.35, 2.0),
            _box((0, 0.6, 0.35), (0.08, 0.9, 0.45), _rot("x", 35)),
            _box((0, -0.6, -0.35), (0.08, 0.9, 0.45), _rot("x", 35)),
        ]
    elif object_id == "B":
        parts = [
            _box((0, 0, -0.65), (0.7, 2.0, 0.7)),
            _box((0, 0.6, 0.35), (0.3, 0.3, 1.3)),
            _box((0, -0.6, 0.35), (0.3, 0.3, 1.3)),
        ]
    else:
        raise ValueError(f"unknown object id {object_id!r}")
    verts, tris = _merge(parts)
    return Mesh(_normalize_extent(verts).astype(F32), tris.astype(np.int64), OBJECT_COLOR)


# ---------------------------------------------------------------------------
# Rasterization core

def edge_coverage(tri_xy: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Barycentric weights of pixel centres (xs, ys) w.r.t. a screen triangle.

    Returns (mask, w0, w1, w2) with weights normalized to sum to one, or None
    for a zero-area triangle.
    """
    (ax, ay), (bx, by), (cx, cy) = tri_xy.astype(F32)
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0:
        return None
    w0 = (cx - bx) * (ys - by) - (cy - by) * (xs - bx)
    w1 = (ax - cx) * (ys - cy) - (ay - cy) * (xs - cx)
    w2 = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
    if area < 0:
        w0, w1, w2, area = -w0, -w1, -w2, -area
    mask = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    inv = F32(1.0) / F32(area)
    return mask, w0 * inv, w1 * inv, w2 * inv


def draw_triangle(color: np.ndarray, depth: np.ndarray, tri_xy: np.ndarray, inv_z: np.ndarray,
                  rgb=None, uv: np.ndarray | None = None, texture: np.ndarray | None = None) -> None:
    """Rasterize one screen-space triangle into ``color``/``depth`` in place.

    Either a flat ``rgb`` or per-vertex ``uv`` with a ``texture`` is given.
    Texture coordinates are interpolated perspective-correctly and sampled
    nearest-neighbour.
    """
    h, w = depth.shape
    x0 = max(int(math.floor(float(tri_xy[:, 0].min()) - 0.5)), 0)
    x1 = min(int(math.ceil(float(tri_xy[:, 0].max()) - 0.5)), w - 1)
    y0 = max(int(math.floor(float(tri_xy[:, 1].min()) - 0.5)), 0)
    y1 = min(int(math.ceil(float(tri_xy[:, 1].max()) - 0.5)), h - 1)
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1, dtype=F32)[None, :] + F32(0.5)
    ys = np.arange(y0, y1 + 1, dtype=F32)[:, None] + F32(0.5)
    cov = edge_coverage(tri_xy, xs, ys)
    if cov is None:
        return
    mask, b0, b1, b2 = cov
    if not mask.any():
        return
    iz = inv_z.astype(F32)
    z = b0 * iz[0] + b1 * iz[1] + b2 * iz[2]
    win_depth = depth[y0:y1 + 1, x0:x1 + 1]
    mask &= z > win_depth
    if not mask.any():
        return
    win_depth[mask] = z[mask]
    win_color = color[y0:y1 + 1, x0:x1 + 1]
    if texture is None:
        win_color[mask] = np.asarray(rgb, dtype=F32)
        return
    th, tw = texture.shape[:2]
    uvz = uv.astype(F32) * iz[:, None]
    zm = z[mask]
    u = (b0[mask] * uvz[0, 0] + b1[mask] * uvz[1, 0] + b2[mask] * uvz[2, 0]) / zm
    v = (b0[mask] * uvz[0, 1] + b1[mask] * uvz[1, 1] + b2[mask] * uvz[2, 1]) / zm
    col = np.clip(np.floor(u * F32(tw)), 0, tw - 1).astype(np.intp)
    row = np.clip(np.floor(v * F32(th)), 0, th - 1).astype(np.intp)
    win_color[mask] = texture[row, col]


def _clip_near(cam_pts: np.ndarray, uv: np.ndarray | None, near: float):
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near.

    Returns a list of (points(3,3), uv(3,2) | None) triangles.
    """
    inside = cam_pts[:, 2] >= near
    if inside.all():
        return [(cam_pts, uv)]
    if not inside.any():
        return []
    poly_p, poly_t = [], []
    for i in range(3):
        j = (i + 1) % 3
        pi, pj = cam_pts[i], cam_pts[j]
        if inside[i]:
            poly_p.append(pi)
            poly_t.append(uv[i] if uv is not None else None)
        if inside[i] != inside[j]:
            t = (near - pi[2]) / (pj[2] - pi[2])
            poly_p.append(pi + t * (pj - pi))
            poly_t.append(uv[i] + t * (uv[j] - uv[i]) if uv is not None else None)
    out = []
    for k in range(1, len(poly_p) - 1):
        pts = np.stack([poly_p[0], poly_p[k], poly_p[k + 1]]).astype(F32)
        tuv = np.stack([poly_t[0], poly_t[k], poly_t[k + 1]]).astype(F32) if uv is not None else None
        out.append((pts, tuv))
    return out


def _project(cam_pts: np.ndarray, focal: float) -> tuple[np.ndarray, np.ndarray]:
    f = F32(focal)
    inv_z = F32(1.0) / cam_pts[:, 2]
    sx = F32(WIDTH / 2.0) + f * cam_pts[:, 0] * inv_z
    sy = F32(HEIGHT / 2.0) - f * cam_pts[:, 1] * inv_z
    return np.stack([sx, sy], axis=1), inv_z


def draw_world_triangles(color, depth, camera: Camera, world_tris: np.ndarray, rgbs=None,
                         uvs=None, texture=None) -> None:
    """Transform world-space triangles (T, 3, 3) to the camera, clip, project, draw."""
    right, up, fwd = camera.basis()
    eye = np.asarray(camera.position, dtype=F32)
    rel = world_tris.astype(F32) - eye
    cam = np.stack([rel @ right, rel @ up, rel @ fwd], axis=-1).astype(F32)
    focal = camera.focal
    for k in range(len(cam)):
        tri_uv = uvs[k] if uvs is not None else None
        for pts, tuv in _clip_near(cam[k], tri_uv, camera.near):
            xy, iz = _project(pts, focal)
            rgb = rgbs[k] if rgbs is not None else None
            draw_triangle(color, depth, xy, iz, rgb=rgb, uv=tuv, texture=texture)


def blank_canvas(shade: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    color = np.full((HEIGHT, WIDTH, 3), shade, dtype=F32)
    depth = np.zeros((HEIGHT, WIDTH), dtype=F32)
    return color, depth


# ---------------------------------------------------------------------------
# Display textures

STIMULUS_CAMERA_DISTANCE = 4.5
STIMULUS_FOV = 40.0
LIGHT_DIR = np.array([-1.0, 0.6, 0.8]) / np.linalg.norm([-1.0, 0.6, 0.8])
AMBIENT = 0.3


def _render_display_texture(object_id: str, azimuth: float, elevation: float) -> np.ndarray:
    color, depth = blank_canvas(1.0)
    if object_id == "blank":
        return color
    mesh = object_mesh(object_id)
    rot = _rot("y", elevation) @ _rot("z", azimuth)
    verts = mesh.vertices.astype(np.float64) @ rot.T
    tris = verts[mesh.triangles]
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    lambert = np.clip(normals @ LIGHT_DIR, 0.0, None)
    shade = AMBIENT + (1.0 - AMBIENT) * lambert
    rgbs = (shade[:, None] * np.asarray(mesh.base_color)[None, :]).astype(F32)
    # Camera on the -x axis looking at the object's front face.
    cam = Camera((-STIMULUS_CAMERA_DISTANCE, 0.0, 0.0), 0.0, STIMULUS_FOV, 0.1)
    draw_world_triangles(color, depth, cam, tris.astype(F32), rgbs=rgbs)
    return color


@functools.lru_cache(maxsize=8192)
def _cached_texture(object_id: str, azimuth: float, elevation: float) -> np.ndarray:
    tex = _render_display_texture(object_id, azimuth, elevation)
    tex.setflags(write=False)
    return tex


def render_display_texture(object_id: str, azimuth: float = 0.0, elevation: float = 0.0) -> np.ndarray:
    """(96, 96, 3) image of the object on a white ground; ``"blank"`` is all white."""
    if object_id not in ("A", "B", "blank"):
        raise ValueError(f"unknown object id {object_id!r}")
    if object_id == "blank":
        azimuth = elevation = 0.0
    return _cached_texture(object_id, float(azimuth), float(elevation))


# ---------------------------------------------------------------------------
# Chamber view

def _quad(p0, p1, p2, p3):
    """Two triangles for the quad p0-p1-p2-p3 plus matching unit-square uvs."""
    tris = np.array([[p0, p1, p2], [p0, p2, p3]], dtype=F32)
    uvs = np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], dtype=F32)
    return tris, uvs


@functools.lru_cache(maxsize=16)
def _chamber_geometry(chamber: ChamberSpec):
    L, W, H = chamber.length_x, chamber.width_y, chamber.wall_height
    shells = [
        _quad((0, 0, 0), (L, 0, 0), (L, W, 0), (0, W, 0)),  # floor
        _quad((0, 0, H), (L, 0, H), (L, W, H), (0, W, H)),  # ceiling
        _quad((0, 0, 0), (L, 0, 0), (L, 0, H), (0, 0, H)),  # y = 0
        _quad((0, W, 0), (L, W, 0), (L, W, H), (0, W, H)),  # y = W
        _quad((0, 0, 0), (0, W, 0), (0, W, H), (0, 0, H)),  # x = 0
        _quad((L, 0, 0), (L, W, 0), (L, W, H), (L, 0, H)),  # x = L
    ]
    walls = np.concatenate([t for t, _ in shells])
    cy, cz = chamber.display_center
    hw, hh = chamber.display_width / 2, chamber.display_height / 2
    d = DISPLAY_INSET
    # Seen from inside, u runs left-to-right and v top-to-bottom.
    left = _quad((d, cy - hw, cz + hh), (d, cy + hw, cz + hh), (d, cy + hw, cz - hh), (d, cy - hw, cz - hh))
    right = _quad((L - d, cy + hw, cz + hh), (L - d, cy - hw, cz + hh),
                  (L - d, cy - hw, cz - hh), (L - d, cy + hw, cz - hh))
    return walls, left, right


def render_observation(chamber: ChamberSpec, display_left: np.ndarray, display_right: np.ndarray,
                       camera: Camera) -> np.ndarray:
    """First-person (96, 96, 3) float32 frame; ``display_left`` is on the x=0 wall."""
    color, depth = blank_canvas(WALL_SHADE)
    walls, left, right = _chamber_geometry(chamber)
    shade = np.full((len(walls), 3), WALL_SHADE, dtype=F32)
    draw_world_triangles(color, depth, camera, walls, rgbs=shade)
    draw_world_triangles(color, depth, camera, left[0], uvs=left[1], texture=display_left)
    draw_world_triangles(color, depth, camera, right[0], uvs=right[1], texture=display_right)
    return color


def write_ppm(path, frame: np.ndarray) -> None:
    """Binary P6 dump, 8 bits per channel."""
    data = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
