"""ASCII OBJ and binary little-endian PLY reading and writing.

PLY files carry provenance tags as an extra ``int tag`` vertex property;
OBJ has no place for them, so they are dropped on write and reset to
``arange(V)`` on read.
"""

from pathlib import Path

import numpy as np

from .trimesh import TriangleMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def write_obj(path, mesh):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_ply(path, mesh):
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property int tag\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    vdt = np.dtype([("xyz", "<f8", 3), ("tag", "<i4")])
    vrec = np.empty(mesh.n_vertices, dtype=vdt)
    vrec["xyz"] = mesh.vertices
    vrec["tag"] = mesh.tags
    fdt = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
    frec = np.empty(mesh.n_faces, dtype=fdt)
    frec["n"] = 3
    frec["idx"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vrec.tobytes())
        fh.write(frec.tobytes())


def read_ply(path):
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii").splitlines()
    fmt = None
    elements = []
    for line in header:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            elements[-1][2].append(tok[1:])
    if fmt != "binary_little_endian":
        raise ValueError(f"{path}: only binary_little_endian PLY is supported, got {fmt}")

    offset = body_start
    verts = faces = tags = None
    for name, count, props in elements:
        if any(p[0] == "list" for p in props):
            if len(props) != 1:
                raise ValueError(f"{path}: unsupported list element layout")
            _, ctype, itype, _ = props[0]
            dt = np.dtype([("n", _PLY_TYPES[ctype]), ("idx", "<" + _PLY_TYPES[itype], 3)])
            rec = np.frombuffer(data, dtype=dt, count=count, offset=offset)
            if count and np.any(rec["n"] != 3):
                raise ValueError(f"{path}: only triangle faces are supported")
            offset += dt.itemsize * count
            if name == "face":
                faces = rec["idx"].astype(np.int64)
        else:
            dt = np.dtype([(p[1], "<" + _PLY_TYPES[p[0]]) for p in props])
            rec = np.frombuffer(data, dtype=dt, count=count, offset=offset)
            offset += dt.itemsize * count
            if name == "vertex":
                verts = np.stack([rec["x"], rec["y"], rec["z"]], 1).astype(np.float64)
                if "tag" in dt.names:
                    tags = rec["tag"].astype(np.int64)
    if verts is None:
        raise ValueError(f"{path}: no vertex element")
    if faces is None:
        faces = np.zeros((0, 3), dtype=np.int64)
    return TriangleMesh(verts, faces, tags)


def read_mesh(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix == ".obj":
        return read_obj(path)
    raise ValueError(f"unsupported mesh format: {suffix!r}")


def write_mesh(path, mesh):
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        write_ply(path, mesh)
    elif suffix == ".obj":
        write_obj(path, mesh)
    else:
        raise ValueError(f"unsupported mesh format: {suffix!r}")
