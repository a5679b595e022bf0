"""Regenerates tests/fixtures: a handful of small backbone models in PQR and PDB form."""

import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CHARGE = {"N": -0.4157, "H": 0.2719, "CA": 0.0337, "CB": -0.1825, "C": 0.5973, "O": -0.5679}
RADIUS = {"N": 1.8240, "H": 0.6000, "CA": 1.9080, "CB": 1.9080, "C": 1.9080, "O": 1.6612}
RESNAMES = ["ALA", "GLY", "LEU", "SER", "VAL", "GLU", "LYS", "THR"]


def helix(n, rng):
    out = []
    for i in range(n):
        t = math.radians(100.0 * i)
        out.append((2.3 * math.cos(t) + rng.gauss(0, 0.05), 2.3 * math.sin(t) + rng.gauss(0, 0.05), 1.5 * i))
    return out


def hairpin(n, rng):
    half = n // 2
    out = []
    for i in range(n):
        if i < half:
            x, y = 3.3 * i, 0.0
        else:
            x, y = 3.3 * (n - 1 - i), 4.8
        out.append((x + rng.gauss(0, 0.05), y + 0.9 * (i % 2) + rng.gauss(0, 0.05), rng.gauss(0, 0.05)))
    return out


def residues(trace):
    atoms = []
    for i, (x, y, z) in enumerate(trace):
        res = RESNAMES[i % len(RESNAMES)]
        atoms.append((i + 1, res, "N", (x - 0.9, y + 0.8, z - 0.5)))
        atoms.append((i + 1, res, "H", (x - 1.7, y + 1.3, z - 0.6)))
        atoms.append((i + 1, res, "CA", (x, y, z)))
        if res != "GLY":
            atoms.append((i + 1, res, "CB", (x + 0.6, y - 1.3, z + 0.4)))
        atoms.append((i + 1, res, "C", (x + 1.1, y + 0.7, z + 0.6)))
        atoms.append((i + 1, res, "O", (x + 1.4, y + 1.8, z + 0.3)))
    return atoms


def element(name):
    return name[0]


def pqr(atoms, extra=()):
    lines = ["REMARK   generated fixture"]
    serial = 0
    for resnum, res, name, (x, y, z) in atoms:
        serial += 1
        lines.append(
            f"ATOM  {serial:5d} {name:<4s} {res:3s} A{resnum:4d}    {x:8.3f}{y:8.3f}{z:8.3f} {CHARGE[name]:7.4f} {RADIUS[name]:6.4f}"
        )
    for resnum, res, name, (x, y, z), q, r in extra:
        serial += 1
        lines.append(f"HETATM{serial:5d} {name:<4s} {res:3s} A{resnum:4d}    {x:8.3f}{y:8.3f}{z:8.3f} {q:7.4f} {r:6.4f}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def pdb_atom(serial, name, res, resnum, xyz):
    x, y, z = xyz
    padded = f" {name:<3s}" if len(name) < 4 else name
    return f"ATOM  {serial:5d} {padded:4s} {res:3s} A{resnum:4d}    {x:8.3f}{y:8.3f}{z:8.3f}  1.00 20.00          {element(name):>2s}"


def pdb(models):
    lines = ["HEADER    GENERATED FIXTURE"]
    for m, atoms in enumerate(models, start=1):
        if len(models) > 1:
            lines.append(f"MODEL     {m:4d}")
        for serial, (resnum, res, name, xyz) in enumerate(atoms, start=1):
            lines.append(pdb_atom(serial, name, res, resnum, xyz))
        if len(models) > 1:
            lines.append("ENDMDL")
    lines.append("END")
    return "\n".join(lines) + "\n"


def main():
    rng = random.Random(7)
    structures = ROOT / "structures"
    mixed = ROOT / "mixed"
    structures.mkdir(parents=True, exist_ok=True)
    mixed.mkdir(parents=True, exist_ok=True)

    files = {
        "1abcA01.pqr": pqr(residues(helix(30, rng))),
        "1defA01.pqr": pqr(residues(hairpin(28, rng))),
        "2ghiB02.pdb": pdb([residues(helix(24, rng))]),
        "3jklA00.pdb": pdb([residues(hairpin(20, rng)), residues(helix(20, rng))]),
        "4mnoC01.pqr": pqr(
            residues(helix(26, rng)),
            extra=[(90, "HOH", "O", (10.0, 10.0, 10.0), -0.834, 1.7683), (91, "CA", "CA", (-8.0, 2.0, 5.0), 2.0, 1.79)],
        ),
    }
    for name, text in files.items():
        (structures / name).write_text(text)
        if name != "4mnoC01.pqr":
            (mixed / name).write_text(text)
    good = pqr(residues(helix(12, rng))).splitlines()
    good[5] = good[5] + " 9.99 extra"
    (mixed / "5pqrA01.pqr").write_text("\n".join(good) + "\n")

    cath = [
        "# domain C A T H S O L I D length resolution",
        "1abcA01 1 10 10 10 1 1 1 1 1 30 1.800",
        "1defA01 2 60 40 10 1 1 1 1 1 28 2.500",
        "2ghiB02 1 10 10 20 1 1 1 1 1 24 3.400",
        "3jklA00 2 60 40 10 2 1 1 1 1 20 999.000",
        "4mnoC01 1 10 10 10 2 1 1 1 1 26 1.200",
        "5pqrA01 1 10 10 10 3 1 1 1 1 12 2.000",
    ]
    (ROOT / "cath-list.txt").write_text("\n".join(cath) + "\n")


if __name__ == "__main__":
    main()
