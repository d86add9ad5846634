#!/usr/bin/env python3
"""Regenerate data/elements.csv from the `mendeleev` package.

One row per atomic number Z = 1..86 with 15 numeric properties in a fixed
column order. Properties the reference compilation leaves undefined (for
example the melting point of carbon, Pauling electronegativity of noble
gases) are imputed with the column median over all 86 elements so every
entry is finite. Imputed cells are listed on stderr.

Units: atomic weight u; covalent/vdW radius pm; electronegativities in
their native scales (Allen in eV); electron affinity and first ionization
energy eV; melting/boiling point K; density g/cm^3; atomic volume cm^3/mol.
Block is an ordinal: s=0, p=1, d=2, f=3. Lanthanides get group 3.
"""
import statistics
import sys

from mendeleev import element

COLUMNS = [
    "atomic_weight", "group", "period", "block", "valence_electrons",
    "covalent_radius", "vdw_radius", "en_pauling", "en_allen",
    "electron_affinity", "ionization_energy", "melting_point",
    "boiling_point", "density", "atomic_volume",
]
BLOCKS = {"s": 0, "p": 1, "d": 2, "f": 3}
VERSION = "1"


def raw_row(z):
    e = element(z)
    group = e.group_id if e.group_id is not None else 3
    return [
        e.atomic_weight, group, e.period, BLOCKS[e.block], e.nvalence(),
        e.covalent_radius, e.vdw_radius, e.en_pauling, e.en_allen,
        e.electron_affinity, e.ionenergies.get(1), e.melting_point,
        e.boiling_point, e.density, e.atomic_volume,
    ]


def main():
    rows = {z: raw_row(z) for z in range(1, 87)}
    medians = []
    for c in range(len(COLUMNS)):
        vals = [float(r[c]) for r in rows.values() if r[c] is not None]
        medians.append(statistics.median(vals))
    out = sys.stdout
    out.write(f"# element property table v{VERSION}; source: mendeleev; "
              "missing values imputed with column median\n")
    out.write("Z," + ",".join(COLUMNS) + "\n")
    for z, r in rows.items():
        cells = []
        for c, v in enumerate(r):
            if v is None:
                print(f"Z={z} {COLUMNS[c]} imputed {medians[c]:.6g}",
                      file=sys.stderr)
                v = medians[c]
            cells.append(repr(float(v)))
        out.write(f"{z}," + ",".join(cells) + "\n")


if __name__ == "__main__":
    main()
