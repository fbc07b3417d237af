#!/usr/bin/env python3
"""Generate the bundled shopping-centre building graph (mall50.json).

Layout: three floors, each a 4x4 grid of storefront junctions with 21 m
between neighbours (anchor-store scale, so crowd interactions only matter
inside a junction or along a shared corridor, not across the atrium) and
full 8-connectivity (orthogonal plus diagonal corridors), connected by
stair columns at all four corners. Two street doors sit 6 m off the west
facade of the ground floor, each aligned with one west-gallery junction
and also serving its two facade neighbours, so every west-column junction
has at least one door. Access points sit at the doors and at two interior
nodes per floor. The two western columns of the ground floor (i <= 1,
floor 0) are the anchor-store frontage and hold all the recognizable
landmarks, so photo uploads happen on the final approach to the street
doors: a phone that dies there strands its owner within a couple of
corridors of the street, not somewhere upstairs.

Node ids: floor*16 + j*4 + i for grid nodes, then 48 (south door) and
49 (north door).
"""

import json
import sys

SPACING = 21.0
FLOORS = 3
SIDE = 4


def grid_id(floor: int, i: int, j: int) -> int:
    return floor * SIDE * SIDE + j * SIDE + i


def main() -> None:
    nodes = []
    edges = []


    for floor in range(FLOORS):
        for j in range(SIDE):
            for i in range(SIDE):
                # the two western columns of the ground floor are the
                # anchor-store frontage: the only stretch with recognizable
                # storefronts to photograph, and the stretch every journey
                # crosses on its final approach to the street doors
                kind = "landmark" if i <= 1 and floor == 0 else "plain"
                nodes.append(
                    {
                        "id": grid_id(floor, i, j),
                        "x_m": SPACING * i,
                        "y_m": SPACING * j,
                        "floor": floor,
                        "kind": kind,
                    }
                )
        # intra-floor corridors: orthogonal and diagonal
        for j in range(SIDE):
            for i in range(SIDE):
                if i + 1 < SIDE:
                    edges.append({"a": grid_id(floor, i, j), "b": grid_id(floor, i + 1, j)})
                if j + 1 < SIDE:
                    edges.append({"a": grid_id(floor, i, j), "b": grid_id(floor, i, j + 1)})
                if i + 1 < SIDE and j + 1 < SIDE:
                    edges.append({"a": grid_id(floor, i, j), "b": grid_id(floor, i + 1, j + 1)})
                    edges.append({"a": grid_id(floor, i + 1, j), "b": grid_id(floor, i, j + 1)})

    # stair columns at the four corners of every floor pair
    for floor in range(FLOORS - 1):
        for (i, j) in [(0, 0), (SIDE - 1, 0), (0, SIDE - 1), (SIDE - 1, SIDE - 1)]:
            edges.append({"a": grid_id(floor, i, j), "b": grid_id(floor + 1, i, j)})

    # two street exits off the west ground-floor facade; the whole west
    # column of junctions feeds both doors, so reaching the west side of
    # the ground floor is what matters, not one specific door node
    exit_offset = 6.0
    exit_specs = [
        # each street door lines up with one west-gallery junction (6 m away,
        # inside Bluetooth range of the door access point) and also serves the
        # two neighboring junctions along the facade
        (-exit_offset, SPACING * 1, [(0, 0), (0, 1), (0, 2)]),  # south door
        (-exit_offset, SPACING * 2, [(0, 1), (0, 2), (0, 3)]),  # north door
    ]
    exit_ids = []
    next_id = FLOORS * SIDE * SIDE
    for (x, y, approaches) in exit_specs:
        nodes.append({"id": next_id, "x_m": x, "y_m": y, "floor": 0, "kind": "exit"})
        for (i, j) in approaches:
            edges.append({"a": next_id, "b": grid_id(0, i, j)})
        exit_ids.append(next_id)
        next_id += 1

    # wireless access points: one per exit plus two interior ones per floor
    access_points = list(exit_ids)
    for floor in range(FLOORS):
        access_points.append(grid_id(floor, 1, 1))
        access_points.append(grid_id(floor, 2, 2))
    access_points.sort()

    building = {"nodes": nodes, "edges": edges, "access_points": access_points}
    out = sys.argv[1] if len(sys.argv) > 1 else "mall50.json"
    with open(out, "w") as fh:
        json.dump(building, fh, indent=1)
        fh.write("\n")
    print(f"{out}: {len(nodes)} nodes, {len(edges)} edges, "
          f"{len(exit_ids)} exits, {len(access_points)} access points")


if __name__ == "__main__":
    main()