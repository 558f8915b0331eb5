#!/usr/bin/env python3
"""Generates data/fixtures/blr_extract.geojson.

A small synthetic extract laid out like a Bengaluru neighbourhood: a jittered
street grid, a lake with a bridge, a stream, a railway line, parks, a forest
patch, pedestrian plazas and footways, plus a few features that must be dropped
(buildings, a point) and one road fragment disconnected from the grid.

Coordinates are rounded to 6 decimals so distinct vertices are always more
than the 1e-7 degree merge tolerance apart.
"""
import json
import math
import random
import sys
from pathlib import Path

LAT0, LON0 = 12.9600, 77.5800
STEP = 0.0014
ROWS, COLS = 12, 12

rng = random.Random(2025)


def r6(v):
    return round(v, 6)


def node(i, j, grid):
    return grid[i][j]


def ring(center_lat, center_lon, radius_m, sides, phase=0.0, squash=1.0):
    pts = []
    for k in range(sides):
        a = phase + 2 * math.pi * k / sides
        dlat = radius_m * squash * math.sin(a) / 111_195.0
        dlon = radius_m * math.cos(a) / (111_195.0 * math.cos(math.radians(center_lat)))
        pts.append([r6(center_lon + dlon), r6(center_lat + dlat)])
    pts.append(list(pts[0]))
    return pts


def feature(fid, props, geom_type, coords):
    props = dict(props)
    props["@id"] = fid
    return {"type": "Feature", "properties": props,
            "geometry": {"type": geom_type, "coordinates": coords}}


def main(out_path):
    grid = [[(r6(LAT0 + i * STEP + rng.uniform(-0.00015, 0.00015)),
              r6(LON0 + j * STEP + rng.uniform(-0.00015, 0.00015)))
             for j in range(COLS)] for i in range(ROWS)]

    feats = []
    highway_kinds = ["residential", "residential", "tertiary", "secondary", "primary"]

    # East-west streets; every third one is split into two features at a junction.
    for i in range(ROWS):
        kind = highway_kinds[i % len(highway_kinds)]
        line = [[node(i, j, grid)[1], node(i, j, grid)[0]] for j in range(COLS)]
        if i % 3 == 0:
            feats.append(feature(f"way/ew{i}a", {"highway": kind, "name": f"{i} Main"}, "LineString", line[:6]))
            feats.append(feature(f"way/ew{i}b", {"highway": kind, "name": f"{i} Main"}, "LineString", line[5:]))
        else:
            feats.append(feature(f"way/ew{i}", {"highway": kind, "name": f"{i} Main"}, "LineString", line))

    # North-south streets.
    for j in range(COLS):
        kind = highway_kinds[(j + 2) % len(highway_kinds)]
        line = [[node(i, j, grid)[1], node(i, j, grid)[0]] for i in range(ROWS)]
        feats.append(feature(f"way/ns{j}", {"highway": kind, "name": f"{j} Cross"}, "LineString", line))

    # A diagonal arterial joining grid junctions.
    diag = [[node(k, k, grid)[1], node(k, k, grid)[0]] for k in range(0, 8)]
    feats.append(feature("way/diag", {"highway": "primary", "name": "Old Airport Rd"}, "LineString", diag))

    # Disconnected service road south of the grid.
    frag = [[r6(LON0 + 0.002), r6(LAT0 - 0.0025)], [r6(LON0 + 0.0035), r6(LAT0 - 0.0026)],
            [r6(LON0 + 0.0050), r6(LAT0 - 0.0024)]]
    feats.append(feature("way/fragment", {"highway": "service"}, "LineString", frag))

    # Lake straddling the street between rows 3 and 4 near column 8.
    lat_c = (grid[3][8][0] + grid[4][8][0]) / 2 + 0.0001
    lon_c = (grid[3][8][1] + grid[3][9][1]) / 2
    feats.append(feature("way/lake", {"natural": "water", "name": "Kere"}, "Polygon",
                         [ring(lat_c, lon_c, 110.0, 18, 0.3, 0.8)]))

    # Stream meandering north-south across several east-west streets.
    stream = []
    for k in range(15):
        lat = LAT0 + 0.0005 + k * 0.0011
        lon = LON0 + 2.5 * STEP + 0.0004 * math.sin(k * 0.9)
        stream.append([r6(lon), r6(lat)])
    feats.append(feature("way/stream", {"waterway": "stream"}, "LineString", stream))

    # Railway line running diagonally, never sharing vertices with roads.
    rail = []
    for k in range(13):
        lat = LAT0 - 0.0003 + k * 0.00125
        lon = LON0 + 11.2 * STEP - k * 0.00082
        rail.append([r6(lon), r6(lat)])
    feats.append(feature("way/rail", {"railway": "rail", "name": "Bangalore Cantonment line"}, "LineString", rail))

    # Parks and green areas.
    feats.append(feature("way/park1", {"leisure": "park", "name": "Cubbon-like Park"}, "Polygon",
                         [ring(grid[7][3][0] + 0.0006, grid[7][3][1] + 0.0007, 190.0, 20, 0.1, 0.9)]))
    feats.append(feature("rel/park2", {"leisure": "park"}, "MultiPolygon",
                         [[ring(grid[1][9][0] + 0.0007, grid[1][9][1] + 0.0007, 80.0, 12)],
                          [ring(grid[2][5][0] + 0.0007, grid[2][5][1] + 0.0007, 70.0, 10, 0.2)]]))
    feats.append(feature("way/forest", {"landuse": "forest"}, "Polygon",
                         [ring(grid[10][10][0] + 0.0002, grid[10][10][1] - 0.0004, 160.0, 16, 0.5)]))
    feats.append(feature("way/wood", {"natural": "wood"}, "Polygon",
                         [ring(grid[9][1][0] + 0.0007, grid[9][1][1] + 0.0007, 60.0, 9)]))

    # Pedestrian plazas over junctions, plus footways.
    feats.append(feature("way/plaza1", {"highway": "pedestrian", "area": "yes"}, "Polygon",
                         [ring(grid[5][5][0], grid[5][5][1], 45.0, 8, 0.4)]))
    feats.append(feature("way/plaza2", {"area": "pedestrian"}, "Polygon",
                         [ring(grid[8][7][0], grid[8][7][1] + 0.0004, 55.0, 10)]))
    for k, (i, j) in enumerate([(2, 1), (6, 10), (10, 4)]):
        a, b = grid[i][j], grid[i + 1][j + 1]
        foot = [[r6(a[1] + 0.0002), r6(a[0] + 0.0002)], [r6(b[1] - 0.0002), r6(b[0] - 0.0002)]]
        feats.append(feature(f"way/foot{k}", {"highway": "footway"}, "LineString", foot))

    # Dropped: buildings and a point of interest.
    for k in range(6):
        i, j = rng.randrange(ROWS - 1), rng.randrange(COLS - 1)
        c_lat = (grid[i][j][0] + grid[i + 1][j][0]) / 2
        c_lon = (grid[i][j][1] + grid[i][j + 1][1]) / 2
        feats.append(feature(f"way/bldg{k}", {"building": "yes"}, "Polygon", [ring(c_lat, c_lon, 18.0, 4, 0.785)]))
    feats.append({"type": "Feature", "properties": {"amenity": "cafe", "@id": "node/cafe"},
                  "geometry": {"type": "Point", "coordinates": [r6(LON0 + 0.003), r6(LAT0 + 0.003)]}})

    lons = [c[0] for f in feats for c in iter_coords(f["geometry"])]
    lats = [c[1] for f in feats for c in iter_coords(f["geometry"])]
    bbox = [r6(min(lons) - 0.0005), r6(min(lats) - 0.0005), r6(max(lons) + 0.0005), r6(max(lats) + 0.0005)]
    fc = {"type": "FeatureCollection", "bbox": bbox, "features": feats}
    Path(out_path).write_text(json.dumps(fc, indent=1) + "\n")


def iter_coords(geom):
    t, c = geom["type"], geom["coordinates"]
    if t == "Point":
        yield c
    elif t == "LineString":
        yield from c
    elif t == "Polygon":
        for r in c:
            yield from r
    elif t == "MultiPolygon":
        for p in c:
            for r in p:
                yield from r


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/fixtures/blr_extract.geojson")
