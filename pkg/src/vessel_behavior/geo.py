"""Small geodesic helpers (spherical earth)."""

import numpy as np

EARTH_RADIUS_M = 6371008.8
KNOT_MS = 1852.0 / 3600.0
METERS_PER_DEG_LAT = np.pi * EARTH_RADIUS_M / 180.0


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; broadcasts over numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def bearing(lat1, lon1, lat2, lon2):
    """Initial course in degrees [0, 360) from point 1 to point 2."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(lon2 - lon1)
    x = np.sin(dlmb) * np.cos(p2)
    y = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dlmb)
    return float(np.mod(np.degrees(np.arctan2(x, y)), 360.0))


def step_position(lat: float, lon: float, sog_knots: float, cog_deg: float, dt: float) -> tuple[float, float]:
    """Dead-reckon one step on the local tangent plane."""
    dist = sog_knots * KNOT_MS * dt
    c = np.radians(cog_deg)
    dlat = dist * np.cos(c) / METERS_PER_DEG_LAT
    dlon = dist * np.sin(c) / (METERS_PER_DEG_LAT * np.cos(np.radians(lat)))
    return float(lat + dlat), float(lon + dlon)


def offset(lat: float, lon: float, north_m: float, east_m: float) -> tuple[float, float]:
    """Move ``north_m`` / ``east_m`` metres on the local tangent plane."""
    return (
        float(lat + north_m / METERS_PER_DEG_LAT),
        float(lon + east_m / (METERS_PER_DEG_LAT * np.cos(np.radians(lat)))),
    )
