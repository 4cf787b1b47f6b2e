"""Planar geometry over degree coordinates (degrees are treated as plain distance)."""

import math

from .datamodel import Circle, Point, Rectangle
from .errors import ArgumentTypeError


def point_in_circle(p, c):
    dx = p.x - c.center.x
    dy = p.y - c.center.y
    return dx * dx + dy * dy <= c.radius * c.radius


def point_in_rect(p, r):
    return (r.lower_left.x <= p.x <= r.upper_right.x
            and r.lower_left.y <= p.y <= r.upper_right.y)


def _rect_rect(a, b):
    return (a.lower_left.x <= b.upper_right.x and b.lower_left.x <= a.upper_right.x
            and a.lower_left.y <= b.upper_right.y and b.lower_left.y <= a.upper_right.y)


def _circle_rect(c, r):
    cx = min(max(c.center.x, r.lower_left.x), r.upper_right.x)
    cy = min(max(c.center.y, r.lower_left.y), r.upper_right.y)
    dx = c.center.x - cx
    dy = c.center.y - cy
    return dx * dx + dy * dy <= c.radius * c.radius


def _circle_circle(a, b):
    dx = a.center.x - b.center.x
    dy = a.center.y - b.center.y
    rr = a.radius + b.radius
    return dx * dx + dy * dy <= rr * rr


def spatial_intersect(a, b):
    ta, tb = type(a), type(b)
    if ta is Point:
        if tb is Circle:
            return point_in_circle(a, b)
        if tb is Rectangle:
            return point_in_rect(a, b)
        if tb is Point:
            return a.x == b.x and a.y == b.y
    elif ta is Circle:
        if tb is Point:
            return point_in_circle(b, a)
        if tb is Rectangle:
            return _circle_rect(a, b)
        if tb is Circle:
            return _circle_circle(a, b)
    elif ta is Rectangle:
        if tb is Point:
            return point_in_rect(b, a)
        if tb is Rectangle:
            return _rect_rect(a, b)
        if tb is Circle:
            return _circle_rect(b, a)
    raise ArgumentTypeError(f"spatial_intersect needs geometries, got {ta.__name__} and {tb.__name__}")


def spatial_distance(p, q):
    if type(p) is not Point or type(q) is not Point:
        raise ArgumentTypeError("spatial_distance needs two points")
    dx = p.x - q.x
    dy = p.y - q.y
    return math.sqrt(dx * dx + dy * dy)


def bounding_box(g):
    t = type(g)
    if t is Point:
        return (g.x, g.y, g.x, g.y)
    if t is Circle:
        c, r = g.center, g.radius
        return (c.x - r, c.y - r, c.x + r, c.y + r)
    if t is Rectangle:
        return (g.lower_left.x, g.lower_left.y, g.upper_right.x, g.upper_right.y)
    raise ArgumentTypeError(f"no bounding box for {t.__name__}")
