//! Cones, truncated cones and multicone domains in two and three dimensions.
//!
//! Points are stored as `[f64; 3]`; planar domains keep the third coordinate
//! at zero. A multicone is a core (finite union of balls) plus disjoint
//! truncated-cone branches whose bases are glued onto the core boundary.
//!
//! Boundary distances are computed piecewise: the boundary of a valid domain
//! is covered by the lateral surfaces of the branches, the parts of the core
//! spheres not covered by glued bases, and (for a bare truncated cone) the
//! base cap. The minimum over pieces is a lower bound on the distance to the
//! boundary, exact for the domains this crate builds.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Number of rejection samples used by the disjointness checks.
pub const OVERLAP_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self, GeometryError> {
        match coords.len() {
            2 => Ok(Self::new2(coords[0], coords[1])),
            3 => Ok(Self::new3(coords[0], coords[1], coords[2])),
            n => Err(GeometryError::Dimension { expected: 3, got: n }),
        }
    }

    pub fn coords(&self, dimension: usize) -> &[f64] {
        &self.0[..dimension]
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn normalized(&self) -> Option<Point> {
        let n = self.norm();
        (n > 0.0).then(|| *self * (1.0 / n))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        self * -1.0
    }
}

/// Cross-section of a cone on the unit sphere: a planar arc or a polar cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Opening {
    /// Directions with polar angle in `(start, end)` (radians).
    Arc { start: f64, end: f64 },
    /// Directions within angle `colatitude` of the unit vector `axis`.
    Cap { axis: Point, colatitude: f64 },
}

impl Opening {
    pub fn arc(start: f64, end: f64) -> Self {
        Opening::Arc { start, end }
    }

    pub fn cap(axis: Point, colatitude: f64) -> Self {
        Opening::Cap { axis, colatitude }
    }

    /// Cap about the positive third axis.
    pub fn polar_cap(colatitude: f64) -> Self {
        Opening::Cap {
            axis: Point::new3(0.0, 0.0, 1.0),
            colatitude,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Opening::Arc { .. } => 2,
            Opening::Cap { .. } => 3,
        }
    }

    /// Arc length, or the angular half-width of a cap.
    pub fn width(&self) -> f64 {
        match *self {
            Opening::Arc { start, end } => end - start,
            Opening::Cap { colatitude, .. } => colatitude,
        }
    }

    /// Surface measure `σ(𝔇)`.
    pub fn measure(&self) -> f64 {
        match *self {
            Opening::Arc { start, end } => end - start,
            Opening::Cap { colatitude, .. } => TAU * (1.0 - colatitude.cos()),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            Opening::Arc { start, end } => {
                let len = end - start;
                if !(len > 0.0 && len < TAU) || !start.is_finite() || !end.is_finite() {
                    out.push(format!(
                        "opening arc length must lie in (0, 2π), got {len}"
                    ));
                }
            }
            Opening::Cap { axis, colatitude } => {
                if !(colatitude > 0.0 && colatitude < PI) {
                    out.push(format!(
                        "cap colatitude must lie in (0, π), got {colatitude}"
                    ));
                }
                if (axis.norm() - 1.0).abs() > 1e-12 {
                    out.push(format!(
                        "cap axis must have unit norm, got norm {}",
                        axis.norm()
                    ));
                }
            }
        }
        out
    }

    /// Coordinate of a direction inside the closed opening: the offset from
    /// the arc start in 2D, the colatitude from the axis in 3D. `None` when
    /// the direction lies outside the closed opening (beyond `tol`).
    pub fn coordinate(&self, direction: &Point, tol: f64) -> Option<f64> {
        match *self {
            Opening::Arc { start, end } => {
                let len = end - start;
                let phi = direction.0[1].atan2(direction.0[0]);
                let off = (phi - start).rem_euclid(TAU);
                if off <= len + tol {
                    Some(off.min(len))
                } else if off >= TAU - tol {
                    Some(0.0)
                } else {
                    None
                }
            }
            Opening::Cap { axis, colatitude } => {
                let n = direction.norm();
                if n == 0.0 {
                    return None;
                }
                let c = (direction.dot(&axis) / n).clamp(-1.0, 1.0);
                let psi = c.acos();
                (psi <= colatitude + tol).then(|| psi.min(colatitude))
            }
        }
    }

    /// Strict membership of a direction in the open opening.
    pub fn contains_direction(&self, direction: &Point) -> bool {
        match *self {
            Opening::Arc { start, end } => {
                let phi = direction.0[1].atan2(direction.0[0]);
                let off = (phi - start).rem_euclid(TAU);
                off > 0.0 && off < end - start
            }
            Opening::Cap { axis, colatitude } => {
                let n = direction.norm();
                n > 0.0 && direction.dot(&axis) > n * colatitude.cos()
            }
        }
    }

    /// Unit vector for a coordinate value (inverse of [`Opening::coordinate`];
    /// 3D directions are taken in a fixed meridian plane).
    pub fn direction_at(&self, coordinate: f64) -> Point {
        match *self {
            Opening::Arc { start, .. } => {
                let a = start + coordinate;
                Point::new2(a.cos(), a.sin())
            }
            Opening::Cap { axis, .. } => {
                let perp = perpendicular(&axis);
                axis * coordinate.cos() + perp * coordinate.sin()
            }
        }
    }

    /// Whether the two openings share a direction (up to `tol`).
    pub fn overlaps(&self, other: &Opening, tol: f64) -> bool {
        match (*self, *other) {
            (Opening::Arc { start: s1, end: e1 }, Opening::Arc { start: s2, end: e2 }) => {
                let (l1, l2) = (e1 - s1, e2 - s2);
                let d = (s2 - s1).rem_euclid(TAU);
                d < l1 - tol || d > TAU - l2 + tol
            }
            (
                Opening::Cap {
                    axis: a1,
                    colatitude: c1,
                },
                Opening::Cap {
                    axis: a2,
                    colatitude: c2,
                },
            ) => {
                let angle = (a1.dot(&a2) / (a1.norm() * a2.norm())).clamp(-1.0, 1.0).acos();
                angle < c1 + c2 - tol
            }
            _ => true,
        }
    }
}

/// A unit vector orthogonal to `axis`.
fn perpendicular(axis: &Point) -> Point {
    let a = axis.0;
    let trial = if a[0].abs() < 0.9 {
        Point::new3(1.0, 0.0, 0.0)
    } else {
        Point::new3(0.0, 1.0, 0.0)
    };
    let p = trial - *axis * trial.dot(axis);
    p * (1.0 / p.norm())
}

/// `C(a, 𝔇, R) = {x : |x − a| > R, (x − a)/|x − a| ∈ 𝔇}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedCone {
    pub vertex: Point,
    pub opening: Opening,
    pub radius: f64,
}

impl TruncatedCone {
    pub fn new(vertex: Point, opening: Opening, radius: f64) -> Self {
        Self {
            vertex,
            opening,
            radius,
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        let w = *x - self.vertex;
        w.norm() > self.radius && self.opening.contains_direction(&w)
    }

    /// Distance to the lateral surface `{a + sθ : s ≥ R, θ ∈ ∂𝔇}`.
    pub fn lateral_distance(&self, x: &Point) -> f64 {
        let w = *x - self.vertex;
        let r = self.radius;
        match self.opening {
            Opening::Arc { start, end } => {
                let ea = Point::new2(start.cos(), start.sin());
                let eb = Point::new2(end.cos(), end.sin());
                ray_distance(&w, &ea, r).min(ray_distance(&w, &eb, r))
            }
            Opening::Cap { axis, colatitude } => {
                let (h, q) = meridian(&w, &axis);
                let (c, s) = (colatitude.cos(), colatitude.sin());
                let along = h * c + q * s;
                if along >= r {
                    (h * s - q * c).abs()
                } else {
                    ((h - r * c).powi(2) + (q - r * s).powi(2)).sqrt()
                }
            }
        }
    }

    /// Distance to the rim of the base, `a + R·∂𝔇`.
    pub fn rim_distance(&self, x: &Point) -> f64 {
        rim_distance(&self.vertex, &self.opening, self.radius, x)
    }

    /// Distance to the closed base cap `a + R·𝔇̄`.
    pub fn base_distance(&self, x: &Point) -> f64 {
        let w = *x - self.vertex;
        let n = w.norm();
        if n == 0.0 {
            return self.radius;
        }
        if self.opening.contains_direction(&w) {
            (n - self.radius).abs()
        } else {
            self.rim_distance(x)
        }
    }

    /// Nearest point of the closed base cap.
    pub fn project_to_base(&self, x: &Point) -> Point {
        let w = *x - self.vertex;
        if self.opening.contains_direction(&w) {
            self.vertex + w * (self.radius / w.norm())
        } else {
                match self.opening {
                    Opening::Arc { start, end } => {
                        let pa = self.vertex + Point::new2(start.cos(), start.sin()) * self.radius;
                        let pb = self.vertex + Point::new2(end.cos(), end.sin()) * self.radius;
                        if x.distance(&pa) <= x.distance(&pb) {
                            pa
                        } else {
                            pb
                        }
                    }
                    Opening::Cap { axis, colatitude } => {
                        let (h, _) = meridian(&w, &axis);
                        let radial = w - axis * h;
                        let perp = radial.normalized().unwrap_or_else(|| perpendicular(&axis));
                        self.vertex
                            + (axis * colatitude.cos() + perp * colatitude.sin()) * self.radius
                    }
                }
        }
    }

    /// `(|x − a|, opening coordinate)` for a point in the closed cone.
    pub fn polar(&self, x: &Point, tol: f64) -> Option<(f64, f64)> {
        let w = *x - self.vertex;
        let r = w.norm();
        if r == 0.0 {
            return Some((0.0, 0.0));
        }
        self.opening.coordinate(&w, tol).map(|c| (r, c))
    }
}

fn ray_distance(w: &Point, e: &Point, r: f64) -> f64 {
    let s = w.dot(e);
    if s >= r {
        (*w - *e * s).norm()
    } else {
        (*w - *e * r).norm()
    }
}

/// Axial and radial coordinates of `w` about `axis`.
fn meridian(w: &Point, axis: &Point) -> (f64, f64) {
    let h = w.dot(axis);
    let q = (w.dot(w) - h * h).max(0.0).sqrt();
    (h, q)
}

fn rim_distance(center: &Point, opening: &Opening, radius: f64, x: &Point) -> f64 {
    let w = *x - *center;
    match *opening {
        Opening::Arc { start, end } => {
            let pa = Point::new2(start.cos(), start.sin()) * radius;
            let pb = Point::new2(end.cos(), end.sin()) * radius;
            w.distance(&pa).min(w.distance(&pb))
        }
        Opening::Cap { axis, colatitude } => {
            let (h, q) = meridian(&w, &axis);
            ((h - radius * colatitude.cos()).powi(2) + (q - radius * colatitude.sin()).powi(2))
                .sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.distance(&self.center) < self.radius
    }
}

/// Bounded core plus truncated-cone branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticoneDomain {
    pub dimension: usize,
    pub core: Vec<Ball>,
    pub branches: Vec<TruncatedCone>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Core,
    Branch(usize),
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub tag: Location,
    /// Lower bound on the distance to the boundary; zero outside.
    pub distance: f64,
}

/// Which piece of the boundary a path left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryPiece {
    Lateral(usize),
    Base(usize),
    CoreSphere(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Dimension,
    Opening { branch: usize },
    TruncationRadius { branch: usize },
    CoreRadius { ball: usize },
    MissingCore,
    BranchesIntersect { first: usize, second: usize },
    BaseDetached { branch: usize },
    BranchMeetsCore { branch: usize, ball: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl MulticoneDomain {
    pub fn new(dimension: usize, core: Vec<Ball>, branches: Vec<TruncatedCone>) -> Self {
        Self {
            dimension,
            core,
            branches,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    /// A bare truncated cone, treated as a one-branch multicone with an
    /// empty core.
    pub fn single_cone(cone: TruncatedCone) -> Self {
        Self::new(cone.opening.dimension(), Vec::new(), vec![cone])
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Index of the core ball whose sphere carries the base of branch `j`.
    pub fn glued_ball(&self, j: usize) -> Option<usize> {
        let b = &self.branches[j];
        self.core.iter().position(|ball| {
            ball.center.distance(&b.vertex) <= self.tolerance
                && (ball.radius - b.radius).abs() <= self.tolerance
        })
    }

    /// Largest truncation radius over the branches.
    pub fn max_truncation_radius(&self) -> f64 {
        self.branches.iter().map(|b| b.radius).fold(0.0, f64::max)
    }

    pub fn classify(&self, x: &Point) -> PointLocation {
        let tag = self.locate(x);
        let distance = match tag {
            Location::Outside => 0.0,
            _ => self.pieces().min_distance(x),
        };
        PointLocation { tag, distance }
    }

    pub fn locate(&self, x: &Point) -> Location {
        for (j, b) in self.branches.iter().enumerate() {
            if b.contains(x) {
                return Location::Branch(j);
            }
        }
        if self.core.iter().any(|ball| ball.contains(x)) {
            return Location::Core;
        }
        // points on a glued base are interior to the domain
        for (j, b) in self.branches.iter().enumerate() {
            let w = *x - b.vertex;
            if (w.norm() - b.radius).abs() <= self.tolerance
                && b.opening.contains_direction(&w)
                && self.glued_ball(j).is_some()
            {
                return Location::Core;
            }
        }
        Location::Outside
    }

    pub fn distance_to_boundary(&self, x: &Point) -> Result<f64, GeometryError> {
        match self.locate(x) {
            Location::Outside => Err(GeometryError::OutsideDomain(x.0)),
            _ => Ok(self.pieces().min_distance(x)),
        }
    }

    pub fn pieces(&self) -> BoundaryPieces {
        BoundaryPieces::new(self)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Bounding radius about the origin of the core and all branch bases.
    pub fn extent(&self) -> f64 {
        let core = self
            .core
            .iter()
            .map(|b| b.center.norm() + b.radius)
            .fold(0.0, f64::max);
        let bases = self
            .branches
            .iter()
            .map(|b| b.vertex.norm() + b.radius)
            .fold(0.0, f64::max);
        core.max(bases)
    }
}

/// Opening with its trigonometry cached for repeated membership tests.
#[derive(Debug, Clone, Copy)]
enum Frame {
    Arc { ea: Point, eb: Point, wide: bool },
    Cap { axis: Point, cos: f64, sin: f64 },
}

impl Frame {
    fn new(opening: &Opening) -> Self {
        match *opening {
            Opening::Arc { start, end } => Frame::Arc {
                ea: Point::new2(start.cos(), start.sin()),
                eb: Point::new2(end.cos(), end.sin()),
                wide: end - start > PI,
            },
            Opening::Cap { axis, colatitude } => Frame::Cap {
                axis,
                cos: colatitude.cos(),
                sin: colatitude.sin(),
            },
        }
    }

    fn contains(&self, w: &Point) -> bool {
        match *self {
            Frame::Arc { ea, eb, wide } => {
                if w.0[0] == 0.0 && w.0[1] == 0.0 {
                    return false;
                }
                if wide {
                    !(cross2(&eb, w) >= 0.0 && cross2(w, &ea) >= 0.0)
                } else {
                    cross2(&ea, w) > 0.0 && cross2(w, &eb) > 0.0
                }
            }
            Frame::Cap { axis, cos, .. } => {
                let n = w.norm();
                n > 0.0 && w.dot(&axis) > n * cos
            }
        }
    }

    fn lateral_distance(&self, w: &Point, r: f64) -> f64 {
        match *self {
            Frame::Arc { ea, eb, .. } => ray_distance(w, &ea, r).min(ray_distance(w, &eb, r)),
            Frame::Cap { axis, cos, sin } => {
                let (h, q) = meridian(w, &axis);
                if h * cos + q * sin >= r {
                    (h * sin - q * cos).abs()
                } else {
                    ((h - r * cos).powi(2) + (q - r * sin).powi(2)).sqrt()
                }
            }
        }
    }

    fn rim_distance(&self, w: &Point, r: f64) -> f64 {
        match *self {
            Frame::Arc { ea, eb, .. } => w.distance(&(ea * r)).min(w.distance(&(eb * r))),
            Frame::Cap { axis, cos, sin } => {
                let (h, q) = meridian(w, &axis);
                ((h - r * cos).powi(2) + (q - r * sin).powi(2)).sqrt()
            }
        }
    }
}

fn cross2(a: &Point, b: &Point) -> f64 {
    a.0[0] * b.0[1] - a.0[1] * b.0[0]
}

#[derive(Debug, Clone, Copy)]
struct CompiledCone {
    vertex: Point,
    radius: f64,
    frame: Frame,
    glued: bool,
}

#[derive(Debug, Clone)]
enum PieceGeom {
    Lateral(CompiledCone),
    Base(CompiledCone),
    Sphere { ball: Ball, holes: Vec<Frame> },
}

/// Boundary of a domain split into pieces with exact distance functions.
///
/// Also carries a precomputed copy of the domain for fast point location.
#[derive(Debug, Clone)]
pub struct BoundaryPieces {
    tags: Vec<BoundaryPiece>,
    geoms: Vec<PieceGeom>,
    cones: Vec<CompiledCone>,
    core: Vec<Ball>,
    tolerance: f64,
}

impl BoundaryPieces {
    pub fn new(domain: &MulticoneDomain) -> Self {
        let cones: Vec<CompiledCone> = domain
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| CompiledCone {
                vertex: b.vertex,
                radius: b.radius,
                frame: Frame::new(&b.opening),
                glued: domain.glued_ball(j).is_some(),
            })
            .collect();
        let mut tags = Vec::new();
        let mut geoms = Vec::new();
        for (j, c) in cones.iter().enumerate() {
            tags.push(BoundaryPiece::Lateral(j));
            geoms.push(PieceGeom::Lateral(*c));
        }
        for (j, c) in cones.iter().enumerate() {
            if !c.glued {
                tags.push(BoundaryPiece::Base(j));
                geoms.push(PieceGeom::Base(*c));
            }
        }
        for (k, ball) in domain.core.iter().enumerate() {
            let holes = domain
                .branches
                .iter()
                .enumerate()
                .filter(|(j, _)| domain.glued_ball(*j) == Some(k))
                .map(|(_, b)| Frame::new(&b.opening))
                .collect();
            tags.push(BoundaryPiece::CoreSphere(k));
            geoms.push(PieceGeom::Sphere { ball: *ball, holes });
        }
        Self {
            tags,
            geoms,
            cones,
            core: domain.core.clone(),
            tolerance: domain.tolerance,
        }
    }

    /// Same result as [`MulticoneDomain::locate`].
    pub fn locate(&self, x: &Point) -> Location {
        for (j, c) in self.cones.iter().enumerate() {
            let w = *x - c.vertex;
            if w.norm() > c.radius && c.frame.contains(&w) {
                return Location::Branch(j);
            }
        }
        if self.core.iter().any(|ball| ball.contains(x)) {
            return Location::Core;
        }
        for c in &self.cones {
            let w = *x - c.vertex;
            if c.glued
                && (w.norm() - c.radius).abs() <= self.tolerance
                && c.frame.contains(&w)
            {
                return Location::Core;
            }
        }
        Location::Outside
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, i: usize) -> BoundaryPiece {
        self.tags[i]
    }

    pub fn distance(&self, i: usize, x: &Point) -> f64 {
        match &self.geoms[i] {
            PieceGeom::Lateral(c) => c.frame.lateral_distance(&(*x - c.vertex), c.radius),
            PieceGeom::Base(c) => {
                let w = *x - c.vertex;
                let n = w.norm();
                if n == 0.0 {
                    c.radius
                } else if c.frame.contains(&w) {
                    (n - c.radius).abs()
                } else {
                    c.frame.rim_distance(&w, c.radius)
                }
            }
            PieceGeom::Sphere { ball, holes } => {
                let w = *x - ball.center;
                for h in holes {
                    if h.contains(&w) {
                        return h.rim_distance(&w, ball.radius);
                    }
                }
                (w.norm() - ball.radius).abs()
            }
        }
    }

    /// Fills `out[i]` with the distance to piece `i`; returns the minimum.
    pub fn distances_into(&self, x: &Point, out: &mut [f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (i, slot) in out.iter_mut().enumerate().take(self.len()) {
            let d = self.distance(i, x);
            *slot = d;
            best = best.min(d);
        }
        best
    }

    pub fn min_distance(&self, x: &Point) -> f64 {
        (0..self.len())
            .map(|i| self.distance(i, x))
            .fold(f64::INFINITY, f64::min)
    }
}

fn validate(domain: &MulticoneDomain) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = domain.tolerance;
    let dim = domain.dimension;
    if dim != 2 && dim != 3 {
        out.push(Violation {
            kind: ViolationKind::Dimension,
            message: format!("dimension must be 2 or 3, got {dim}"),
        });
        return out;
    }
    let mut usable = vec![true; domain.branches.len()];
    for (j, b) in domain.branches.iter().enumerate() {
        if b.opening.dimension() != dim {
            out.push(Violation {
                kind: ViolationKind::Dimension,
                message: format!("branch {j} opening does not match dimension {dim}"),
            });
            usable[j] = false;
        }
        for msg in b.opening.violations() {
            out.push(Violation {
                kind: ViolationKind::Opening { branch: j },
                message: format!("branch {j}: {msg}"),
            });
            usable[j] = false;
        }
        if !(b.radius > 0.0) {
            out.push(Violation {
                kind: ViolationKind::TruncationRadius { branch: j },
                message: format!("branch {j}: truncation radius must be positive"),
            });
            usable[j] = false;
        }
    }
    for (k, ball) in domain.core.iter().enumerate() {
        if !(ball.radius > 0.0) {
            out.push(Violation {
                kind: ViolationKind::CoreRadius { ball: k },
                message: format!("core ball {k}: radius must be positive"),
            });
        }
    }
    if domain.core.is_empty() && domain.branches.len() != 1 {
        out.push(Violation {
            kind: ViolationKind::MissingCore,
            message: "a domain without a core must consist of exactly one branch".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x6d75_6c74_6963_6f6e);

    // pairwise disjointness of branches
    for i in 0..domain.branches.len() {
        for j in (i + 1)..domain.branches.len() {
            if !(usable[i] && usable[j]) {
                continue;
            }
            let (a, b) = (&domain.branches[i], &domain.branches[j]);
            let intersect = if a.opening.overlaps(&b.opening, tol) {
                true
            } else if a.vertex.distance(&b.vertex) <= tol {
                false
            } else {
                let center = (a.vertex + b.vertex) * 0.5;
                let sep = a.vertex.distance(&b.vertex);
                let radius = 20.0 * (sep + a.radius.max(b.radius));
                sample_ball(&mut rng, dim, center, radius, OVERLAP_SAMPLES)
                    .any(|p| a.contains(&p) && b.contains(&p))
            };
            if intersect {
                out.push(Violation {
                    kind: ViolationKind::BranchesIntersect {
                        first: i,
                        second: j,
                    },
                    message: format!("branches intersect: {i} and {j}"),
                });
            }
        }
    }

    // branch interiors against core balls
    for (j, b) in domain.branches.iter().enumerate() {
        if !usable[j] {
            continue;
        }
        for (k, ball) in domain.core.iter().enumerate() {
            if !(ball.radius > 0.0) {
                continue;
            }
            let centered = ball.center.distance(&b.vertex) <= tol;
            let meets = if centered {
                ball.radius > b.radius + tol
            } else {
                sample_ball(&mut rng, dim, ball.center, ball.radius, OVERLAP_SAMPLES / 10)
                    .any(|p| b.contains(&p))
            };
            if meets {
                out.push(Violation {
                    kind: ViolationKind::BranchMeetsCore { branch: j, ball: k },
                    message: format!("branch {j} intersects core ball {k}"),
                });
            }
        }
    }

    // every base point sits on the boundary of the core
    if !domain.core.is_empty() {
        for (j, b) in domain.branches.iter().enumerate() {
            if !usable[j] {
                continue;
            }
            let detached = base_samples(b).any(|p| {
                let on_closure = domain
                    .core
                    .iter()
                    .any(|ball| p.distance(&ball.center) <= ball.radius + tol);
                let inside = domain
                    .core
                    .iter()
                    .any(|ball| p.distance(&ball.center) < ball.radius - tol);
                !on_closure || inside
            });
            if detached {
                out.push(Violation {
                    kind: ViolationKind::BaseDetached { branch: j },
                    message: format!("branch {j}: base does not lie on the core boundary"),
                });
            }
        }
    }
    out
}

fn sample_ball(
    rng: &mut ChaCha8Rng,
    dim: usize,
    center: Point,
    radius: f64,
    count: usize,
) -> impl Iterator<Item = Point> + '_ {
    (0..count).map(move |_| loop {
        let mut c = [0.0; 3];
        for v in c.iter_mut().take(dim) {
            *v = rng.random_range(-1.0..1.0);
        }
        let p = Point(c);
        if p.norm() <= 1.0 {
            break center + p * radius;
        }
    })
}

fn base_samples(cone: &TruncatedCone) -> impl Iterator<Item = Point> + '_ {
    let width = cone.opening.width();
    let n = 65;
    (1..n).flat_map(move |i| {
        let c = width * i as f64 / n as f64;
        let dirs: Vec<Point> = match cone.opening {
            Opening::Arc { .. } => vec![cone.opening.direction_at(c)],
            Opening::Cap { axis, .. } => {
                let p1 = perpendicular(&axis);
                let p2 = cross(&axis, &p1);
                (0..8)
                    .map(|k| {
                        let phi = TAU * k as f64 / 8.0;
                        axis * c.cos() + (p1 * phi.cos() + p2 * phi.sin()) * c.sin()
                    })
                    .collect()
            }
        };
        dirs.into_iter()
            .map(move |d| cone.vertex + d * cone.radius)
    })
}

fn cross(a: &Point, b: &Point) -> Point {
    let (a, b) = (a.0, b.0);
    Point([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}
