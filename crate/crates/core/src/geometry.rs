//! Planar primitives: triangle measures, barycentric coordinates, convex
//! clipping and a uniform-grid cell locator.

pub type Point = [f64; 2];

#[inline]
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed area, positive for counter-clockwise vertices.
#[inline]
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(a, b, c)
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[inline]
pub fn centroid(t: &[Point; 3]) -> Point {
    [
        (t[0][0] + t[1][0] + t[2][0]) / 3.0,
        (t[0][1] + t[1][1] + t[2][1]) / 3.0,
    ]
}

/// Barycentric coordinates of `p` with respect to triangle `t`.
#[inline]
pub fn barycentric(p: Point, t: &[Point; 3]) -> [f64; 3] {
    let det = cross(t[0], t[1], t[2]);
    let l1 = cross(t[0], p, t[2]) / det;
    let l2 = cross(t[0], t[1], p) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Longest edge length.
pub fn diameter(t: &[Point; 3]) -> f64 {
    dist(t[0], t[1]).max(dist(t[1], t[2])).max(dist(t[2], t[0]))
}

/// `2 * inradius / circumradius`; 1 for the equilateral triangle.
pub fn radius_ratio(t: &[Point; 3]) -> f64 {
    let a = dist(t[1], t[2]);
    let b = dist(t[2], t[0]);
    let c = dist(t[0], t[1]);
    let area = signed_area(t[0], t[1], t[2]).abs();
    let r_in = 2.0 * area / (a + b + c);
    let r_circ = a * b * c / (4.0 * area);
    2.0 * r_in / r_circ
}

/// Area of a simple polygon given counter-clockwise.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

/// Clips the convex polygon `subject` against the counter-clockwise triangle
/// `clip` (Sutherland-Hodgman). `out` receives the intersection polygon.
pub fn clip_by_triangle(subject: &[Point], clip: &[Point; 3], out: &mut Vec<Point>) {
    let mut input: Vec<Point> = subject.to_vec();
    out.clear();
    for e in 0..3 {
        let (a, b) = (clip[e], clip[(e + 1) % 3]);
        out.clear();
        let n = input.len();
        if n == 0 {
            break;
        }
        for i in 0..n {
            let p = input[i];
            let q = input[(i + 1) % n];
            let dp = cross(a, b, p);
            let dq = cross(a, b, q);
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        std::mem::swap(&mut input, out);
    }
    std::mem::swap(&mut input, out);
}

/// Removes repeated and collinear vertices from a convex polygon. `tol` is a
/// length scale below which points are merged.
pub fn clean_polygon(poly: &mut Vec<Point>, tol: f64) {
    let mut changed = true;
    while changed && poly.len() >= 3 {
        changed = false;
        let n = poly.len();
        for i in 0..n {
            let prev = poly[(i + n - 1) % n];
            let cur = poly[i];
            let next = poly[(i + 1) % n];
            let base = dist(prev, next);
            let duplicate = dist(prev, cur) <= tol;
            // twice the triangle area over the base is the height of `cur`
            let collinear = base > tol && cross(prev, cur, next).abs() <= tol * base;
            if duplicate || collinear {
                poly.remove(i);
                changed = true;
                break;
            }
        }
    }
    if poly.len() < 3 {
        poly.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut bb = BoundingBox {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for p in pts {
            bb.min[0] = bb.min[0].min(p[0]);
            bb.min[1] = bb.min[1].min(p[1]);
            bb.max[0] = bb.max[0].max(p[0]);
            bb.max[1] = bb.max[1].max(p[1]);
        }
        bb
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.min[0] - tol
            && p[0] <= self.max[0] + tol
            && p[1] >= self.min[1] - tol
            && p[1] <= self.max[1] + tol
    }

    /// True if `p` lies on the boundary of the box within `tol`.
    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        self.contains(p, tol)
            && ((p[0] - self.min[0]).abs() <= tol
                || (p[0] - self.max[0]).abs() <= tol
                || (p[1] - self.min[1]).abs() <= tol
                || (p[1] - self.max[1]).abs() <= tol)
    }
}

/// Uniform background grid mapping bins to the triangles overlapping them.
#[derive(Debug, Clone)]
pub struct CellLocator {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl CellLocator {
    /// Builds a grid with bins of roughly `bin_size` over the given triangles.
    pub fn new(triangles: &[[Point; 3]], bin_size: f64) -> Self {
        let bbox = BoundingBox::of_points(triangles.iter().flatten());
        let nx = ((bbox.width() / bin_size).ceil() as usize).clamp(1, 1 << 14);
        let ny = ((bbox.height() / bin_size).ceil() as usize).clamp(1, 1 << 14);
        let dx = bbox.width() / nx as f64;
        let dy = bbox.height() / ny as f64;
        let mut loc = CellLocator {
            bbox,
            nx,
            ny,
            dx,
            dy,
            offsets: vec![0; nx * ny + 1],
            items: Vec::new(),
        };
        let ranges: Vec<_> = triangles
            .iter()
            .map(|t| loc.bin_range(&BoundingBox::of_points(t.iter())))
            .collect();
        for r in &ranges {
            for j in r.2..=r.3 {
                for i in r.0..=r.1 {
                    loc.offsets[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 0..nx * ny {
            loc.offsets[k + 1] += loc.offsets[k];
        }
        let mut fill = loc.offsets.clone();
        loc.items = vec![0; loc.offsets[nx * ny]];
        for (c, r) in ranges.iter().enumerate() {
            for j in r.2..=r.3 {
                for i in r.0..=r.1 {
                    let b = j * nx + i;
                    loc.items[fill[b]] = c;
                    fill[b] += 1;
                }
            }
        }
        loc
    }

    fn bin_index(&self, v: f64, lo: f64, d: f64, n: usize) -> usize {
        let k = ((v - lo) / d).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    /// Inclusive bin ranges `(i0, i1, j0, j1)` overlapping a box.
    fn bin_range(&self, bb: &BoundingBox) -> (usize, usize, usize, usize) {
        (
            self.bin_index(bb.min[0], self.bbox.min[0], self.dx, self.nx),
            self.bin_index(bb.max[0], self.bbox.min[0], self.dx, self.nx),
            self.bin_index(bb.min[1], self.bbox.min[1], self.dy, self.ny),
            self.bin_index(bb.max[1], self.bbox.min[1], self.dy, self.ny),
        )
    }

    /// Calls `f` once for every triangle whose bins overlap `bb`. `seen` is
    /// scratch space of length `n_triangles`, reset on return.
    pub fn for_each_candidate(&self, bb: &BoundingBox, seen: &mut Vec<bool>, mut f: impl FnMut(usize)) {
        let (i0, i1, j0, j1) = self.bin_range(bb);
        let mut touched = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let b = j * self.nx + i;
                for &c in &self.items[self.offsets[b]..self.offsets[b + 1]] {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                        f(c);
                    }
                }
            }
        }
        for c in touched {
            seen[c] = false;
        }
    }

    /// Candidate triangles for a single point.
    pub fn candidates_at(&self, p: Point) -> &[usize] {
        if !self.bbox.contains(p, 1e-12 * (self.bbox.width() + self.bbox.height())) {
            return &[];
        }
        let i = self.bin_index(p[0], self.bbox.min[0], self.dx, self.nx);
        let j = self.bin_index(p[1], self.bbox.min[1], self.dy, self.ny);
        let b = j * self.nx + i;
        &self.items[self.offsets[b]..self.offsets[b + 1]]
    }

    /// Triangle containing `p` (largest minimum barycentric coordinate among
    /// candidates), if that coordinate is at least `-tol`.
    pub fn locate(&self, triangles: &[[Point; 3]], p: Point, tol: f64) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &c in self.candidates_at(p) {
            let l = barycentric(p, &triangles[c]);
            let m = l[0].min(l[1]).min(l[2]);
            if best.as_ref().map_or(true, |b| m > b.2) {
                best = Some((c, l, m));
            }
        }
        match best {
            Some((c, l, m)) if m >= -tol => Some((c, l)),
            _ => None,
        }
    }
}
