//! Level-set extraction on rectilinear grids by marching squares.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Scalar samples on a rectilinear grid; `values[j * xs.len() + i]` sits at
/// `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 || values.len() != xs.len() * ys.len() {
            return Err(Error::InvalidConfig(format!(
                "grid of {} x {} with {} values",
                xs.len(),
                ys.len(),
                values.len()
            )));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::InvalidConfig(
                "grid axes must be strictly increasing".into(),
            ));
        }
        Ok(GridField { xs, ys, values })
    }

    /// Samples `f(x, y)` on the grid.
    pub fn from_fn(xs: Vec<f64>, ys: Vec<f64>, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let values = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(xs, ys, values)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    /// Area of the region where the field is at or above `threshold`,
    /// counting each qualifying sample with the area of its cell (half
    /// cells on the border).
    pub fn area_above(&self, threshold: f64) -> f64 {
        let widths = cell_widths(&self.xs);
        let heights = cell_widths(&self.ys);
        let mut area = 0.0;
        for (j, h) in heights.iter().enumerate() {
            for (i, w) in widths.iter().enumerate() {
                if self.at(i, j) >= threshold {
                    area += w * h;
                }
            }
        }
        area
    }
}

/// Width of the Voronoi cell of each sample along one axis.
fn cell_widths(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 {
                v[0]
            } else {
                0.5 * (v[i - 1] + v[i])
            };
            let hi = if i + 1 == n {
                v[n - 1]
            } else {
                0.5 * (v[i] + v[i + 1])
            };
            hi - lo
        })
        .collect()
}

/// A contour piece: closed loops repeat no vertex; open pieces end on the
/// grid boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polyline {
    /// Shoelace area of the polygon formed by closing the polyline.
    pub fn shoelace_area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            let (x0, y0) = self.points[i];
            let (x1, y1) = self.points[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        0.5 * s.abs()
    }
}

/// Edge of the sample lattice: horizontal from `(i, j)` to `(i + 1, j)` or
/// vertical from `(i, j)` to `(i, j + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Marching-squares contour of `field` at `threshold`, with crossings placed
/// by linear interpolation along cell edges. Ambiguous saddle cells are
/// resolved with the mean of the four corners. NaN samples count as below
/// the threshold.
pub fn mismatch_boundary(field: &GridField, threshold: f64) -> Vec<Polyline> {
    let (nx, ny) = (field.xs.len(), field.ys.len());
    let above = |i: usize, j: usize| {
        let v = field.at(i, j);
        !v.is_nan() && v >= threshold
    };
    let value = |i: usize, j: usize| {
        let v = field.at(i, j);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let point = |e: Edge| -> (f64, f64) {
        let (a, b, pa, pb) = match e {
            Edge::H(i, j) => (
                value(i, j),
                value(i + 1, j),
                (field.xs[i], field.ys[j]),
                (field.xs[i + 1], field.ys[j]),
            ),
            Edge::V(i, j) => (
                value(i, j),
                value(i, j + 1),
                (field.xs[i], field.ys[j]),
                (field.xs[i], field.ys[j + 1]),
            ),
        };
        let t = (threshold - a) / (b - a);
        let t = if t.is_finite() {
            t.clamp(0.0, 1.0)
        } else {
            0.5
        };
        (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // corners counter-clockwise from bottom-left
            let c = [
                above(i, j),
                above(i + 1, j),
                above(i + 1, j + 1),
                above(i, j + 1),
            ];
            let code = c
                .iter()
                .enumerate()
                .fold(0u8, |acc, (b, &on)| acc | ((on as u8) << b));
            let (bottom, right, top, left) = (
                Edge::H(i, j),
                Edge::V(i + 1, j),
                Edge::H(i, j + 1),
                Edge::V(i, j),
            );
            let centre_above = || {
                let m =
                    0.25 * (value(i, j) + value(i + 1, j) + value(i + 1, j + 1) + value(i, j + 1));
                m >= threshold
            };
            match code {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if centre_above() {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if centre_above() {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut incident: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let walk = |start_seg: usize, start_edge: Edge, used: &mut Vec<bool>| -> (Vec<Edge>, bool) {
        let mut chain = vec![start_edge];
        let mut seg = start_seg;
        let mut at = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            if next == start_edge {
                return (chain, true);
            }
            chain.push(next);
            at = next;
            match incident[&next].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => return (chain, false),
            }
        }
    };

    let mut lines = Vec::new();
    // open pieces start at edges touched by a single segment
    let mut ends: Vec<Edge> = incident
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    ends.sort_by_key(|e| match *e {
        Edge::H(i, j) => (0, j, i),
        Edge::V(i, j) => (1, j, i),
    });
    for e in ends {
        let s = incident[&e][0];
        if used[s] {
            continue;
        }
        let (chain, closed) = walk(s, e, &mut used);
        lines.push(Polyline {
            points: chain.into_iter().map(point).collect(),
            closed,
        });
    }
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (chain, closed) = walk(s, segments[s].0, &mut used);
        lines.push(Polyline {
            points: chain.into_iter().map(point).collect(),
            closed,
        });
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn constant_below_is_empty() {
        let f = GridField::from_fn(axis(0.0, 1.0, 5), axis(0.0, 1.0, 5), |_, _| -10.0).unwrap();
        assert!(mismatch_boundary(&f, -3.0).is_empty());
        assert_eq!(f.area_above(-3.0), 0.0);
    }

    #[test]
    fn radial_field_gives_circle() {
        let r_star = 1.3;
        let n = 81;
        let xs = axis(-3.0, 3.0, n);
        let ys = axis(-3.0, 3.0, n);
        let cell = 6.0 / (n - 1) as f64;
        // decreasing in r, equal to -3 dB at r_star
        let f = GridField::from_fn(xs, ys, |x, y| {
            -3.0 - 10.0 * ((x * x + y * y).sqrt() / r_star).log10()
        })
        .unwrap();
        let lines = mismatch_boundary(&f, -3.0);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        for &(x, y) in &lines[0].points {
            assert!(((x * x + y * y).sqrt() - r_star).abs() < 0.5 * cell);
        }
        let disc = std::f64::consts::PI * r_star * r_star;
        assert!((lines[0].shoelace_area() / disc - 1.0).abs() < 0.01);
        assert!((f.area_above(-3.0) / disc - 1.0).abs() < 0.05);
    }

    #[test]
    fn boundary_terminated_piece() {
        let f = GridField::from_fn(axis(0.0, 1.0, 11), axis(0.0, 1.0, 11), |x, _| x).unwrap();
        let lines = mismatch_boundary(&f, 0.55);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        assert_eq!(lines[0].points.len(), 11);
        assert!(lines[0].points.iter().all(|p| (p.0 - 0.55).abs() < 1e-12));
    }

    #[test]
    fn saddle_yields_two_pieces() {
        let f = GridField::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(mismatch_boundary(&f, 0.0).len(), 1);
        let f = GridField::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_eq!(mismatch_boundary(&f, 0.5).len(), 2);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(GridField::new(vec![0.0], vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(GridField::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0; 4]).is_err());
    }
}
