//! Perforation sets in the unit square and the uniform coarse mesh.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MsfemError, Result};

/// Axis-aligned rectangle given by its center and side lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() < 0.5 * self.width && (y - self.center[1]).abs() < 0.5 * self.height
    }
}

/// Parameters from which a [`PerforationSet`] is built.
#[derive(Debug, Clone, PartialEq)]
pub enum PerforationSpec {
    None,
    /// Discs of radius `radius_factor·ε` centred at `((i+½)ε, (j+½)ε)`.
    PeriodicDiscs { epsilon: f64, radius_factor: f64 },
    /// As above with every centre moved by `shift`.
    ShiftedPeriodicDiscs {
        epsilon: f64,
        radius_factor: f64,
        shift: [f64; 2],
    },
    /// `count` rectangles with uniform centres in the square and uniform sides.
    RandomRectangles {
        count: usize,
        width: [f64; 2],
        height: [f64; 2],
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerforationKind {
    None,
    PeriodicDiscs,
    ShiftedPeriodicDiscs,
    RandomRectangles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerforationSet {
    pub kind: PerforationKind,
    pub epsilon: f64,
    pub radius_factor: f64,
    pub shift: [f64; 2],
    pub rects: Vec<Rect>,
    pub seed: u64,
}

impl PerforationSet {
    pub fn empty() -> Self {
        PerforationSet {
            kind: PerforationKind::None,
            epsilon: 0.0,
            radius_factor: 0.0,
            shift: [0.0; 2],
            rects: Vec::new(),
            seed: 0,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius_factor * self.epsilon
    }

    /// Membership in the open perforation set `B_ε`.
    pub fn indicator(&self, x: f64, y: f64) -> bool {
        match self.kind {
            PerforationKind::None => false,
            PerforationKind::PeriodicDiscs | PerforationKind::ShiftedPeriodicDiscs => {
                let e = self.epsilon;
                let dx = x - self.shift[0] - 0.5 * e;
                let dy = y - self.shift[1] - 0.5 * e;
                let rx = dx - (dx / e).round() * e;
                let ry = dy - (dy / e).round() * e;
                let r = self.radius();
                rx * rx + ry * ry < r * r
            }
            PerforationKind::RandomRectangles => self.rects.iter().any(|r| r.contains(x, y)),
        }
    }

    /// Smallest perforation feature (disc diameter, shortest rectangle side),
    /// with a label naming the perforation.
    pub fn smallest_feature(&self) -> Option<(f64, String)> {
        match self.kind {
            PerforationKind::None => None,
            PerforationKind::PeriodicDiscs | PerforationKind::ShiftedPeriodicDiscs => Some((
                2.0 * self.radius(),
                format!("disc of radius {} (epsilon {})", self.radius(), self.epsilon),
            )),
            PerforationKind::RandomRectangles => self
                .rects
                .iter()
                .enumerate()
                .map(|(i, r)| (r.width.min(r.height), i))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(s, i)| {
                    let r = &self.rects[i];
                    (
                        s,
                        format!(
                            "rectangle #{i} at ({:.4}, {:.4}) of size {:.4} x {:.4}",
                            r.center[0], r.center[1], r.width, r.height
                        ),
                    )
                }),
        }
    }

    /// Warning when fewer than four cells of size `h` span the smallest feature.
    pub fn resolution_warning(&self, h: f64) -> Option<String> {
        let (size, label) = self.smallest_feature()?;
        let cells = size / h;
        (cells < 4.0).then(|| format!("{label} spans {cells:.2} fine cells at h = {h:.3e}; at least 4 are required"))
    }
}

pub fn build_perforations(spec: &PerforationSpec) -> Result<PerforationSet> {
    let set = match *spec {
        PerforationSpec::None => PerforationSet::empty(),
        PerforationSpec::PeriodicDiscs { epsilon, radius_factor } => {
            disc_set(PerforationKind::PeriodicDiscs, epsilon, radius_factor, [0.0; 2])?
        }
        PerforationSpec::ShiftedPeriodicDiscs {
            epsilon,
            radius_factor,
            shift,
        } => disc_set(PerforationKind::ShiftedPeriodicDiscs, epsilon, radius_factor, shift)?,
        PerforationSpec::RandomRectangles {
            count,
            width,
            height,
            seed,
        } => {
            for (name, r) in [("width", width), ("height", height)] {
                if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                    return Err(MsfemError::param(name, format!("range {r:?} must satisfy 0 < lo <= hi")));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rects = (0..count)
                .map(|_| {
                    let cx = rng.gen::<f64>();
                    let cy = rng.gen::<f64>();
                    let w = rng.gen_range(width[0]..=width[1]);
                    let h = rng.gen_range(height[0]..=height[1]);
                    Rect {
                        center: [cx, cy],
                        width: w,
                        height: h,
                    }
                })
                .collect();
            PerforationSet {
                kind: PerforationKind::RandomRectangles,
                epsilon: 0.0,
                radius_factor: 0.0,
                shift: [0.0; 2],
                rects,
                seed,
            }
        }
    };
    check_not_covering(&set)?;
    Ok(set)
}

fn disc_set(kind: PerforationKind, epsilon: f64, radius_factor: f64, shift: [f64; 2]) -> Result<PerforationSet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(MsfemError::param("epsilon", format!("{epsilon} must be positive")));
    }
    if !(radius_factor > 0.0) {
        return Err(MsfemError::param("radius_factor", format!("{radius_factor} must be positive")));
    }
    Ok(PerforationSet {
        kind,
        epsilon,
        radius_factor,
        shift,
        rects: Vec::new(),
        seed: 0,
    })
}

fn check_not_covering(set: &PerforationSet) -> Result<()> {
    if set.kind == PerforationKind::None {
        return Ok(());
    }
    let m = 256;
    let free = (0..m).any(|j| {
        (0..m).any(|i| !set.indicator((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64))
    });
    if free {
        Ok(())
    } else {
        Err(MsfemError::Geometry("perforations cover the whole domain".into()))
    }
}

/// An edge of the coarse mesh. `H(i, j)` runs from `(iH, jH)` to `((i+1)H, jH)`;
/// `V(i, j)` from `(iH, jH)` to `(iH, (j+1)H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeId {
    H(usize, usize),
    V(usize, usize),
}

/// Local side of an element, in the order bottom, right, top, left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

/// Uniform `nc × nc` quadrilateral mesh of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoarseMesh {
    pub nc: usize,
}

impl CoarseMesh {
    pub fn new(nc: usize) -> Result<Self> {
        if nc == 0 {
            return Err(MsfemError::param("H", "need at least one coarse element"));
        }
        Ok(CoarseMesh { nc })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nc as f64
    }

    pub fn num_elements(&self) -> usize {
        self.nc * self.nc
    }

    pub fn elements(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nc).flat_map(move |ey| (0..self.nc).map(move |ex| (ex, ey)))
    }

    pub fn edge(&self, (ex, ey): (usize, usize), side: Side) -> EdgeId {
        match side {
            Side::Bottom => EdgeId::H(ex, ey),
            Side::Top => EdgeId::H(ex, ey + 1),
            Side::Left => EdgeId::V(ex, ey),
            Side::Right => EdgeId::V(ex + 1, ey),
        }
    }

    pub fn is_internal(&self, e: EdgeId) -> bool {
        match e {
            EdgeId::H(_, j) => j > 0 && j < self.nc,
            EdgeId::V(i, _) => i > 0 && i < self.nc,
        }
    }

    /// The two elements sharing an internal edge.
    pub fn neighbours(&self, e: EdgeId) -> Option<[(usize, usize); 2]> {
        if !self.is_internal(e) {
            return None;
        }
        Some(match e {
            EdgeId::H(i, j) => [(i, j - 1), (i, j)],
            EdgeId::V(i, j) => [(i - 1, j), (i, j)],
        })
    }

    pub fn internal_edges(&self) -> Vec<EdgeId> {
        let n = self.nc;
        let mut out = Vec::new();
        for j in 1..n {
            for i in 0..n {
                out.push(EdgeId::H(i, j));
            }
        }
        for j in 0..n {
            for i in 1..n {
                out.push(EdgeId::V(i, j));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_membership() {
        let p = build_perforations(&PerforationSpec::PeriodicDiscs {
            epsilon: 0.1,
            radius_factor: 0.2,
        })
        .unwrap();
        assert!(p.indicator(0.05, 0.05));
        assert!(!p.indicator(0.1, 0.1));
        let s = build_perforations(&PerforationSpec::ShiftedPeriodicDiscs {
            epsilon: 0.1,
            radius_factor: 0.2,
            shift: [0.05, 0.05],
        })
        .unwrap();
        assert!(!s.indicator(0.05, 0.05));
        assert!(s.indicator(0.1, 0.1));
    }

    #[test]
    fn rectangles_are_reproducible() {
        let spec = PerforationSpec::RandomRectangles {
            count: 100,
            width: [0.02, 0.05],
            height: [0.02, 0.05],
            seed: 4,
        };
        let a = build_perforations(&spec).unwrap();
        assert_eq!(a, build_perforations(&spec).unwrap());
        assert_eq!(a.rects.len(), 100);
        assert!(a.rects.iter().all(|r| (0.02..=0.05).contains(&r.width)));
    }

    #[test]
    fn covering_geometry_is_rejected() {
        let r = build_perforations(&PerforationSpec::PeriodicDiscs {
            epsilon: 0.1,
            radius_factor: 0.8,
        });
        assert!(matches!(r, Err(MsfemError::Geometry(_))));
    }

    #[test]
    fn resolution_warning_names_the_perforation() {
        let p = build_perforations(&PerforationSpec::PeriodicDiscs {
            epsilon: 0.03,
            radius_factor: 0.35,
        })
        .unwrap();
        assert!(p.resolution_warning(1.0 / 512.0).is_none());
        let w = p.resolution_warning(1.0 / 128.0).unwrap();
        assert!(w.contains("disc of radius"));
    }

    #[test]
    fn mesh_edges() {
        let m = CoarseMesh::new(2).unwrap();
        assert_eq!(m.internal_edges().len(), 4);
        assert_eq!(m.neighbours(EdgeId::V(1, 0)), Some([(0, 0), (1, 0)]));
        assert!(!m.is_internal(m.edge((0, 0), Side::Left)));
        assert!(m.is_internal(m.edge((0, 0), Side::Top)));
    }
}
