use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BoundError;

/// Two-class decision rule to map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionLoss {
    /// Raw inner products with weight norms `(|W1|, |W2|)`.
    Softmax {
        norms: (f64, f64),
    },
    Nsl,
    /// Angular margin `cos(k theta_own) >= cos(theta_other)` with integer-like multiplier `k >= 1`.
    #[serde(rename = "asoftmax")]
    ASoftmax {
        multiplier: f64,
    },
    Lmcl {
        m: f64,
    },
}

impl RegionLoss {
    pub fn name(&self) -> &'static str {
        match self {
            RegionLoss::Softmax { .. } => "softmax",
            RegionLoss::Nsl => "nsl",
            RegionLoss::ASoftmax { .. } => "asoftmax",
            RegionLoss::Lmcl { .. } => "lmcl",
        }
    }

    /// Coordinate space the rule is usually drawn in.
    pub fn natural_space(&self) -> RegionSpace {
        match self {
            RegionLoss::Lmcl { .. } => RegionSpace::Cosine,
            _ => RegionSpace::Angle,
        }
    }

    fn validate(&self) -> Result<(), BoundError> {
        match *self {
            RegionLoss::Softmax { norms: (a, b) }
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) =>
            {
                Err(BoundError::Config(format!(
                    "weight norms must be positive, got ({a}, {b})"
                )))
            }
            RegionLoss::ASoftmax { multiplier }
                if !(multiplier >= 1.0 && multiplier.is_finite()) =>
            {
                Err(BoundError::Config(format!(
                    "A-Softmax multiplier must be >= 1, got {multiplier}"
                )))
            }
            RegionLoss::Lmcl { m } if !(0.0..1.0).contains(&m) => Err(BoundError::Config(format!(
                "LMCL margin must lie in [0, 1), got {m}"
            ))),
            _ => Ok(()),
        }
    }

    /// Signed slack of the class-1 and class-2 acceptance inequalities at
    /// angles `(theta1, theta2)`; a class accepts the point when its slack is
    /// `>= 0`.
    ///
    /// Softmax accepts class 1 when `a cos(theta1) >= b cos(theta2)` for
    /// either assignment `(a, b)` of the weight-norm pair, since the norms
    /// are learned and not tied to a cosine-space position. With unequal
    /// norms the two acceptance regions overlap.
    pub fn slack(&self, theta1: f64, theta2: f64) -> (f64, f64) {
        self.slack_at(Point::from_angle(theta1), Point::from_angle(theta2))
    }

    fn slack_at(&self, p1: Point, p2: Point) -> (f64, f64) {
        let (theta1, theta2, c1, c2) = (p1.theta, p2.theta, p1.cos, p2.cos);
        match *self {
            RegionLoss::Softmax { norms: (a, b) } => (
                (a * c1 - b * c2).max(b * c1 - a * c2),
                (a * c2 - b * c1).max(b * c2 - a * c1),
            ),
            RegionLoss::Nsl => (c1 - c2, c2 - c1),
            RegionLoss::ASoftmax { multiplier: k } => {
                ((k * theta1).cos() - c2, (k * theta2).cos() - c1)
            }
            RegionLoss::Lmcl { m } => (c1 - c2 - m, c2 - c1 - m),
        }
    }

    pub fn label(&self, theta1: f64, theta2: f64) -> RegionLabel {
        self.label_at(Point::from_angle(theta1), Point::from_angle(theta2))
    }

    fn label_at(&self, p1: Point, p2: Point) -> RegionLabel {
        let (d1, d2) = self.slack_at(p1, p2);
        if d1 > 0.0 && d2 > 0.0 {
            RegionLabel::Overlap
        } else if d1 < 0.0 && d2 < 0.0 {
            RegionLabel::Margin
        } else if d1 >= 0.0 && (d2 < 0.0 || d1 >= d2) {
            // points exactly on a shared boundary go to class 1
            RegionLabel::C1
        } else {
            RegionLabel::C2
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Point {
    theta: f64,
    cos: f64,
}

impl Point {
    fn from_angle(theta: f64) -> Self {
        Self {
            theta,
            cos: theta.cos(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSpace {
    /// Axes are `theta1, theta2` in `[0, pi]`.
    Angle,
    /// Axes are `cos(theta1), cos(theta2)` in `[-1, 1]`.
    Cosine,
}

impl RegionSpace {
    fn range(self) -> (f64, f64) {
        match self {
            RegionSpace::Angle => (0.0, PI),
            RegionSpace::Cosine => (-1.0, 1.0),
        }
    }

    fn point(self, x: f64) -> Point {
        match self {
            RegionSpace::Angle => Point::from_angle(x),
            RegionSpace::Cosine => Point {
                theta: x.clamp(-1.0, 1.0).acos(),
                cos: x,
            },
        }
    }

    fn headers(self) -> [&'static str; 2] {
        match self {
            RegionSpace::Angle => ["theta1", "theta2"],
            RegionSpace::Cosine => ["cos_theta1", "cos_theta2"],
        }
    }
}

/// Square sampling grid: `resolution` nodes per axis, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub space: RegionSpace,
}

impl GridSpec {
    pub const DEFAULT_RESOLUTION: usize = 512;

    pub fn new(resolution: usize, space: RegionSpace) -> Self {
        Self { resolution, space }
    }

    /// Distance between neighbouring nodes.
    pub fn spacing(&self) -> f64 {
        let (lo, hi) = self.space.range();
        (hi - lo) / (self.resolution - 1) as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        let (lo, hi) = self.space.range();
        if i + 1 == self.resolution {
            hi
        } else {
            lo + i as f64 * self.spacing()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    C1,
    C2,
    /// Neither class accepts the point.
    Margin,
    /// Both classes accept the point.
    Overlap,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::C1 => "C1",
            RegionLabel::C2 => "C2",
            RegionLabel::Margin => "MARGIN",
            RegionLabel::Overlap => "OVERLAP",
        }
    }
}

/// Labeled grid; row `j` holds the points with second coordinate index `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionGrid {
    loss: RegionLoss,
    grid: GridSpec,
    labels: Vec<RegionLabel>,
}

/// Labels every node of `grid` under `loss`. Rows are evaluated in parallel
/// and merged in order, so the result does not depend on the thread count.
pub fn decision_regions(loss: RegionLoss, grid: GridSpec) -> Result<RegionGrid, BoundError> {
    loss.validate()?;
    if grid.resolution < 2 {
        return Err(BoundError::Config(format!(
            "grid resolution must be >= 2, got {}",
            grid.resolution
        )));
    }
    let n = grid.resolution;
    let labels: Vec<RegionLabel> = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| {
            let p2 = grid.space.point(grid.coordinate(j));
            (0..n).map(move |i| loss.label_at(grid.space.point(grid.coordinate(i)), p2))
        })
        .collect();
    Ok(RegionGrid { loss, grid, labels })
}

impl RegionGrid {
    pub fn loss(&self) -> RegionLoss {
        self.loss
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn label(&self, i1: usize, i2: usize) -> RegionLabel {
        self.labels[i2 * self.grid.resolution + i1]
    }

    pub fn count(&self, label: RegionLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Number of `MARGIN` nodes in row `i2`.
    pub fn margin_cells_in_row(&self, i2: usize) -> usize {
        (0..self.grid.resolution)
            .filter(|&i1| self.label(i1, i2) == RegionLabel::Margin)
            .count()
    }

    /// Perpendicular width of the margin band measured along the middle
    /// row, assuming a band parallel to the diagonal: the horizontal run of
    /// margin nodes times the spacing, divided by `sqrt(2)`.
    pub fn measured_band_width(&self) -> f64 {
        let mid = self.grid.resolution / 2;
        self.margin_cells_in_row(mid) as f64 * self.grid.spacing() / std::f64::consts::SQRT_2
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let [h1, h2] = self.grid.space.headers();
        w.write_record([h1, h2, "label"])?;
        let n = self.grid.resolution;
        for i2 in 0..n {
            let y = self.grid.coordinate(i2).to_string();
            for i1 in 0..n {
                w.write_record([
                    self.grid.coordinate(i1).to_string().as_str(),
                    y.as_str(),
                    self.label(i1, i2).as_str(),
                ])?;
            }
        }
        w.flush()
    }
}

/// Perpendicular width `sqrt(2) m` of the LMCL margin band in
/// `(cos theta1, cos theta2)` coordinates.
pub fn lmcl_margin_width(m: f64) -> f64 {
    std::f64::consts::SQRT_2 * m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, space: RegionSpace) -> GridSpec {
        GridSpec::new(n, space)
    }

    #[test]
    fn nsl_has_no_margin_or_overlap() {
        for space in [RegionSpace::Angle, RegionSpace::Cosine] {
            let g = decision_regions(RegionLoss::Nsl, grid(101, space)).unwrap();
            assert_eq!(g.count(RegionLabel::Margin), 0);
            assert_eq!(g.count(RegionLabel::Overlap), 0);
            assert!(g.count(RegionLabel::C1) > 0 && g.count(RegionLabel::C2) > 0);
        }
    }

    #[test]
    fn lmcl_zero_margin_is_the_diagonal() {
        let g =
            decision_regions(RegionLoss::Lmcl { m: 0.0 }, grid(64, RegionSpace::Cosine)).unwrap();
        assert_eq!(g.count(RegionLabel::Margin), 0);
        assert_eq!(g.count(RegionLabel::Overlap), 0);
        for i in 0..64 {
            assert_eq!(g.label(i, i), RegionLabel::C1);
            if i + 1 < 64 {
                assert_eq!(g.label(i, i + 1), RegionLabel::C2);
                assert_eq!(g.label(i + 1, i), RegionLabel::C1);
            }
        }
    }

    #[test]
    fn softmax_unequal_norms_overlap() {
        let g = decision_regions(
            RegionLoss::Softmax { norms: (2.0, 1.0) },
            grid(128, RegionSpace::Angle),
        )
        .unwrap();
        assert!(g.count(RegionLabel::Overlap) > 0);
        assert_eq!(g.count(RegionLabel::Margin), 0);
        let even = decision_regions(
            RegionLoss::Softmax { norms: (1.0, 1.0) },
            grid(128, RegionSpace::Angle),
        )
        .unwrap();
        assert_eq!(even.count(RegionLabel::Overlap), 0);
    }

    #[test]
    fn asoftmax_both_accept_at_origin() {
        let loss = RegionLoss::ASoftmax { multiplier: 2.0 };
        let (d1, d2) = loss.slack(0.0, 0.0);
        assert!(d1 >= 0.0 && d2 >= 0.0);
        let g = decision_regions(loss, grid(256, RegionSpace::Angle)).unwrap();
        assert_eq!(g.margin_cells_in_row(0), 0);
        assert!(g.margin_cells_in_row(40) > g.margin_cells_in_row(10));
    }

    #[test]
    fn lmcl_band_width() {
        assert_eq!(lmcl_margin_width(0.0), 0.0);
        assert!((lmcl_margin_width(0.35) - 0.4950).abs() < 1e-4);
        let spec = grid(512, RegionSpace::Cosine);
        let g = decision_regions(RegionLoss::Lmcl { m: 0.2 }, spec).unwrap();
        assert!((g.measured_band_width() - lmcl_margin_width(0.2)).abs() <= spec.spacing());
    }

    #[test]
    fn invalid_configs() {
        assert!(decision_regions(RegionLoss::Nsl, grid(1, RegionSpace::Angle)).is_err());
        assert!(
            decision_regions(RegionLoss::Lmcl { m: 1.2 }, grid(8, RegionSpace::Angle)).is_err()
        );
        assert!(decision_regions(
            RegionLoss::ASoftmax { multiplier: 0.5 },
            grid(8, RegionSpace::Angle)
        )
        .is_err());
        assert!(decision_regions(
            RegionLoss::Softmax { norms: (0.0, 1.0) },
            grid(8, RegionSpace::Angle)
        )
        .is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = decision_regions(RegionLoss::Nsl, grid(3, RegionSpace::Angle)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "theta1,theta2,label");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[1], "0,0,C1");
    }
}
