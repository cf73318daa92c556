//! Two-class decision regions for softmax, NSL, A-Softmax and LMCL, written
//! as plot-ready CSVs.
//!
//! cargo run --example decision_regions -- [out_dir]

use std::fs::File;
use std::path::PathBuf;

use marginlab::bounds::{decision_regions, lmcl_margin_width, GridSpec, RegionLabel, RegionLoss};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "regions".into()));
    std::fs::create_dir_all(&dir).unwrap();

    let cases = [
        ("softmax_unequal", RegionLoss::Softmax { norms: (1.0, 1.6) }),
        ("nsl", RegionLoss::Nsl),
        ("asoftmax_k4", RegionLoss::ASoftmax { multiplier: 4.0 }),
        ("lmcl_m0.35", RegionLoss::Lmcl { m: 0.35 }),
    ];
    for (name, loss) in cases {
        let grid = decision_regions(
            loss,
            GridSpec::new(GridSpec::DEFAULT_RESOLUTION, loss.natural_space()),
        )
        .unwrap();
        let path = dir.join(format!("{name}.csv"));
        grid.write_csv(File::create(&path).unwrap()).unwrap();
        println!(
            "{name:<16} margin cells {:>6}  overlap cells {:>6}  -> {}",
            grid.count(RegionLabel::Margin),
            grid.count(RegionLabel::Overlap),
            path.display()
        );
        if let RegionLoss::Lmcl { m } = loss {
            println!(
                "{:<16} band width {:.4} measured, {:.4} predicted, grid spacing {:.4}",
                "",
                grid.measured_band_width(),
                lmcl_margin_width(m),
                grid.grid().spacing()
            );
        }
    }
}
