use frontlab::fronts::{self, FrontSeries};
use frontlab::pde::{self, InitialCondition, RunOptions};
use frontlab::{build_grid, Grid, ModelConfig};

fn coarse_grid() -> Grid {
    build_grid(-20.0, 200.0, 40.0, 221, 81).unwrap()
}

#[test]
fn front_position_matches_fine_scan() {
    let grid = coarse_grid();
    let opts = RunOptions::new(30.0);
    let run = pde::run(&ModelConfig::local(), &grid, &InitialCondition::standard_block(), &opts).unwrap();
    let field = &run.final_snapshot().field;
    let (s, _) = fronts::sup_over_theta(field);
    let xs = grid.xs();
    let plateau = fronts::measure_plateau(&s);
    let level = 0.5 * plateau;
    let xf = fronts::front_position(&xs, &s, plateau, 0.5).unwrap();

    // refine by 10 between nodes and take the last upward crossing
    let mut crossing = None;
    for i in 0..xs.len() - 1 {
        for k in 0..10 {
            let (w0, w1) = (k as f64 / 10.0, (k + 1) as f64 / 10.0);
            let a = s[i] + (s[i + 1] - s[i]) * w0;
            let b = s[i] + (s[i + 1] - s[i]) * w1;
            if (a - level) * (b - level) <= 0.0 && a != b {
                crossing = Some(xs[i] + (xs[i + 1] - xs[i]) * w0);
            }
        }
    }
    let crossing = crossing.unwrap();
    assert!((xf - crossing).abs() <= grid.dx, "{xf} vs {crossing}");
    assert!(xf > 50.0 && xf < 190.0, "front at {xf}");
}

#[test]
fn dominant_trait_rises_along_the_flank() {
    let grid = coarse_grid();
    let opts = RunOptions::new(20.0);
    let run = pde::run(&ModelConfig::nonlocal(1.0), &grid, &InitialCondition::standard_block(), &opts).unwrap();
    let field = &run.final_snapshot().field;
    let (s, argmax) = fronts::sup_over_theta(field);
    let plateau = fronts::measure_plateau(&s);
    let flank: Vec<usize> =
        (0..s.len()).filter(|&i| s[i] > 0.05 * plateau && s[i] < 0.95 * plateau && grid.x(i) > 0.0).collect();
    assert!(flank.len() >= 5, "flank too thin: {}", flank.len());
    let thetas: Vec<f64> = flank.iter().map(|&i| argmax[i]).collect();
    for w in thetas.windows(2) {
        assert!(w[1] >= w[0], "trait decreases along the flank: {thetas:?}");
    }
    assert!(thetas.last().unwrap() > thetas.first().unwrap());
}

#[test]
fn front_series_advances_and_fits() {
    let grid = build_grid(-10.0, 120.0, 30.0, 131, 61).unwrap();
    let opts = RunOptions::new(20.0).with_snapshots((1..=20).map(f64::from));
    let run = pde::run(&ModelConfig::local(), &grid, &InitialCondition::standard_block(), &opts).unwrap();
    let series = FrontSeries::from_snapshots(&run.snapshots, 0.5).unwrap();
    let pts = series.points();
    for w in pts.windows(2).skip(3) {
        assert!(w[1].1 >= w[0].1 - grid.dx, "front retreats: {w:?}");
    }
    let fit = fronts::fit_power_law(&pts, (8.0, 20.0)).unwrap();
    assert!(fit.p > 1.0 && fit.p < 2.0, "exponent {}", fit.p);
    let q = fronts::theory_quotients(&series);
    assert!(q.at(20.0).is_some());
}
