use colony_core::stepper::StepControl;
use colony_core::*;

fn simulate() -> RunResult {
    let g = Grid::rect(8.0, 8.0, 128, 128).unwrap();
    let [x0, y0] = g.domain_center();
    let u = Field::from_fn(&g, |x, y| 0.5 * (-((x - x0).powi(2) + (y - y0 - 1.0).powi(2))).exp());
    let c = Field::from_fn(&g, |x, _| 0.1 * x / 8.0);
    let s0 = SimState::new(u, c, Field::constant(&g, 1.0), Field::zeros(&g), 0.0).unwrap();
    run_simulation(
        &s0,
        &ModelParams::fig2(),
        &StepControl::default(),
        &EllipticSolveSettings::default(),
        &Schedule::new(0.2, 0.05),
        &StopRules::default(),
        RunHooks::default(),
    )
    .unwrap()
}

fn bits(r: &RunResult) -> Vec<u64> {
    let mut out: Vec<u64> = r.final_state.fields().iter().flat_map(|(_, f)| f.values().iter().map(|v| v.to_bits())).collect();
    for rec in &r.series.records {
        out.extend([rec.t, rec.m_u, rec.m_c, rec.m_n, rec.m_w, rec.total, rec.sup_u].map(f64::to_bits));
    }
    out
}

#[test]
fn repeated_runs_are_bit_identical() {
    assert_eq!(bits(&simulate()), bits(&simulate()));
}

#[test]
fn thread_count_does_not_change_results() {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = single.install(simulate);
    let b = multi.install(simulate);
    assert_eq!(bits(&a), bits(&b));
}
