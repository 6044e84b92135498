use pestctl_core::equilibria::{
    equilibria_with_release, thresholds, EquilibriumLabel, StabilityClass,
};
use pestctl_core::planner::{regime_label, sweep_u, RegimeLabel};
use pestctl_core::simulator::{detect_attractor, integrate, AttractorKind, IntegratorConfig};
use pestctl_core::{Model, NormalizedParams, State};

fn example_rates() -> [f64; 5] {
    let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
    [
        0.1 * (s2 - 1.0),
        0.1,
        0.2 * (s3 - 1.0),
        0.2,
        0.1 * (s3 - 1.0),
    ]
}

fn attractor(p: &NormalizedParams, s0: State, t_end: f64) -> (AttractorKind, f64) {
    let eqs = equilibria_with_release(p).unwrap();
    let traj = integrate(
        &Model::Normalized(*p),
        s0,
        &IntegratorConfig::default().with_t_end(t_end),
    )
    .unwrap();
    let report = detect_attractor(&traj, &eqs).unwrap();
    (report.kind, report.evidence.terminal_distance)
}

#[test]
fn verdicts_match_the_linear_analysis() {
    let [below, controlled, at_elim, elim, at_hopf] = example_rates();
    let p = |u| NormalizedParams::new(0.5, 0.2, u).unwrap();

    // stable focus: convergence to E3
    let (kind, _) = attractor(&p(controlled), State::new(0.3, 0.5), 500.0);
    assert!(
        matches!(
            kind,
            AttractorKind::Equilibrium {
                label: EquilibriumLabel::E3,
                ..
            }
        ),
        "{kind:?}"
    );

    // stable node E2: convergence to (0, u/m)
    let (kind, _) = attractor(&p(elim), State::new(0.3, 0.5), 500.0);
    match kind {
        AttractorKind::Equilibrium { label, target } => {
            assert_eq!(label, EquilibriumLabel::E2);
            assert!((target.y - 1.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }

    // unstable focus and saddle: no equilibrium attracts
    let (kind, _) = attractor(&p(below), State::new(0.25, 0.7), 500.0);
    assert!(
        !matches!(kind, AttractorKind::Equilibrium { .. }),
        "{kind:?}"
    );

    // attracting saddle node: slow approach to E2 along the center manifold
    let (kind, dist) = attractor(&p(at_elim), State::new(0.05, 0.7), 5000.0);
    assert!(
        matches!(
            kind,
            AttractorKind::Equilibrium {
                label: EquilibriumLabel::E2,
                ..
            }
        ) || dist < 1e-3,
        "{kind:?} {dist:e}"
    );

    // weak focus: decaying oscillation, never a sustained cycle
    let (kind, _) = attractor(&p(at_hopf), State::new(0.15, 0.75), 500.0);
    assert!(
        !matches!(kind, AttractorKind::LimitCycle { .. }),
        "{kind:?}"
    );
}

#[test]
fn spot_checked_sweep_agrees_on_every_row() {
    let table = sweep_u(
        0.5,
        0.2,
        &example_rates(),
        Some(&IntegratorConfig::default()),
    )
    .unwrap();
    let labels: Vec<RegimeLabel> = table.rows.iter().map(|r| r.regime).collect();
    assert_eq!(
        labels,
        [
            RegimeLabel::BelowHopf,
            RegimeLabel::AtHopf,
            RegimeLabel::Controlled,
            RegimeLabel::AtElimination,
            RegimeLabel::Eliminating
        ]
    );
    for row in &table.rows {
        assert!(row.is_consistent(), "{row:?}");
        let sc = row.spot_check.as_ref().unwrap();
        assert!(sc.agrees, "u = {}: {:?}", row.u, sc.attractor);
    }
}

#[test]
fn regimes_follow_threshold_order_on_a_parameter_grid() {
    for k in [0.1, 0.5, 2.0, 10.0] {
        for m in [0.1, 0.5, 2.0] {
            let th = thresholds(&NormalizedParams::new(k, m, 0.0).unwrap());
            let cases = [
                (0.5 * th.u_hopf, RegimeLabel::BelowHopf),
                (th.u_hopf, RegimeLabel::AtHopf),
                (0.75 * th.u0, RegimeLabel::Controlled),
                (th.u0, RegimeLabel::AtElimination),
                (1.5 * th.u0, RegimeLabel::Eliminating),
            ];
            for (u, want) in cases {
                let p = NormalizedParams::new(k, m, u).unwrap();
                assert_eq!(regime_label(&p, 1e-9), want, "k={k} m={m} u={u}");
                let e2 = equilibria_with_release(&p).unwrap()[0].class;
                let e2_want = match want {
                    RegimeLabel::AtElimination => StabilityClass::AttractingSaddleNode,
                    RegimeLabel::Eliminating => StabilityClass::StableNode,
                    _ => StabilityClass::Saddle,
                };
                assert_eq!(e2, e2_want);
            }
        }
    }
}
