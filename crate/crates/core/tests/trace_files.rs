use saddleprox::diagnostics::{check_iterate_bound, check_value_bound};
use saddleprox::oracle::{generate_instance, random_start, solve_quadratic_saddle};
use saddleprox::planner::plan;
use saddleprox::solver::run;
use saddleprox::{GeneratorSpec, PlannerOptions, RateMode, RunOptions, TraceDocument, TraceMeta, TraceTable};

#[test]
fn solver_trace_survives_csv_and_json() {
    let (p, inst) = generate_instance(&GeneratorSpec {
        n: 6,
        m: 5,
        mu: 0.7,
        nu: 1.3,
        norm_k: 2.0,
        seed: 17,
    })
    .unwrap();
    let c = solve_quadratic_saddle(&inst).unwrap();
    let r = plan(p.mu(), p.nu(), p.norm_k(), RateMode::ValueKSquared, &PlannerOptions::default()).unwrap();
    let (x0, y0) = random_start(6, 5, 17);
    let opts = RunOptions {
        max_iter: 60,
        displacement_tol: None,
        oracle: Some(c.point.clone()),
        ergodic_xi: Some(r.plan.xi),
        keep_iterates: true,
        ..Default::default()
    };
    let t = run(&p, &r.plan.params(), x0, y0, &opts).unwrap();
    let it = check_iterate_bound(&t, &r.plan, &r.certificate, p.norm_k(), &c.point, 1e-9).unwrap();
    let vr = check_value_bound(&t, &r.plan, c.f_star, &c.point, 1e-9).unwrap();
    let meta = TraceMeta::from_plan(&r.plan, Some(17));
    let table = TraceTable::from_trace(&t, meta.clone(), Some(&it), Some(&vr));

    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let back = TraceTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, table);
    let mut again = Vec::new();
    back.write_csv(&mut again).unwrap();
    assert_eq!(again, buf);

    assert_eq!(back.rows.len(), 61);
    assert!(back.rows[0].f_hat.is_none() && back.rows[1].f_hat.is_some());
    assert!(back.rows.iter().all(|r| r.margin_iterate.unwrap() >= -1e-9));
    let dist = back.column("dist2").unwrap();
    assert_eq!(dist[5], t.records[5].dist2_x.unwrap() + t.records[5].dist2_y.unwrap());
    assert!(back.column("no_such_column").is_err());

    let doc = TraceDocument::new(meta, t);
    let json = serde_json::to_string(&doc).unwrap();
    assert_eq!(TraceDocument::from_json(&json).unwrap(), doc);
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(TraceTable::read_csv("k,dist2_x\n0,1\n".as_bytes()).is_err());
    assert!(TraceTable::read_csv("".as_bytes()).is_err());
}
