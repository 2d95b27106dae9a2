//! Manual timing probe for the per-step cost at production mesh sizes.
//! Run with `cargo test -p vemch --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;

use vemch::assembly::{SystemAssembler, DEFAULT_CORNER_ANGLE_TOL};
use vemch::linsolve::{DirectLu, LinearSolver};
use vemch::mesh::generate_quad_mesh;
use vemch::problems::{interpolate_initial, InitialDatum};
use vemch::timestepper::{NewtonOptions, State, TimeStepper};

#[test]
#[ignore]
fn per_step_timing() {
    let mesh = generate_quad_mesh(64);
    let t0 = Instant::now();
    let asm = SystemAssembler::new(&mesh, DEFAULT_CORNER_ANGLE_TOL).unwrap();
    println!("setup (operators + matrices): {:?}", t0.elapsed());
    println!("dofs: {}", asm.n_dofs());

    let gamma = 0.01;
    let dt = 5e-5;
    let u0 = interpolate_initial(&InitialDatum::Ellipse, &mesh, &asm);

    // residual + jacobian assembly timing
    let mut jac = asm.jacobian_template();
    let mut f = vec![0.0; asm.n_dofs()];
    let t = Instant::now();
    for _ in 0..10 {
        asm.residual(&u0, &u0, dt, gamma, None, &mut f);
    }
    println!("residual: {:?}/call", t.elapsed() / 10);
    let t = Instant::now();
    for _ in 0..10 {
        asm.jacobian(&u0, dt, gamma, &mut jac);
    }
    println!("jacobian: {:?}/call", t.elapsed() / 10);

    // direct factor+solve
    let mut direct = DirectLu::new();
    let t = Instant::now();
    direct.prepare(&jac).unwrap();
    println!("direct first prepare (symbolic+numeric): {:?}", t.elapsed());
    let t = Instant::now();
    for _ in 0..5 {
        direct.prepare(&jac).unwrap();
    }
    println!("direct numeric refactor: {:?}/call", t.elapsed() / 5);
    let mut rhs = vec![1.0; asm.n_dofs()];
    let t = Instant::now();
    for _ in 0..5 {
        direct.solve(&jac, &mut rhs).unwrap();
    }
    println!("direct solve: {:?}/call", t.elapsed() / 5);


    // full steps
    for (name, reuse) in [("direct exact", false), ("direct lagged", true)] {
        let mut stepper = TimeStepper::new(
            &asm,
            gamma,
            dt,
            NewtonOptions::default(),
            Box::new(DirectLu::new()) as Box<dyn LinearSolver>,
        );
        stepper.reuse_jacobian = reuse;
        let mut state = State::new(u0.clone(), 0.0, &asm, gamma);
        let t = Instant::now();
        let mut iters = 0;
        for _ in 0..30 {
            let (next, report) = stepper.step(&state).unwrap();
            iters += report.iterations;
            state = next;
        }
        println!(
            "{name}: {:?}/step, {} newton iterations over 30 steps",
            t.elapsed() / 30,
            iters
        );
    }
}
