use std::time::Instant;

use vemch::assembly::{SystemAssembler, DEFAULT_CORNER_ANGLE_TOL};
use vemch::linsolve::DirectLu;
use vemch::mesh::generate_quad_mesh;
use vemch::problems::{interpolate_initial, InitialDatum};
use vemch::timestepper::{NewtonOptions, State, TimeStepper};

#[test]
#[ignore]
fn windowed_step_cost() {
    let mesh = generate_quad_mesh(64);
    let asm = SystemAssembler::new(&mesh, DEFAULT_CORNER_ANGLE_TOL).unwrap();
    let gamma = 0.01;
    let dt = 5e-5;
    let u0 = interpolate_initial(&InitialDatum::Ellipse, &mesh, &asm);
    let mut stepper = TimeStepper::new(&asm, gamma, dt, NewtonOptions::default(), Box::new(DirectLu::new()));
    stepper.reuse_jacobian = true;
    let mut state = State::new(u0, 0.0, &asm, gamma);
    let window = 50;
    for w in 0..8 {
        let t = Instant::now();
        let mut iters = 0;
        for _ in 0..window {
            let (next, report) = stepper.step(&state).unwrap();
            iters += report.iterations;
            state = next;
        }
        println!(
            "steps {:4}-{:4}: {:?}/step, {:.1} newton its/step, energy {:.5}",
            w * window,
            (w + 1) * window,
            t.elapsed() / window as u32,
            iters as f64 / window as f64,
            state.energy
        );
    }
}
