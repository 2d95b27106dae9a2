use std::time::Instant;

use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use vemch::assembly::{SystemAssembler, DEFAULT_CORNER_ANGLE_TOL};
use vemch::mesh::generate_quad_mesh;
use vemch::problems::{interpolate_initial, InitialDatum};

#[test]
#[ignore]
fn faer_lu_variants() {
    faer::set_global_parallelism(faer::Par::Seq);
    let mesh = generate_quad_mesh(64);
    let asm = SystemAssembler::new(&mesh, DEFAULT_CORNER_ANGLE_TOL).unwrap();
    let u0 = interpolate_initial(&InitialDatum::Ellipse, &mesh, &asm);
    let mut jac = asm.jacobian_template();
    asm.jacobian(&u0, 5e-5, 0.01, &mut jac);
    println!("n = {}, nnz = {}", jac.n, jac.nnz());

    let sym = SymbolicSparseColMatRef::new_checked(jac.n, jac.n, &jac.row_ptr, None, &jac.col_idx);
    use faer::sparse::linalg::lu::LuSymbolicParams;
    use faer::sparse::linalg::SupernodalThreshold;

    for (name, thresh) in [
        ("default", SupernodalThreshold::default()),
        ("force simplicial", SupernodalThreshold::FORCE_SIMPLICIAL),
        ("force supernodal", SupernodalThreshold::FORCE_SUPERNODAL),
    ] {
        let params = LuSymbolicParams {
            supernodal_flop_ratio_threshold: thresh,
            ..Default::default()
        };
        let t = Instant::now();
        let symbolic = faer::sparse::linalg::lu::factorize_symbolic_lu(sym, params).unwrap();
        let t_sym = t.elapsed();
        let mut numeric = faer::sparse::linalg::lu::NumericLu::<usize, f64>::new();
        let par = faer::Par::Seq;
        let mut mem = faer::dyn_stack::MemBuffer::try_new(
            symbolic.factorize_numeric_lu_scratch::<f64>(par, Default::default()),
        )
        .unwrap();
        let mat = SparseColMatRef::new(sym, &jac.values);
        let t = Instant::now();
        for _ in 0..3 {
            symbolic
                .factorize_numeric_lu::<f64>(
                    &mut numeric,
                    mat,
                    par,
                    faer::dyn_stack::MemStack::new(&mut mem),
                    Default::default(),
                )
                .unwrap();
        }
        println!("{name}: symbolic {t_sym:?}, numeric {:?}/call", t.elapsed() / 3);
    }
}
