//! Tour of the linear-algebra layer: norms, tensor products, symmetric
//! square roots, Loewner comparison, and SPD inversion, with the identities
//! that tie them together.
//!
//! ```bash
//! cargo run --example linalg_tour
//! ```

use ensrf::linalg::{
    hs_norm, loewner_leq, spd_inverse, spectral_norm, sym_sqrt, tensor, SymmetricPsd,
};
use nalgebra::{DMatrix, DVector};

fn main() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    println!("A = {a}");
    println!("spectral norm |A|    = {:.6}", spectral_norm(&a).unwrap());
    println!("Hilbert-Schmidt |A|  = {:.6} (always >= spectral)", hs_norm(&a).unwrap());

    let u = DVector::from_vec(vec![1.0, 2.0]);
    let v = DVector::from_vec(vec![3.0, 4.0]);
    let t = tensor(&u, &v).unwrap();
    println!("\nu (x) v = {t}");
    println!(
        "|u (x) v|_HS = {:.6}, |u||v| = {:.6} (equal by construction)",
        hs_norm(&t).unwrap(),
        u.norm() * v.norm()
    );

    let q = SymmetricPsd::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
    let root = sym_sqrt(&q).unwrap();
    println!("\nQ = {}", q.matrix());
    println!("Q^(1/2) = {:.6}", root.matrix());
    println!(
        "|Q^(1/2) Q^(1/2) - Q| = {:.3e}",
        spectral_norm(&(root.matrix() * root.matrix() - q.matrix())).unwrap()
    );

    let inv = spd_inverse(&q).unwrap();
    println!(
        "|Q Q^(-1) - I| = {:.3e}",
        spectral_norm(&(q.matrix() * inv.matrix() - DMatrix::identity(2, 2))).unwrap()
    );

    let smaller = SymmetricPsd::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
    println!(
        "\nLoewner order: smaller <= Q is {}, Q <= smaller is {}",
        loewner_leq(smaller.matrix(), q.matrix()).unwrap(),
        loewner_leq(q.matrix(), smaller.matrix()).unwrap()
    );
}
