//! Closed-form threshold from its ingredients, showing which Lambert W
//! branch produces omega0.

use seqvad::calibration::{
    compute_threshold, compute_v_m, far_bound, omega0_detail, theta_constant,
};
use seqvad::lambert::{lambert_w, Branch};

fn main() -> seqvad::Result<()> {
    for x in [-0.3, -0.1, 0.0, 1.0, std::f64::consts::E, 100.0] {
        let w0 = lambert_w(Branch::Principal, x)?;
        print!("W0({x:.4}) = {w0:.12}");
        if x < 0.0 {
            print!("   W-1 = {:.12}", lambert_w(Branch::MinusOne, x)?);
        }
        println!();
    }

    let (m, d_alpha) = (4, 0.2);
    let v_m = compute_v_m(m)?;
    println!("\nv_{m} = {v_m:.6}, theta = {:.6e}", theta_constant(v_m, d_alpha, m));
    for phi in [1e-3, 1e-1, 10.0] {
        let o = omega0_detail(v_m, d_alpha, m, phi)?;
        let h = compute_threshold(o.omega0, 0.05)?;
        println!("phi={phi:<6} {o:?}\n  h={h:.6} bound={:.6}", far_bound(o.omega0, h));
    }
    Ok(())
}
