fn main() {
    use asep_core::laplace::*;
    for &t in &[0.1f64, 1.0, 7.0, 42.0] {
        let tal = invert(|s| Ok(1.0/s), t, &LaplaceInverterSpec::default()).unwrap();
        println!("talbot32 t={t}: err {:.3e}", (tal - 1.0).abs());
    }
    for order in [8usize, 12, 16, 18] {
        let gs = invert(|s| Ok(1.0/s), 3.0, &LaplaceInverterSpec::gaver_stehfest(order).unwrap()).unwrap();
        println!("gs{order}: err {:.3e}", (gs - 1.0).abs());
    }
    let f = |s: num_complex::Complex64| Ok(1.0/(s*s+1.0));
    let (v, dev) = invert_cross_checked(f, 1.2, 32, 16, 0.0).unwrap();
    println!("sin: v err {:.3e} cross dev {:.3e}", (v - 1.2f64.sin()).abs(), dev);
    let (v, dev) = invert_cross_checked(f, 1.2, 32, 12, 0.0).unwrap();
    println!("sin gs12: v err {:.3e} cross dev {:.3e}", (v - 1.2f64.sin()).abs(), dev);
}
