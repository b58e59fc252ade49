//! A three-component normal mixture as a harmonium: prior weights,
//! observable density and posterior responsibilities.

use harmonium::experiments::mixture_normal_model;
use harmonium::exfam::categorical_weights;
use harmonium::Result;

fn main() -> Result<()> {
    let (h, c) = mixture_normal_model()?;
    println!("chi = {:.6}, rho = {:.6?}", c.chi, c.rho.as_slice());
    println!("prior weights {:.4?}", categorical_weights(&h.prior_params(&c)?));
    for x in [-3.0, -1.5, 0.0, 1.5, 3.0] {
        let density = h.observable_log_density(&c, &[x])?.exp();
        let post = categorical_weights(&h.posterior_params(&[x])?);
        println!("x = {x:5.1}  q(x) = {density:.5}  q(z | x) = {post:.4?}");
    }
    Ok(())
}
