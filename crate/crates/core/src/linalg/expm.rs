#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use super::{CMatrix, Lu};
use crate::error::{Error, Result};
use crate::C64;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant (Higham 2005).
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch("expm needs a square matrix".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let norm = a.norm_one();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale(real(0.5f64.powi(s)));
    let id = CMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = PADE13;

    let mut inner_u = a6.scale(real(b[13]));
    inner_u.axpy(real(b[11]), &a4);
    inner_u.axpy(real(b[9]), &a2);
    let mut u = a6.matmul(&inner_u);
    u.axpy(real(b[7]), &a6);
    u.axpy(real(b[5]), &a4);
    u.axpy(real(b[3]), &a2);
    u.axpy(real(b[1]), &id);
    let u = a.matmul(&u);

    let mut inner_v = a6.scale(real(b[12]));
    inner_v.axpy(real(b[10]), &a4);
    inner_v.axpy(real(b[8]), &a2);
    let mut v = a6.matmul(&inner_v);
    v.axpy(real(b[6]), &a6);
    v.axpy(real(b[4]), &a4);
    v.axpy(real(b[2]), &a2);
    v.axpy(real(b[0]), &id);

    let lu = Lu::new(&v.sub(&u))?;
    let mut r = lu.solve(&v.add(&u));
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}
