use hegnn::ckks::CkksBackend;
use hegnn::he::poly::{cmp_plain, horner_plain};
use hegnn::he::{aprx_cmp, poly_eval, HeBackend, HeParams, PolyStrategy, Threshold, P_CMP};
use hegnn::Error;

fn backend(levels: usize) -> CkksBackend {
    CkksBackend::new(HeParams::toy(1 << 10, levels), 11).unwrap()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn ramp(len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len)
        .map(|i| lo + (hi - lo) * i as f64 / (len - 1) as f64)
        .collect()
}

#[test]
fn encrypt_decrypt() {
    let be = backend(3);
    let v = ramp(be.slots(), -5.0, 5.0);
    let ct = be.encrypt(&v).unwrap();
    assert!(max_err(&be.decrypt(&ct).unwrap(), &v) < 1e-6);
    let low = be.encrypt_at(&v, 0).unwrap();
    assert!(max_err(&be.decrypt(&low).unwrap(), &v) < 1e-6);
}

#[test]
fn add_mult_rescale() {
    let be = backend(4);
    let a = ramp(be.slots(), -2.0, 2.0);
    let b = ramp(be.slots(), 3.0, -1.0);
    let ca = be.encrypt(&a).unwrap();
    let cb = be.encrypt(&b).unwrap();
    let sum = be.add(&ca, &cb).unwrap();
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    assert!(max_err(&be.decrypt(&sum).unwrap(), &want) < 1e-6);

    let prod = be.mult(&ca, &cb).unwrap();
    assert_eq!(prod.level(), 3);
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    assert!(max_err(&be.decrypt(&prod).unwrap(), &want) < 1e-5);
    assert!((prod.scale() / be.canonical_scale(3) - 1.0).abs() < 1e-5);

    // a chain of products stays accurate down to level 0
    let mut acc = ca.clone();
    let mut plain = a.clone();
    while acc.level() >= 2 {
        let x = be.mod_switch(&cb, acc.level()).unwrap();
        acc = be.mult(&acc, &x).unwrap();
        acc = be.mult_const(&acc, 0.5).unwrap();
        plain = plain.iter().zip(&b).map(|(p, y)| p * y * 0.5).collect();
    }
    assert_eq!(acc.level(), 0);
    let got = be.decrypt(&acc).unwrap();
    assert!(max_err(&got, &plain) < 1e-4, "{}", max_err(&got, &plain));
    assert!(matches!(be.mult(&acc, &acc), Err(Error::DepthExhausted(_))));
}

#[test]
fn plaintext_products_land_on_canonical_scale() {
    let be = backend(3);
    let a = ramp(be.slots(), -1.0, 1.0);
    let ca = be.encrypt(&a).unwrap();
    let w = ramp(be.slots(), 0.5, 1.5);
    let p = be.mult_vec(&ca, &w).unwrap();
    assert_eq!(p.scale(), be.canonical_scale(2));
    let want: Vec<f64> = a.iter().zip(&w).map(|(x, y)| x * y).collect();
    assert!(max_err(&be.decrypt(&p).unwrap(), &want) < 1e-6);
    let q = be.mult_const(&p, -3.0).unwrap();
    let want: Vec<f64> = want.iter().map(|x| x * -3.0).collect();
    assert!(max_err(&be.decrypt(&q).unwrap(), &want) < 1e-6);
}

#[test]
fn rotations() {
    let be = backend(2);
    let s = be.slots();
    let v = ramp(s, 0.0, 1.0);
    let ct = be.encrypt(&v).unwrap();
    for step in [1i64, 2, 5, -1, -3, s as i64 - 1] {
        let r = be.rotate(&ct, step).unwrap();
        let want: Vec<f64> = (0..s)
            .map(|i| v[(i as i64 + step).rem_euclid(s as i64) as usize])
            .collect();
        assert!(
            max_err(&be.decrypt(&r).unwrap(), &want) < 1e-6,
            "step {step}"
        );
    }
    let lower = be.mod_switch(&ct, 1).unwrap();
    let r = be.rotate(&lower, 3).unwrap();
    assert_eq!(r.level(), 1);
    assert!((be.decrypt(&r).unwrap()[0] - v[3]).abs() < 1e-6);
}

#[test]
fn polynomials_and_comparison() {
    let be = backend(8);
    let x = ramp(be.slots(), -1.0, 1.0);
    let cx = be.encrypt(&x).unwrap();
    let coeffs = [0.1, -0.4, 0.0, 0.7, 0.2];
    for strategy in [PolyStrategy::Horner, PolyStrategy::PatersonStockmeyer] {
        let y = poly_eval(&be, &coeffs, &cx, strategy).unwrap();
        let want: Vec<f64> = x.iter().map(|&v| horner_plain(&coeffs, v)).collect();
        assert!(
            max_err(&be.decrypt(&y).unwrap(), &want) < 1e-5,
            "{strategy:?}"
        );
    }
    let y = poly_eval(&be, &P_CMP, &cx, PolyStrategy::Horner).unwrap();
    assert_eq!(y.level(), 5);
    assert_eq!(y.scale(), be.canonical_scale(5));

    let scores = ramp(be.slots(), 0.0, 8.0);
    let cs = be.encrypt(&scores).unwrap();
    let c = aprx_cmp(
        &be,
        &cs,
        Threshold::Plain(3.5),
        8.0,
        2,
        PolyStrategy::Horner,
    )
    .unwrap();
    assert_eq!(c.level(), 8 - 7);
    let want: Vec<f64> = scores.iter().map(|&s| cmp_plain(s, 3.5, 8.0, 2)).collect();
    assert!(max_err(&be.decrypt(&c).unwrap(), &want) < 1e-5);

    let tau = be.encrypt(&vec![3.5; be.slots()]).unwrap();
    let c2 = aprx_cmp(&be, &cs, Threshold::Enc(&tau), 8.0, 2, PolyStrategy::Horner).unwrap();
    assert!(max_err(&be.decrypt(&c2).unwrap(), &want) < 1e-5);

    assert!(matches!(
        aprx_cmp(
            &be,
            &cs,
            Threshold::Plain(0.0),
            8.0,
            3,
            PolyStrategy::Horner
        ),
        Err(Error::DepthExhausted(_))
    ));
}

#[test]
fn serialization_and_key_reuse() {
    let be = backend(2);
    let v = ramp(be.slots(), -1.0, 1.0);
    let ct = be.encrypt(&v).unwrap();
    let bytes = be.serialize_ct(&ct);
    let back = be.deserialize_ct(&bytes).unwrap();
    assert_eq!(be.decrypt(&back).unwrap(), be.decrypt(&ct).unwrap());
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(be.deserialize_ct(&corrupt).is_err());

    let keys = hegnn::ckks::KeySet::from_bytes(&be.keys().to_bytes()).unwrap();
    let be2 = CkksBackend::from_keys(keys, 99).unwrap();
    assert!(max_err(&be2.decrypt(&ct).unwrap(), &v) < 1e-6);
}

#[test]
fn missing_key_is_reported() {
    let steps = [1i64].into_iter().collect();
    let be = CkksBackend::with_rotations(HeParams::toy(64, 2), 1, &steps).unwrap();
    let ct = be.encrypt(&[1.0, 2.0]).unwrap();
    assert!(be.rotate(&ct, 1).is_ok());
    assert!(matches!(be.rotate(&ct, 2), Err(Error::MissingKey(2))));
}
