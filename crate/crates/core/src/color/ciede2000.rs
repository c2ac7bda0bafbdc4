use super::Lab;

const POW25_7: f64 = 6_103_515_625.0; // 25^7

/// CIEDE2000 color difference with unit parametric factors (kL = kC = kH = 1),
/// including the blue-region rotation term.
pub fn ciede2000(x: Lab, y: Lab) -> f64 {
    let c1 = x.a.hypot(x.b);
    let c2 = y.a.hypot(y.b);
    let c_bar7 = ((c1 + c2) * 0.5).powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + POW25_7)).sqrt());

    let a1 = x.a * (1.0 + g);
    let a2 = y.a * (1.0 + g);
    let c1p = a1.hypot(x.b);
    let c2p = a2.hypot(y.b);
    let h1p = hue_degrees(a1, x.b);
    let h2p = hue_degrees(a2, y.b);

    let dl = y.l - x.l;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh_angle = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * chroma_product.sqrt() * (dh_angle.to_radians() * 0.5).sin();

    let l_bar = (x.l + y.l) * 0.5;
    let c_bar_p = (c1p + c2p) * 0.5;
    let h_bar_p = if chroma_product == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) * 0.5
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) * 0.5
    } else {
        (h1p + h2p - 360.0) * 0.5
    };

    let t = 1.0 - 0.17 * (h_bar_p - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar_p).to_radians().cos()
        + 0.32 * (3.0 * h_bar_p + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar_p - 63.0).to_radians().cos();
    let l50 = (l_bar - 50.0) * (l_bar - 50.0);
    let sl = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let sc = 1.0 + 0.045 * c_bar_p;
    let sh = 1.0 + 0.015 * c_bar_p * t;

    let d_theta = 30.0 * (-((h_bar_p - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let rc = 2.0 * (c_bar_p7 / (c_bar_p7 + POW25_7)).sqrt();
    let rt = -(2.0 * d_theta).to_radians().sin() * rc;

    let tl = dl / sl;
    let tc = dc / sc;
    let th = dh / sh;
    (tl * tl + tc * tc + th * th + rt * tc * th).max(0.0).sqrt()
}

fn hue_degrees(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Second implementation written straight from the CIE formula, working in
    /// radians with explicit case analysis on the hue mean.
    fn reference(l1: f64, a1: f64, b1: f64, l2: f64, a2: f64, b2: f64) -> f64 {
        let cab = ((a1 * a1 + b1 * b1).sqrt() + (a2 * a2 + b2 * b2).sqrt()) / 2.0;
        let g = 0.5 * (1.0 - (cab.powf(7.0) / (cab.powf(7.0) + 25f64.powf(7.0))).sqrt());
        let ap1 = (1.0 + g) * a1;
        let ap2 = (1.0 + g) * a2;
        let cp1 = (ap1 * ap1 + b1 * b1).sqrt();
        let cp2 = (ap2 * ap2 + b2 * b2).sqrt();
        let hp = |b: f64, ap: f64| {
            if b == 0.0 && ap == 0.0 {
                0.0
            } else {
                let h = b.atan2(ap);
                if h < 0.0 {
                    h + 2.0 * PI
                } else {
                    h
                }
            }
        };
        let hp1 = hp(b1, ap1);
        let hp2 = hp(b2, ap2);
        let dlp = l2 - l1;
        let dcp = cp2 - cp1;
        let dhp = if cp1 * cp2 == 0.0 {
            0.0
        } else if (hp2 - hp1).abs() <= PI {
            hp2 - hp1
        } else if hp2 - hp1 > PI {
            hp2 - hp1 - 2.0 * PI
        } else {
            hp2 - hp1 + 2.0 * PI
        };
        let dhp_big = 2.0 * (cp1 * cp2).sqrt() * (dhp / 2.0).sin();
        let lbp = (l1 + l2) / 2.0;
        let cbp = (cp1 + cp2) / 2.0;
        let hbp = if cp1 * cp2 == 0.0 {
            hp1 + hp2
        } else if (hp1 - hp2).abs() <= PI {
            (hp1 + hp2) / 2.0
        } else if hp1 + hp2 < 2.0 * PI {
            (hp1 + hp2 + 2.0 * PI) / 2.0
        } else {
            (hp1 + hp2 - 2.0 * PI) / 2.0
        };
        let deg = PI / 180.0;
        let t = 1.0 - 0.17 * (hbp - 30.0 * deg).cos() + 0.24 * (2.0 * hbp).cos()
            + 0.32 * (3.0 * hbp + 6.0 * deg).cos()
            - 0.20 * (4.0 * hbp - 63.0 * deg).cos();
        let dtheta = 30.0 * deg * (-((hbp / deg - 275.0) / 25.0).powf(2.0)).exp();
        let rc = 2.0 * (cbp.powf(7.0) / (cbp.powf(7.0) + 25f64.powf(7.0))).sqrt();
        let sl = 1.0 + (0.015 * (lbp - 50.0).powf(2.0)) / (20.0 + (lbp - 50.0).powf(2.0)).sqrt();
        let sc = 1.0 + 0.045 * cbp;
        let sh = 1.0 + 0.015 * cbp * t;
        let rt = -(2.0 * dtheta).sin() * rc;
        ((dlp / sl).powf(2.0)
            + (dcp / sc).powf(2.0)
            + (dhp_big / sh).powf(2.0)
            + rt * (dcp / sc) * (dhp_big / sh))
            .sqrt()
    }

    fn de(p: [f64; 6]) -> f64 {
        ciede2000(Lab::new(p[0], p[1], p[2]), Lab::new(p[3], p[4], p[5]))
    }

    #[test]
    fn matches_reference_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2000);
        for _ in 0..20 {
            let p: [f64; 6] = [
                rng.random_range(0.0..100.0),
                rng.random_range(-128.0..127.0),
                rng.random_range(-128.0..127.0),
                rng.random_range(0.0..100.0),
                rng.random_range(-128.0..127.0),
                rng.random_range(-128.0..127.0),
            ];
            let r = reference(p[0], p[1], p[2], p[3], p[4], p[5]);
            assert!((de(p) - r).abs() < 1e-4, "{p:?}: {} vs {r}", de(p));
        }
    }

    #[test]
    fn published_pairs() {
        // Sharma, Wu & Dalal test data.
        let cases = [
            ([50.0, 2.6772, -79.7751, 50.0, 0.0, -82.7485], 2.0425),
            ([50.0, 3.1571, -77.2803, 50.0, 0.0, -82.7485], 2.8615),
            ([50.0, 2.8361, -74.0200, 50.0, 0.0, -82.7485], 3.4412),
            ([50.0, 0.0, 0.0, 50.0, -1.0, 2.0], 2.3669),
            ([50.0, 2.5, 0.0, 73.0, 25.0, -18.0], 27.1492),
            ([50.0, 2.5, 0.0, 61.0, -5.0, 29.0], 22.8977),
            ([50.0, 2.5, 0.0, 56.0, -27.0, -3.0], 31.9030),
            ([50.0, 2.5, 0.0, 58.0, 24.0, 15.0], 19.4535),
            ([60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387], 1.2644),
        ];
        for (p, expected) in cases {
            assert!((de(p) - expected).abs() < 1e-4, "{p:?}: {} vs {expected}", de(p));
            assert!((reference(p[0], p[1], p[2], p[3], p[4], p[5]) - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x = Lab::new(rng.random_range(0.0..100.0), rng.random_range(-128.0..127.0), rng.random_range(-128.0..127.0));
            let y = Lab::new(rng.random_range(0.0..100.0), rng.random_range(-128.0..127.0), rng.random_range(-128.0..127.0));
            assert_eq!(ciede2000(x, x), 0.0);
            let d = ciede2000(x, y);
            assert!(d > 0.0);
            assert!((d - ciede2000(y, x)).abs() < 1e-9);
        }
        let gray = Lab::new(40.0, 0.0, 0.0);
        assert_eq!(ciede2000(gray, gray), 0.0);
    }
}
