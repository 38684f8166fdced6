use crate::imageio::Image;

/// PSNR from a two-loop squared-error sum.
pub fn naive_psnr(a: &Image, b: &Image, peak: f64) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..a.data.len() {
        for j in i..=i {
            let d = a.data[i] as f64 - b.data[j] as f64;
            sq += d * d;
            n += 1;
        }
    }
    let mse = sq / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak).log10() - 10.0 * mse.log10()
    }
}

/// SSIM evaluated window by window with a full 2-D Gaussian kernel.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (n, sigma) = (11usize, 1.5f64);
    let (c1, c2) = (1e-4, 9e-4);
    let mut k = vec![vec![0.0; n]; n];
    let mut ks = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            ks += *v;
        }
    }
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..a.channels {
        for y0 in 0..=a.height - n {
            for x0 in 0..=a.width - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let w = k[i][j] / ks;
                        ma += w * a.get(c, x0 + j, y0 + i) as f64;
                        mb += w * b.get(c, x0 + j, y0 + i) as f64;
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let w = k[i][j] / ks;
                        let da = a.get(c, x0 + j, y0 + i) as f64 - ma;
                        let db = b.get(c, x0 + j, y0 + i) as f64 - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                }
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}
