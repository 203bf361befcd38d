//! Writes the bundled synthetic mortality table (`data/synthetic_mortality.csv`).
//!
//! Log rates follow a smooth age schedule with age-specific linear decline,
//! a slowing improvement term, per-age AR(1) deviations and sampling noise.
//!
//! ```text
//! cargo run -p demogp --example make_synthetic -- data/synthetic_mortality.csv
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn base_rate(age: f64) -> f64 {
    0.008 * (-1.5 * age).exp() + 0.0003 + 0.000_02 * (0.1 * age).exp()
}

fn main() -> std::io::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic_mortality.csv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(1947);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let years: Vec<i32> = (1947..=2016).collect();

    let mut table = vec![vec![0.0; 101]; years.len()];
    for age in 0..=100u32 {
        let x = f64::from(age);
        let decline = 0.035 - 0.02 * x / 100.0;
        let sd = 0.02 + 0.03 * (-(x - 15.0).powi(2) / 200.0).exp();
        let mut dev = 0.0;
        for (j, &year) in years.iter().enumerate() {
            let s = f64::from(year - 1980);
            dev = 0.8 * dev + 0.02 * std_normal.sample(&mut rng);
            let log_rate = base_rate(x).ln() - decline * s + 0.0002 * s * s + dev + sd * std_normal.sample(&mut rng);
            table[j][age as usize] = log_rate.exp();
        }
    }

    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "year,age,rate")?;
    for (j, year) in years.iter().enumerate() {
        for (age, rate) in table[j].iter().enumerate() {
            writeln!(out, "{year},{age},{rate}")?;
        }
    }
    out.flush()
}
