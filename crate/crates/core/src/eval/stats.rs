use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    None,
    P05,
    P01,
    P001,
}

impl Tier {
    pub fn from_p(p: f64) -> Tier {
        if p < 0.001 {
            Tier::P001
        } else if p < 0.01 {
            Tier::P01
        } else if p < 0.05 {
            Tier::P05
        } else {
            Tier::None
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Tier::None => "",
            Tier::P05 => "*",
            Tier::P01 => "†",
            Tier::P001 => "‡",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub tier: Tier,
}

/// Two-sided paired t-test on `a - b`.
///
/// All-zero differences give `t = 0, p = 1`; constant nonzero differences
/// give an infinite `t` and `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Stats(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::Stats(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0)
    } else if var == 0.0 {
        (f64::INFINITY.copysign(mean), 0.0)
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
        (t, (2.0 * dist.sf(t.abs())).min(1.0))
    };
    Ok(TTest {
        t,
        p,
        df,
        tier: Tier::from_p(p),
    })
}
