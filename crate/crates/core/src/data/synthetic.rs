//! Synthetic tables so that nothing in the test suite needs the external CSV.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::table::{Column, ColumnData, ColumnKind, RawTable};
use crate::error::{Error, Result};
use crate::seed;

/// Two-class Gaussian mixture with `d` numeric columns `f0..f{d-1}`.
/// Class means sit at `±class_sep/2` along every axis; unit variance.
pub fn gaussian_mixture(
    n: usize,
    d: usize,
    class_sep: f64,
    positive_fraction: f64,
    seed: u64,
) -> Result<RawTable> {
    if n < 4 || d == 0 || !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::InvalidArgument(
            "gaussian mixture needs n ≥ 4, d ≥ 1 and a fraction in [0, 1]".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<u8> = (0..n)
        .map(|_| u8::from(rng.random::<f64>() < positive_fraction))
        .collect();
    let mut cols = vec![Vec::with_capacity(n); d];
    for &y in &labels {
        let shift = if y == 1 { class_sep / 2.0 } else { -class_sep / 2.0 };
        for c in cols.iter_mut() {
            c.push(Some(shift + normal.sample(&mut rng)));
        }
    }
    let columns = cols
        .into_iter()
        .enumerate()
        .map(|(j, v)| Column {
            name: format!("f{j}"),
            kind: ColumnKind::Numeric,
            data: ColumnData::Numeric(v),
        })
        .collect();
    RawTable::new(columns, "label", labels)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn pick<'a>(rng: &mut seed::Rng, options: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut u = rng.random::<f64>() * total;
    for (name, w) in options {
        if u < *w {
            return name;
        }
        u -= w;
    }
    options.last().unwrap().0
}

/// A table with the exact column layout of the public stroke CSV whose
/// marginals roughly follow the published dataset: about 5% positives, stroke
/// risk driven mostly by age, weakly by hypertension, heart disease and glucose,
/// and almost not at all by BMI (which has ~4% missing cells).
pub fn stroke_like(n: usize, seed: u64) -> Result<RawTable> {
    if n < 4 {
        return Err(Error::InvalidArgument("stroke_like needs n ≥ 4".into()));
    }
    let mut rng = seed::rng(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let g = |rng: &mut seed::Rng, mu: f64, sd: f64| mu + sd * std_normal.sample(rng);

    let mut id = Vec::with_capacity(n);
    let mut gender = Vec::with_capacity(n);
    let mut age = Vec::with_capacity(n);
    let mut hyp = Vec::with_capacity(n);
    let mut heart = Vec::with_capacity(n);
    let mut married = Vec::with_capacity(n);
    let mut work = Vec::with_capacity(n);
    let mut residence = Vec::with_capacity(n);
    let mut glucose = Vec::with_capacity(n);
    let mut bmi = Vec::with_capacity(n);
    let mut smoking = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);

    for i in 0..n {
        let a: f64 = rng.random_range(0.08..82.0);
        let a = if a >= 2.0 { a.round() } else { (a * 100.0).round() / 100.0 };
        let u: f64 = rng.random();
        let sex = if u < 0.0002 {
            "Other"
        } else if u < 0.4142 {
            "Male"
        } else {
            "Female"
        };
        let male = sex == "Male";
        let h = u8::from(rng.random::<f64>() < 0.005 + 0.45 * sigmoid((a - 65.0) / 10.0));
        let boost = if male { 1.5 } else { 1.0 };
        let hd = u8::from(rng.random::<f64>() < 0.002 + 0.32 * sigmoid((a - 72.0) / 7.0) * boost);
        let diabetic = rng.random::<f64>() < 0.05 + 0.22 * sigmoid((a - 55.0) / 10.0);
        let glu = if diabetic { g(&mut rng, 205.0, 35.0) } else { g(&mut rng, 92.0, 18.0) };
        let glu = (glu.clamp(55.0, 272.0) * 100.0).round() / 100.0;
        let b = if a < 18.0 { g(&mut rng, 20.0, 4.5) } else { g(&mut rng, 30.5, 7.0) };
        let b = (b.clamp(10.0, 98.0) * 10.0).round() / 10.0;
        let logit = -7.3 + 0.072 * a + 0.25 * f64::from(h) + 0.25 * f64::from(hd) + 0.006 * (glu - 100.0);
        let stroke = u8::from(rng.random::<f64>() < sigmoid(logit));
        let missing_bmi = rng.random::<f64>() < if stroke == 1 { 0.16 } else { 0.033 };

        let is_married = a >= 18.0 && rng.random::<f64>() < 0.85;
        let wt = if a < 16.0 {
            "children"
        } else {
            pick(
                &mut rng,
                &[
                    ("Private", 0.66),
                    ("Self-employed", 0.12 + 0.002 * a),
                    ("Govt_job", 0.15),
                    ("Never_worked", 0.006),
                ],
            )
        };
        let smk = if a < 16.0 {
            pick(&mut rng, &[("Unknown", 0.85), ("never smoked", 0.15)])
        } else {
            pick(
                &mut rng,
                &[
                    ("never smoked", 0.40),
                    ("formerly smoked", 0.20),
                    ("smokes", 0.18),
                    ("Unknown", 0.22),
                ],
            )
        };
        let res = if rng.random::<f64>() < 0.508 { "Urban" } else { "Rural" };

        id.push(Some((i + 1).to_string()));
        gender.push(Some(sex.to_string()));
        age.push(Some(a));
        hyp.push(Some(f64::from(h)));
        heart.push(Some(f64::from(hd)));
        married.push(Some(if is_married { "Yes" } else { "No" }.to_string()));
        work.push(Some(wt.to_string()));
        residence.push(Some(res.to_string()));
        glucose.push(Some(glu));
        bmi.push((!missing_bmi).then_some(b));
        smoking.push(Some(smk.to_string()));
        labels.push(stroke);
    }

    let cat = |name: &str, kind: ColumnKind, v: Vec<Option<String>>| Column {
        name: name.into(),
        kind,
        data: ColumnData::Categorical(v),
    };
    let num = |name: &str, v: Vec<Option<f64>>| Column {
        name: name.into(),
        kind: ColumnKind::Numeric,
        data: ColumnData::Numeric(v),
    };
    RawTable::new(
        vec![
            cat("id", ColumnKind::Id, id),
            cat("gender", ColumnKind::Categorical, gender),
            num("age", age),
            num("hypertension", hyp),
            num("heart_disease", heart),
            cat("ever_married", ColumnKind::Categorical, married),
            cat("work_type", ColumnKind::Categorical, work),
            cat("Residence_type", ColumnKind::Categorical, residence),
            num("avg_glucose_level", glucose),
            num("bmi", bmi),
            cat("smoking_status", ColumnKind::Categorical, smoking),
        ],
        "stroke",
        labels,
    )
}
