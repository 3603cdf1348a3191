use super::{check_temperature, log_softmax, LossResult};
use crate::error::{Error, Result};

/// Cross-entropy between temperature-scaled teacher and student score
/// distributions, summed over queries.
///
/// Each query's softmax runs over its own candidate list. The gradient is
/// with respect to the student scores: `(P_s - P_t) / tau_kd`.
pub fn distillation_loss(
    student_scores: &[Vec<f64>],
    teacher_scores: &[Vec<f64>],
    tau_kd: f64,
) -> Result<LossResult<Vec<Vec<f64>>>> {
    check_temperature(tau_kd, "tau_kd")?;
    if student_scores.len() != teacher_scores.len() {
        return Err(Error::input(format!(
            "{} student lists vs {} teacher lists",
            student_scores.len(),
            teacher_scores.len()
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(student_scores.len());
    for (i, (student, teacher)) in student_scores.iter().zip(teacher_scores).enumerate() {
        if student.is_empty() || student.len() != teacher.len() {
            return Err(Error::input(format!(
                "query {i}: student has {} scores, teacher {}",
                student.len(),
                teacher.len()
            )));
        }
        if student.iter().chain(teacher).any(|s| !s.is_finite()) {
            return Err(Error::input(format!("query {i}: non-finite score")));
        }
        let scale = |xs: &[f64]| xs.iter().map(|x| x / tau_kd).collect::<Vec<_>>();
        let log_ps = log_softmax(&scale(student));
        let log_pt = log_softmax(&scale(teacher));
        let mut g = Vec::with_capacity(student.len());
        for (&lps, &lpt) in log_ps.iter().zip(&log_pt) {
            let pt = lpt.exp();
            value -= pt * lps;
            g.push((lps.exp() - pt) / tau_kd);
        }
        grad.push(g);
    }
    Ok(LossResult { value, grad })
}
