//! Plain-text instance files.
//!
//! ```text
//! groups=2, budget=3, levels=0;1;2, lipschitz=0.4, lambda=0.8, horizon=500
//! location_id,count_group_1,count_group_2,reward_weight
//! 1,10,0,1
//! 2,5,20,1
//! reward:
//! location_id,mu_1,mu_2,mu_3
//! 1,0.1,0.3,0.5
//! 2,0.0,0.2,0.2
//! ```
//!
//! The `reward_weight` column and the `reward:` section are optional. The
//! header also accepts `unit=`, `group_weights=` and `priority=` (1-based group
//! labels, most vulnerable first). Blank lines and `#` comments are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{normalize_counts, ProblemInstance};

use super::RewardModel;

const REWARD_SECTION: &str = "reward:";

struct Lines<'a> {
    path: String,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(n, l)| (n + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            path: path.display().to_string(),
            inner: iter.peekable(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner.next().ok_or_else(|| Error::Format {
            path: self.path.clone(),
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            column,
            message: message.into(),
        }
    }
}

fn parse_f64(lines: &Lines, line: usize, column: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| lines.err(line, column, format!("`{}` is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(lines.err(line, column, format!("`{}` is not finite", s.trim())));
    }
    Ok(v)
}

fn parse_list(lines: &Lines, line: usize, column: usize, s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|x| parse_f64(lines, line, column, x))
        .collect()
}

#[derive(Default)]
struct Header {
    groups: Option<usize>,
    budget: Option<f64>,
    levels: Option<Vec<f64>>,
    lipschitz: Option<f64>,
    lambda: Option<f64>,
    horizon: Option<usize>,
    unit: Option<f64>,
    group_weights: Option<Vec<f64>>,
    priority: Option<Vec<usize>>,
}

fn parse_header(lines: &mut Lines) -> Result<(usize, Header)> {
    let (ln, text) = lines.next_line("header line")?;
    let mut h = Header::default();
    for (col, field) in text.split(',').enumerate() {
        let col = col + 1;
        let (key, value) = field.split_once('=').ok_or_else(|| {
            lines.err(
                ln,
                col,
                format!("expected key=value, got `{}`", field.trim()),
            )
        })?;
        let value = value.trim();
        let as_count = |lines: &Lines| -> Result<usize> {
            value
                .parse()
                .map_err(|_| lines.err(ln, col, format!("`{value}` is not a non-negative integer")))
        };
        match key.trim() {
            "groups" => h.groups = Some(as_count(lines)?),
            "horizon" => h.horizon = Some(as_count(lines)?),
            "budget" => h.budget = Some(parse_f64(lines, ln, col, value)?),
            "lipschitz" => h.lipschitz = Some(parse_f64(lines, ln, col, value)?),
            "lambda" => h.lambda = Some(parse_f64(lines, ln, col, value)?),
            "unit" => h.unit = Some(parse_f64(lines, ln, col, value)?),
            "levels" => h.levels = Some(parse_list(lines, ln, col, value)?),
            "group_weights" => h.group_weights = Some(parse_list(lines, ln, col, value)?),
            "priority" => {
                let labels = value
                    .split(';')
                    .map(|x| match x.trim().parse::<usize>() {
                        Ok(g) if g >= 1 => Ok(g - 1),
                        _ => Err(lines.err(ln, col, format!("bad group label `{}`", x.trim()))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                h.priority = Some(labels);
            }
            other => return Err(lines.err(ln, col, format!("unknown header key `{other}`"))),
        }
    }
    Ok((ln, h))
}

/// Reads an instance file; the reward model is returned when the file has a
/// `reward:` section.
pub fn load_instance(path: impl AsRef<Path>) -> Result<(ProblemInstance, Option<RewardModel>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(path, &text);
    let (header_line, h) = parse_header(&mut lines)?;
    let missing = |key: &str| lines.err(header_line, 0, format!("header is missing `{key}`"));
    let groups = h.groups.ok_or_else(|| missing("groups"))?;
    let budget = h.budget.ok_or_else(|| missing("budget"))?;
    let levels = h.levels.clone().ok_or_else(|| missing("levels"))?;
    let lipschitz = h.lipschitz.ok_or_else(|| missing("lipschitz"))?;
    let lambda = h.lambda.ok_or_else(|| missing("lambda"))?;
    let horizon = h.horizon.ok_or_else(|| missing("horizon"))?;

    let (ln, columns) = lines.next_line("location column header")?;
    let n_cols = columns.split(',').count();
    let has_weights = match n_cols.checked_sub(groups + 1) {
        Some(0) => false,
        Some(1) => true,
        _ => {
            return Err(lines.err(
                ln,
                n_cols,
                format!(
                    "expected {} or {} columns for {groups} groups",
                    groups + 1,
                    groups + 2
                ),
            ))
        }
    };

    let mut counts = vec![Vec::new(); groups];
    let mut reward_weights = Vec::new();
    let mut row_lines = Vec::new();
    while let Some(&(ln, row)) = lines.inner.peek() {
        if row == REWARD_SECTION {
            break;
        }
        lines.inner.next();
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != n_cols {
            return Err(lines.err(ln, fields.len(), format!("expected {n_cols} columns")));
        }
        for g in 0..groups {
            let v = parse_f64(&lines, ln, g + 2, fields[g + 1])?;
            if v < 0.0 {
                return Err(lines.err(ln, g + 2, "counts must be non-negative"));
            }
            counts[g].push(v);
        }
        if has_weights {
            reward_weights.push(parse_f64(&lines, ln, groups + 2, fields[groups + 1])?);
        }
        row_lines.push(ln);
    }
    if row_lines.is_empty() {
        return Err(Error::Format {
            path: lines.path.clone(),
            message: "no location rows".into(),
        });
    }
    for (g, row) in counts.iter().enumerate() {
        if row.iter().sum::<f64>() <= 1e-6 {
            return Err(lines.err(
                row_lines[0],
                g + 2,
                format!("group {} has zero total count across locations", g + 1),
            ));
        }
    }

    let densities = normalize_counts(counts)?;
    let mut instance =
        ProblemInstance::new(densities, budget, vec![0.0], lipschitz, lambda, horizon)?;
    instance = instance.with_grid(levels.clone(), h.unit.unwrap_or(1.0))?;
    if has_weights {
        instance = instance.with_reward_weights(reward_weights)?;
    }
    if let Some(alpha) = h.group_weights {
        instance = instance.with_group_weights(alpha)?;
    }
    if let Some(order) = h.priority {
        instance = instance.with_priority(order)?;
    }

    let model = match lines.inner.next() {
        None => None,
        Some(_) => {
            let (ln, cols) = lines.next_line("reward column header")?;
            let j = levels.len();
            if cols.split(',').count() != j + 1 {
                return Err(lines.err(ln, 0, format!("reward header needs {} columns", j + 1)));
            }
            let mut mu = Vec::with_capacity(row_lines.len());
            for location in 0..row_lines.len() {
                let (ln, row) = lines.next_line("reward row")?;
                let fields: Vec<&str> = row.split(',').collect();
                if fields.len() != j + 1 {
                    return Err(lines.err(ln, fields.len(), format!("expected {} columns", j + 1)));
                }
                let values = fields[1..]
                    .iter()
                    .enumerate()
                    .map(|(k, s)| parse_f64(&lines, ln, k + 2, s))
                    .collect::<Result<Vec<_>>>()?;
                for (k, &v) in values.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(lines.err(ln, k + 2, format!("reward {v} outside [0, 1]")));
                    }
                    if k > 0 && v < values[k - 1] {
                        return Err(lines.err(
                            ln,
                            k + 2,
                            format!("reward curve of location {} decreases", location + 1),
                        ));
                    }
                    for m in 0..k {
                        let bound = lipschitz * (levels[k] - levels[m]);
                        if v - values[m] > bound + super::CURVE_TOLERANCE {
                            return Err(lines.err(
                                ln,
                                k + 2,
                                format!(
                                    "reward curve of location {} exceeds the Lipschitz bound",
                                    location + 1
                                ),
                            ));
                        }
                    }
                }
                mu.push(values);
            }
            if let Some((ln, _)) = lines.inner.next() {
                return Err(lines.err(ln, 0, "unexpected trailing content"));
            }
            Some(RewardModel::new(mu)?)
        }
    };
    Ok((instance, model))
}

/// Renders an instance (and optionally its reward curves) in the file format.
pub fn write_instance(instance: &ProblemInstance, model: Option<&RewardModel>) -> String {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::new();
    let _ = write!(
        out,
        "groups={}, budget={}, levels={}, lipschitz={}, lambda={}, horizon={}",
        instance.n_groups(),
        instance.budget(),
        join(instance.levels()),
        instance.lipschitz(),
        instance.lambda(),
        instance.horizon()
    );
    if instance.effort_unit() != 1.0 {
        let _ = write!(out, ", unit={}", instance.effort_unit());
    }
    if instance.group_weights().iter().any(|&a| a != 1.0) {
        let _ = write!(out, ", group_weights={}", join(instance.group_weights()));
    }
    if instance.priority().iter().enumerate().any(|(k, &g)| k != g) {
        let labels: Vec<String> = instance
            .priority()
            .iter()
            .map(|g| (g + 1).to_string())
            .collect();
        let _ = write!(out, ", priority={}", labels.join(";"));
    }
    out.push('\n');

    out.push_str("location_id");
    for g in 1..=instance.n_groups() {
        let _ = write!(out, ",count_group_{g}");
    }
    out.push_str(",reward_weight\n");
    for i in 0..instance.n_locations() {
        let _ = write!(out, "{}", i + 1);
        for row in instance.densities() {
            let _ = write!(out, ",{}", row[i]);
        }
        let _ = writeln!(out, ",{}", instance.reward_weights()[i]);
    }

    if let Some(model) = model {
        out.push_str(REWARD_SECTION);
        out.push('\n');
        out.push_str("location_id");
        for j in 1..=model.n_levels() {
            let _ = write!(out, ",mu_{j}");
        }
        out.push('\n');
        for (i, row) in model.rows().iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_instance(
    instance: &ProblemInstance,
    model: Option<&RewardModel>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, write_instance(instance, model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_instance, GenParams};

    const HAND: &str = "\
# two locations
groups=2, budget=3, levels=0;1;2, lipschitz=0.4, lambda=0.8, horizon=500
location_id,count_group_1,count_group_2,reward_weight
1,10,0,1
2,5,20,2

reward:
location_id,mu_1,mu_2,mu_3
1,0.1,0.3,0.5
2,0,0.2,0.2
";

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn hand_written_file_parses_literally() {
        let f = write_tmp(HAND);
        let (inst, model) = load_instance(f.path()).unwrap();
        assert_eq!(inst.n_locations(), 2);
        assert_eq!(inst.n_groups(), 2);
        assert_eq!(inst.budget(), 3.0);
        assert_eq!(inst.levels(), &[0.0, 1.0, 2.0]);
        assert_eq!(inst.lipschitz(), 0.4);
        assert_eq!(inst.lambda(), 0.8);
        assert_eq!(inst.horizon(), 500);
        assert_eq!(inst.densities()[0], vec![10.0 / 15.0, 5.0 / 15.0]);
        assert_eq!(inst.densities()[1], vec![0.0, 1.0]);
        assert_eq!(inst.reward_weights(), &[1.0, 2.0]);
        let model = model.unwrap();
        assert_eq!(model.rows(), &[vec![0.1, 0.3, 0.5], vec![0.0, 0.2, 0.2]]);
    }

    #[test]
    fn reward_section_is_optional() {
        let text = HAND.split("reward:").next().unwrap();
        let (_, model) = load_instance(write_tmp(text).path()).unwrap();
        assert!(model.is_none());
    }

    #[test]
    fn round_trip_generated_instance() {
        let (inst, model) = generate_instance(&GenParams::default()).unwrap();
        let inst = inst
            .with_group_weights(vec![4.0, 3.0, 2.0, 1.0])
            .unwrap()
            .with_priority(vec![1, 0, 2, 3])
            .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_instance(&inst, Some(&model), f.path()).unwrap();
        let (back, back_model) = load_instance(f.path()).unwrap();
        assert_eq!(back_model.unwrap(), model);
        assert_eq!(back.levels(), inst.levels());
        assert_eq!(back.budget(), inst.budget());
        assert_eq!(back.group_weights(), inst.group_weights());
        assert_eq!(back.priority(), inst.priority());
        for (a, b) in back
            .densities()
            .iter()
            .flatten()
            .zip(inst.densities().iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_count_group_is_rejected() {
        let text = HAND.replace("1,10,0,1\n2,5,20,2", "1,10,0,1\n2,5,0,2");
        match load_instance(write_tmp(&text).path()) {
            Err(Error::Parse {
                column, message, ..
            }) => {
                assert_eq!(column, 3);
                assert!(message.contains("group 2"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn decreasing_curve_names_row_and_column() {
        let text = HAND.replace("2,0,0.2,0.2", "2,0,0.2,0.1");
        match load_instance(write_tmp(&text).path()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!((line, column), (10, 4));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn steep_curve_is_rejected() {
        let text = HAND.replace("1,0.1,0.3,0.5", "1,0.1,0.9,0.9");
        assert!(matches!(
            load_instance(write_tmp(&text).path()),
            Err(Error::Parse { column: 3, .. })
        ));
    }

    #[test]
    fn malformed_header_is_rejected() {
        let text = HAND.replace("budget=3", "budget");
        assert!(matches!(
            load_instance(write_tmp(&text).path()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = HAND.replace("budget=3, ", "");
        assert!(load_instance(write_tmp(&text).path()).is_err());
        let text = HAND.replace("lambda=0.8", "lambda=abc");
        assert!(matches!(
            load_instance(write_tmp(&text).path()),
            Err(Error::Parse { column: 5, .. })
        ));
    }
}
