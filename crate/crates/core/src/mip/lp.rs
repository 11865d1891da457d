//! LP text export; variables are `x_j_k_t`, `y_k_m`, `z_k_m` and `u_w_t`
//! with slots and billing intervals counted from 1.

use std::fmt::Write as _;

use super::{value_function, MipError, MipInstance};

const TERMS_PER_LINE: usize = 8;

struct Expr(Vec<(i64, String)>);

impl Expr {
    fn new() -> Self {
        Expr(Vec::new())
    }

    fn add(&mut self, coef: i64, var: String) {
        if coef != 0 {
            self.0.push((coef, var));
        }
    }

    fn render(&self, out: &mut String) {
        for (i, (c, v)) in self.0.iter().enumerate() {
            if i > 0 && i % TERMS_PER_LINE == 0 {
                out.push_str("\n   ");
            }
            let sign = if *c < 0 { '-' } else { '+' };
            match c.abs() {
                1 => write!(out, " {sign} {v}"),
                a => write!(out, " {sign} {a} {v}"),
            }
            .unwrap();
        }
        if self.0.is_empty() {
            out.push_str(" 0 x_0_0_1");
        }
    }
}

fn x(j: usize, k: usize, t: u32) -> String {
    format!("x_{j}_{k}_{t}")
}

struct Rows {
    text: String,
    count: usize,
}

impl Rows {
    fn push(&mut self, name: String, expr: &Expr, sense: &str, rhs: i64) {
        write!(self.text, " {name}:").unwrap();
        expr.render(&mut self.text);
        writeln!(self.text, " {sense} {rhs}").unwrap();
        self.count += 1;
    }
}

/// The slot model of `inst` in LP format.
pub fn export_lp(inst: &MipInstance) -> Result<String, MipError> {
    inst.validate()?;
    let (n, nk, t_max, m_max, l) =
        (inst.tasks.len(), inst.resources.len(), inst.slots, inst.intervals(), inst.per_billing);
    let mut out = String::from("\\ slot model\nMaximize\n obj:");
    let mut obj = Expr::new();
    for (w, wf) in inst.workflows.iter().enumerate() {
        for t in 1..=t_max {
            obj.add(value_function(wf.deadline, t), format!("u_{w}_{t}"));
        }
    }
    obj.render(&mut out);
    out.push_str("\nSubject To\n");
    let mut rows = Rows { text: String::new(), count: 0 };

    for j in 0..n {
        let mut e = Expr::new();
        for k in 0..nk {
            for t in 1..=t_max {
                e.add(1, x(j, k, t));
            }
        }
        rows.push(format!("c1_{j}"), &e, "=", 1);
    }
    let occupying = |k: usize, t: u32, e: &mut Expr| {
        for j in 0..n {
            let lo = (t.saturating_sub(inst.runtime(j, k)) + 1).max(1);
            for r in lo..=t {
                e.add(1, x(j, k, r));
            }
        }
    };
    for k in 0..nk {
        for m in 1..=m_max {
            let mut e = Expr::new();
            for t in (m - 1) * l + 1..=m * l {
                occupying(k, t, &mut e);
            }
            e.add(-1, format!("z_{k}_{m}"));
            rows.push(format!("c2_{k}_{m}"), &e, "=", 0);
        }
    }
    for k in 0..nk {
        for m in 1..=m_max {
            let mut e = Expr::new();
            e.add(1, format!("z_{k}_{m}"));
            e.add(-i64::from(l), format!("y_{k}_{m}"));
            rows.push(format!("c3a_{k}_{m}"), &e, "<=", 0);
            let mut e = Expr::new();
            e.add(1, format!("y_{k}_{m}"));
            e.add(-1, format!("z_{k}_{m}"));
            rows.push(format!("c3b_{k}_{m}"), &e, "<=", 0);
        }
    }
    for k in 0..nk {
        for t in 1..=t_max {
            let mut e = Expr::new();
            occupying(k, t, &mut e);
            rows.push(format!("c4_{k}_{t}"), &e, "<=", 1);
        }
    }
    for &(p, c) in &inst.edges {
        let mut e = Expr::new();
        for k in 0..nk {
            for t in 1..=t_max {
                e.add(i64::from(t), x(c, k, t));
                e.add(-i64::from(t + inst.runtime(p, k)), x(p, k, t));
            }
        }
        rows.push(format!("c5_{c}_{p}"), &e, ">=", 0);
    }
    for (j, task) in inst.tasks.iter().enumerate() {
        let mut e = Expr::new();
        for k in 0..nk {
            for t in 1..=t_max {
                e.add(i64::from(t), x(j, k, t));
            }
        }
        rows.push(format!("c6_{j}"), &e, ">=", i64::from(inst.workflows[task.workflow].arrival));
    }
    for w in 0..inst.workflows.len() {
        let mut e = Expr::new();
        for t in 1..=t_max {
            e.add(1, format!("u_{w}_{t}"));
        }
        rows.push(format!("c7_{w}"), &e, "=", 1);
    }
    for (j, task) in inst.tasks.iter().enumerate() {
        let mut e = Expr::new();
        for k in 0..nk {
            for t in 1..=t_max {
                e.add(i64::from(t + inst.runtime(j, k) - 1), x(j, k, t));
            }
        }
        for t in 1..=t_max {
            e.add(-i64::from(t), format!("u_{}_{t}", task.workflow));
        }
        rows.push(format!("c8_{j}"), &e, "<=", 0);
    }
    for m in 1..=m_max {
        let mut e = Expr::new();
        for (k, r) in inst.resources.iter().enumerate() {
            e.add(r.cost as i64, format!("y_{k}_{m}"));
        }
        rows.push(format!("c9_{m}"), &e, "<=", inst.budget as i64);
    }
    out.push_str(&rows.text);

    out.push_str("Bounds\n");
    for k in 0..nk {
        for m in 1..=m_max {
            writeln!(out, " 0 <= z_{k}_{m} <= {l}").unwrap();
        }
    }
    out.push_str("Generals\n");
    let mut line = Vec::new();
    let flush = |out: &mut String, line: &mut Vec<String>| {
        if !line.is_empty() {
            writeln!(out, " {}", line.join(" ")).unwrap();
            line.clear();
        }
    };
    for k in 0..nk {
        for m in 1..=m_max {
            line.push(format!("z_{k}_{m}"));
            if line.len() == TERMS_PER_LINE {
                flush(&mut out, &mut line);
            }
        }
    }
    flush(&mut out, &mut line);
    out.push_str("Binaries\n");
    let binaries = (0..n)
        .flat_map(|j| (0..nk).flat_map(move |k| (1..=t_max).map(move |t| x(j, k, t))))
        .chain((0..nk).flat_map(|k| (1..=m_max).map(move |m| format!("y_{k}_{m}"))))
        .chain((0..inst.workflows.len()).flat_map(|w| (1..=t_max).map(move |t| format!("u_{w}_{t}"))));
    for b in binaries {
        line.push(b);
        if line.len() == TERMS_PER_LINE {
            flush(&mut out, &mut line);
        }
    }
    flush(&mut out, &mut line);
    out.push_str("End\n");
    Ok(out)
}

/// Variable and row counts of an LP document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LpSummary {
    pub constraints: usize,
    pub binaries: usize,
    pub generals: usize,
    /// Row count per family number.
    pub per_family: [usize; 10],
}

/// Counts expected for the export of `inst`.
pub fn lp_summary(inst: &MipInstance) -> LpSummary {
    let (n, nk, t, m, w) =
        (inst.tasks.len(), inst.resources.len(), inst.slots as usize, inst.intervals() as usize, inst.workflows.len());
    let mut per_family = [0; 10];
    per_family[1] = n;
    per_family[2] = nk * m;
    per_family[3] = 2 * nk * m;
    per_family[4] = nk * t;
    per_family[5] = inst.edges.len();
    per_family[6] = n;
    per_family[7] = w;
    per_family[8] = n;
    per_family[9] = m;
    LpSummary {
        constraints: per_family.iter().sum(),
        binaries: n * nk * t + nk * m + w * t,
        generals: nk * m,
        per_family,
    }
}

/// Reads counts back from LP text written by [`export_lp`].
pub fn parse_lp_summary(text: &str) -> Result<LpSummary, String> {
    #[derive(PartialEq)]
    enum Section {
        Head,
        Objective,
        Rows,
        Bounds,
        Generals,
        Binaries,
        End,
    }
    let mut section = Section::Head;
    let mut s = LpSummary::default();
    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let next = match trimmed.to_ascii_lowercase().as_str() {
            "maximize" | "minimize" => Some(Section::Objective),
            "subject to" | "st" | "s.t." => Some(Section::Rows),
            "bounds" => Some(Section::Bounds),
            "generals" | "general" => Some(Section::Generals),
            "binaries" | "binary" => Some(Section::Binaries),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(n) = next {
            section = n;
            continue;
        }
        match section {
            Section::Rows => {
                let continuation = line.starts_with("  ");
                if continuation {
                    continue;
                }
                let name = trimmed.split(':').next().ok_or("row without name")?;
                if !trimmed.contains(':') {
                    return Err(format!("row without name: {trimmed}"));
                }
                s.constraints += 1;
                let family = name
                    .strip_prefix('c')
                    .and_then(|r| r.chars().next())
                    .and_then(|c| c.to_digit(10))
                    .ok_or_else(|| format!("unknown row {name}"))?;
                s.per_family[family as usize] += 1;
            }
            Section::Generals => s.generals += trimmed.split_whitespace().count(),
            Section::Binaries => s.binaries += trimmed.split_whitespace().count(),
            Section::Head => return Err(format!("text before objective: {trimmed}")),
            Section::End => return Err("text after End".into()),
            Section::Objective | Section::Bounds => {}
        }
    }
    if section != Section::End {
        return Err("missing End".into());
    }
    Ok(s)
}
